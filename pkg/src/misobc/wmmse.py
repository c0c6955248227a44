"""Rate-WMMSE alternating optimization for sum-rate and max-min objectives.

The MSE helpers follow the textbook conventions: ``T`` is the received
power at the decoder including the unit noise, the MMSE equalizer is
``p^H h / T`` and the weight is the reciprocal MSE, so that
``xi = u * eps - log2(u)`` equals ``1 - R`` at the MMSE point.

The optimizer itself works with natural logarithms.  With
``u = 1 / eps_old`` the function ``1 + ln(u) - u * eps(P)`` is a concave
lower bound of the link rate in nats that touches it at the current
precoders, which is what makes the alternating loop monotone for block
minima and max-min objectives alike.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _inner_py, kernels
from .channel import ChannelSet, sample_conditional, stack_channels
from .errors import ConfigurationError, InvariantViolation
from .rate import PrecoderSet, RateReport, _report, link_rates, received_gains
from .strategy import stream_layout

__all__ = [
    "SolveOptions",
    "WmmseState",
    "SolveResult",
    "mse",
    "mmse_equalizer",
    "mmse_weight",
    "rate_wmmse_gap",
    "link_statistics",
    "Problem",
    "build_problem",
    "precoder_update_sumrate",
    "precoder_update_maxmin",
    "ao_solve",
    "saa_solve",
    "write_trace",
]

MONOTONE_SLACK = 1e-9
# "closed-form" is the regularized solve with a Newton search on the power
# multiplier and only applies when every block is one link (MU-LP sum rate)
INNER_SOLVERS = ("auto", "closed-form", "barrier")
LN2 = math.log(2.0)


@dataclass(frozen=True)
class SolveOptions:
    convergence_tol: float = 1e-4
    max_iterations: int = 200
    inner_solver: str = "auto"
    inner_tol: float = 1e-7
    inner_max_iter: int = 400
    seed: int = 0

    def __post_init__(self):
        if not self.convergence_tol > 0:
            raise ConfigurationError("convergence_tol must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be a positive integer")
        if not self.inner_tol > 0:
            raise ConfigurationError("inner_tol must be positive")
        if self.inner_solver not in INNER_SOLVERS:
            raise ConfigurationError(f"unknown inner solver {self.inner_solver!r}")


@dataclass
class WmmseState:
    """Equalizers and weights per decode link (sample-major for SAA)."""

    equalizers: np.ndarray
    weights: np.ndarray
    precoders: PrecoderSet
    objective_trace: list = field(default_factory=list)
    iteration: int = 0

    def __post_init__(self):
        if np.any(~(np.asarray(self.weights) > 0)):
            raise InvariantViolation("MMSE weights must be positive")


@dataclass
class SolveResult:
    precoders: PrecoderSet
    report: RateReport
    trace: list
    iterations: int
    converged: bool
    kkt_residual: float
    power_slackness: float
    backend: str = kernels.BACKEND
    flags: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.precoders, self.report, self.trace))

    @property
    def objective_trace(self):
        return [row["objective"] for row in self.trace]


# --------------------------------------------------------------------------
# MSE primitives on a single channel set


def _link_terms(cs, ps, layout, link):
    j, k = link
    idx = layout.link_index(j, k)
    gains = received_gains(cs.true_channels[j][None, :], ps.matrix())[0]
    e = complex(np.conj(cs.true_channels[j]) @ ps.matrix()[k])
    interference = float(np.sum(gains[layout.interference[idx]]))
    T = abs(e) ** 2 + interference + 1.0
    return e, interference, T


def mse(cs, ps, layout, link, g):
    """``|g|^2 T - 2 Re(g h^H p) + 1`` for decode link ``(j, k)``."""
    e, _, T = _link_terms(cs, ps, layout, link)
    return float(abs(g) ** 2 * T - 2.0 * (g * e).real + 1.0)


def mmse_equalizer(cs, ps, layout, link):
    e, _, T = _link_terms(cs, ps, layout, link)
    return complex(np.conj(e) / T)


def mmse_weight(mmse_value):
    if not mmse_value > 0:
        raise InvariantViolation(f"MMSE must be positive, got {mmse_value}")
    return 1.0 / mmse_value


def rate_wmmse_gap(cs, ps, layout, link):
    """``xi_MMSE - (1 - R)`` for one link; zero up to rounding."""
    e, interference, T = _link_terms(cs, ps, layout, link)
    g = np.conj(e) / T
    eps = abs(g) ** 2 * T - 2.0 * (g * e).real + 1.0
    u = mmse_weight(eps)
    xi = u * eps - math.log2(u)
    rate = math.log2(1.0 + abs(e) ** 2 / (1.0 + interference))
    return float(xi - (1.0 - rate))


# --------------------------------------------------------------------------
# Surrogate construction


def link_statistics(H, X, layout):
    """MMSE equalizers and weights for every sample and link.

    ``H`` is ``(N, K, M)``, ``X`` the stacked ``(S, M)`` precoders.  Returns
    ``(g, u)`` each of shape ``(N, L)``.
    """
    E = np.conj(H) @ X.T  # (N, K, S): h_j^H p_s
    dec = np.array([j for j, _ in layout.links], dtype=int)
    st = np.array([s for _, s in layout.links], dtype=int)
    rows = E[:, dec, :]
    e_own = rows[:, np.arange(len(st)), st]
    g2 = rows.real ** 2 + rows.imag ** 2
    T = np.abs(e_own) ** 2 + np.sum(g2 * layout.interference, axis=-1) + 1.0
    g = np.conj(e_own) / T
    eps = 1.0 - np.abs(e_own) ** 2 / T
    eps = np.maximum(eps, np.finfo(float).tiny)
    return g, 1.0 / eps


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the alternating loop needs about one instance."""

    H: np.ndarray
    layout: object
    objective: str
    mode: int
    order: np.ndarray
    block_ptr: np.ndarray
    kind: np.ndarray
    link_stream: np.ndarray
    smask: np.ndarray
    pmax: float
    allocation: str

    @property
    def num_streams(self):
        return self.smask.shape[1]

    def true_objective(self, X):
        """Objective in bits/s/Hz and the per-link averaged rates."""
        lr = link_rates(self.H, X, self.layout).mean(axis=0)
        return self.objective_from_links(lr), lr

    def objective_from_links(self, lr):
        r = lr[self.order]
        if self.mode == 1:
            return _inner_py.water_level(r[self.kind == 0], r[self.kind == 1].min())
        bp = self.block_ptr
        return float(sum(r[bp[i]:bp[i + 1]].min() for i in range(len(bp) - 1)))

    def surrogate(self, X):
        """Coefficients ``(A, b, c)`` of the nats surrogate at precoders ``X``."""
        g, u = link_statistics(self.H, X, self.layout)
        g, u = g[:, self.order], u[:, self.order]
        dec = np.array([self.layout.links[i][0] for i in self.order], dtype=int)
        Hd = self.H[:, dec, :]  # (N, L, M)
        N = self.H.shape[0]
        ug2 = u * (g.real ** 2 + g.imag ** 2)
        A = np.einsum("nl,nli,nlj->lij", ug2, Hd, Hd.conj()) / N
        b = np.einsum("nl,nli->li", u * np.conj(g), Hd) / N
        c = np.mean(1.0 + np.log(u) - u - ug2, axis=0)
        return A, b, c


def build_problem(H, config, objective, pmax, layout=None):
    """Arrange decode links into objective blocks.

    Sum objective: one block per stream (the stream rate is the minimum
    over its decoders; for RS the common block adds the common rate).
    Max-min: a single block of all links, except for RS which uses the
    water-filling form over private and common links.
    """
    if objective not in ("sum", "maxmin"):
        raise ConfigurationError(f"objective must be 'sum' or 'maxmin', got {objective!r}")
    H = np.asarray(H, dtype=complex)
    if H.ndim == 2:
        H = H[None]
    if layout is None:
        layout = stream_layout(config)
    K = layout.num_users
    S = layout.num_streams
    L = len(layout.links)
    streams = np.array([s for _, s in layout.links], dtype=int)
    mode = 0
    kind = np.zeros(L, dtype=np.intp)
    if objective == "sum":
        blocks = layout.stream_blocks()
        order = np.concatenate([np.array(b, dtype=int) for b in blocks if b])
        sizes = [len(b) for b in blocks if b]
        block_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
    elif layout.kind == "RS1":
        mode = 1
        order = np.arange(L)
        kind = (streams[order] == K).astype(np.intp)
        block_ptr = np.array([0, L], dtype=np.intp)
    else:
        order = np.arange(L)
        block_ptr = np.array([0, L], dtype=np.intp)
    own = np.zeros((L, S), dtype=bool)
    own[np.arange(L), streams] = True
    smask = (own | layout.interference)[order].astype(float)
    allocation = "mmf" if (layout.kind == "RS1" and objective == "maxmin") else "equal"
    return Problem(H, layout, objective, mode, order, block_ptr, kind,
                   streams[order].astype(np.intp), smask, float(pmax), allocation)


def _inner(problem, X, w0, opts):
    A, b, c = problem.surrogate(X)
    return kernels.inner_solve(
        A, b, c, problem.link_stream, problem.smask, problem.pmax, problem.mode,
        block_ptr=problem.block_ptr, kind=problem.kind, w0=w0, x0=X,
        tol=opts.inner_tol, max_iter=opts.inner_max_iter, method=opts.inner_solver,
    )


def _problem_from(cs_or_samples, config, objective, P):
    if isinstance(cs_or_samples, ChannelSet):
        H = cs_or_samples.true_channels[None]
        ref = cs_or_samples
    else:
        H = stack_channels(cs_or_samples)
        ref = cs_or_samples[0]
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(ref, use_estimates=not isinstance(cs_or_samples, ChannelSet))
    return build_problem(H, config, objective, P)


def precoder_update_sumrate(cs, precoders, config, P, opts=SolveOptions()):
    """One precoder step of the sum-rate loop with equalizers/weights fixed at ``precoders``.

    ``cs`` is a channel set or a list of SAA samples.  For MU-LP every
    block is a single link and the step is the closed-form regularized
    solve; NOMA and RS need the barrier solver because their stream rates
    are minima over several decoders.
    """
    problem = _problem_from(cs, config, "sum", P)
    out = _inner(problem, precoders.matrix(), None, opts)
    return PrecoderSet.from_matrix(out["x"], config.num_users, P), out


def precoder_update_maxmin(cs, precoders, config, P, opts=SolveOptions()):
    """Max-min counterpart of :func:`precoder_update_sumrate`."""
    problem = _problem_from(cs, config, "maxmin", P)
    out = _inner(problem, precoders.matrix(), None, opts)
    if out["rel_gap"] > opts.inner_tol * 10:
        warnings.warn(f"max-min inner solve stopped at relative gap {out['rel_gap']:.2e}", RuntimeWarning)
    return PrecoderSet.from_matrix(out["x"], config.num_users, P), out


def _check_init(init, K, M, config, P):
    if init.num_users != K or init.num_antennas != M:
        raise ConfigurationError("initial precoders do not match the channel dimensions")
    if (init.common_precoder is not None) != config.common_stream_present:
        raise ConfigurationError("initial precoders do not match the stream layout")
    if init.total_power() > P * (1 + 1e-8):
        raise ConfigurationError("initial precoders exceed the power budget")


def _run(problem, config, init, opts):
    K = config.num_users
    P = problem.pmax
    X = init.matrix().copy()
    obj, lr = problem.true_objective(X)
    trace = [{"iteration": 0, "objective": obj, "power_used": float(np.sum(np.abs(X) ** 2)),
              "max_kkt_residual": float("nan")}]
    w = None
    converged = False
    kkt = float("nan")
    slack = 0.0
    flags = []
    it = 0
    for it in range(1, opts.max_iterations + 1):
        out = _inner(problem, X, w, opts)
        w = out["w"]
        kkt = float(out["rel_gap"])
        Xn = np.asarray(out["x"])
        power = float(np.sum(np.abs(Xn) ** 2))
        slack = abs(float(out["mu"]) * (P - power)) / max(P, 1.0)
        new_obj, new_lr = problem.true_objective(Xn)
        if new_obj < obj - MONOTONE_SLACK:
            raise InvariantViolation(
                f"objective decreased from {obj:.12g} to {new_obj:.12g} at iteration {it}"
            )
        if new_obj >= obj:
            X, lr = Xn, new_lr
            delta, obj = new_obj - obj, new_obj
        else:
            delta = 0.0
        trace.append({"iteration": it, "objective": obj, "power_used": float(np.sum(np.abs(X) ** 2)),
                      "max_kkt_residual": kkt})
        if delta < opts.convergence_tol:
            converged = True
            break
    if not converged:
        flags.append("max_iterations")
    ps = PrecoderSet.from_matrix(X, K, P)
    report = _report(problem.layout, lr, problem.allocation)
    return SolveResult(ps, report, trace, it, converged, kkt, slack, kernels.BACKEND, flags)


def ao_solve(cs, config, objective, init, opts=SolveOptions()):
    """Alternate MMSE equalizer/weight updates with precoder updates.

    Returns a :class:`SolveResult`, which also unpacks as
    ``(precoders, report, trace)``.  Rates are evaluated on the true
    channels of ``cs``.
    """
    if config.num_users != cs.num_users:
        raise ConfigurationError("strategy user count does not match the channels")
    P = init.power_budget
    _check_init(init, cs.num_users, cs.num_antennas, config, P)
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(cs)
    problem = build_problem(cs.true_channels, config, objective, P)
    return _run(problem, config, init, opts)


def saa_solve(estimate_cs, model, n_samples, config, objective, opts=SolveOptions(), init=None, P=None):
    """Optimize the sample-average objective over conditional channel draws.

    The decoding order is fixed from the estimates.  When the error
    variance is zero every sample equals the estimate, so the problem is
    solved on the estimate alone.
    """
    from .initpoint import mrt_svd_init

    if P is None:
        P = model.snr_power if init is None else init.power_budget
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(estimate_cs, use_estimates=True)
    est = estimate_cs.as_estimate()
    if init is None:
        init = mrt_svd_init(est, config, P)
    _check_init(init, est.num_users, est.num_antennas, config, P)
    if np.all(model.variance_for(est.variances) == 0):
        H = est.true_channels[None]
    else:
        H = stack_channels(sample_conditional(est, model, n_samples, opts.seed))
    problem = build_problem(H, config, objective, P)
    return _run(problem, config, init, opts)


def write_trace(trace, path):
    """CSV with columns iteration, objective, power_used, max_kkt_residual."""
    path = Path(path)
    cols = ["iteration", "objective", "power_used", "max_kkt_residual"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in trace:
            w.writerow([row[c] for c in cols])
    return path

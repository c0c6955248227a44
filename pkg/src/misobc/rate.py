"""Achievable rates for NOMA, MU-LP, 1-layer rate-splitting and OMA.

All rates are in bits/s/Hz with unit noise power.  The evaluators share one
vectorized core, :func:`link_rates`, which returns the rate of every decode
link of a :class:`~misobc.strategy.StreamLayout` for a stack of channel
realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import stack_channels
from .errors import ConfigurationError, InvariantViolation, UsageError
from .strategy import StrategyConfig, stream_layout

__all__ = [
    "PrecoderSet",
    "RateReport",
    "received_gains",
    "link_rates",
    "allocate_common",
    "noma_link_rate",
    "noma_rates",
    "mulp_rates",
    "rs_rates",
    "oma_rates",
    "oma_precoders",
    "evaluate",
    "ergodic_rates",
]

POWER_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    """Private precoders (rows of a ``(K, M)`` array), optional common precoder."""

    private_precoders: np.ndarray
    common_precoder: np.ndarray | None
    power_budget: float

    def __post_init__(self):
        p = np.array(self.private_precoders, dtype=complex, copy=True)
        if p.ndim != 2:
            raise ConfigurationError("private precoders must be a (K, M) array")
        p.setflags(write=False)
        object.__setattr__(self, "private_precoders", p)
        if self.common_precoder is not None:
            c = np.array(self.common_precoder, dtype=complex, copy=True).reshape(-1)
            if c.shape != (p.shape[1],):
                raise ConfigurationError("common precoder length must equal M")
            c.setflags(write=False)
            object.__setattr__(self, "common_precoder", c)
        if not self.power_budget > 0:
            raise ConfigurationError("power budget must be positive")
        object.__setattr__(self, "power_budget", float(self.power_budget))
        if self.total_power() > self.power_budget * (1 + POWER_RTOL):
            raise ConfigurationError(
                f"precoders use {self.total_power():.6g} > budget {self.power_budget:.6g}"
            )

    @classmethod
    def from_matrix(cls, matrix, K, power_budget):
        """Build from a stacked ``(S, M)`` array; row ``K`` (if any) is the common precoder."""
        matrix = np.asarray(matrix, dtype=complex)
        common = matrix[K] if matrix.shape[0] > K else None
        return cls(matrix[:K], common, power_budget)

    @property
    def num_users(self):
        return self.private_precoders.shape[0]

    @property
    def num_antennas(self):
        return self.private_precoders.shape[1]

    def matrix(self):
        """Stacked ``(S, M)`` array, common precoder last when present."""
        if self.common_precoder is None:
            return np.asarray(self.private_precoders)
        return np.vstack([self.private_precoders, self.common_precoder[None, :]])

    def stream_powers(self):
        return np.sum(np.abs(self.matrix()) ** 2, axis=1)

    def total_power(self):
        return float(np.sum(self.stream_powers()))

    def without_common(self):
        return PrecoderSet(self.private_precoders, None, self.power_budget)


@dataclass(frozen=True, eq=False)
class RateReport:
    """Per-user rates and aggregates.

    ``per_user_rates`` already include the common-rate share ``C_k`` for
    RS; ``private_rates`` holds the private parts alone.
    """

    per_user_rates: np.ndarray
    sum_rate: float
    mmf_rate: float
    per_link_rates: dict
    private_rates: np.ndarray
    common_rate: float | None = None
    common_allocation: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def num_users(self):
        return len(self.per_user_rates)

    def csv_fields(self):
        """Values in the order R_1..R_K, R_c, sum, mmf (R_c empty when absent)."""
        rc = "" if self.common_rate is None else float(self.common_rate)
        return [float(r) for r in self.per_user_rates] + [rc, float(self.sum_rate), float(self.mmf_rate)]


def received_gains(H, precoders):
    """``|h_j^H p_s|^2`` for every user ``j`` and stream ``s``.

    ``H`` is ``(K, M)`` or ``(N, K, M)``; the result is ``(K, S)`` or ``(N, K, S)``.
    """
    H = np.asarray(H, dtype=complex)
    P = np.asarray(precoders, dtype=complex)
    z = np.conj(H) @ P.T
    return z.real ** 2 + z.imag ** 2


def link_rates(H, precoders, layout):
    """Rates of all decode links, shape ``(L,)`` or ``(N, L)`` for stacked channels."""
    G = received_gains(H, precoders)
    dec = np.array([j for j, _ in layout.links], dtype=int)
    st = np.array([s for _, s in layout.links], dtype=int)
    rows = G[..., dec, :]
    sig = rows[..., np.arange(len(st)), st]
    interference = np.sum(rows * layout.interference, axis=-1)
    return np.log2(1.0 + sig / (1.0 + interference))


def allocate_common(private_rates, common_rate, policy="equal"):
    """Split ``common_rate`` among users.

    ``policy`` is ``"equal"``, ``"mmf"`` (raise the lowest totals first,
    i.e. water-filling on the private rates) or an explicit sequence of
    shares.
    """
    r = np.asarray(private_rates, dtype=float)
    K = r.size
    Rc = float(common_rate)
    if Rc < 0:
        raise InvariantViolation("negative common rate")
    if isinstance(policy, str):
        name = policy.lower().replace("-equalizing", "")
        if name == "equal":
            return np.full(K, Rc / K)
        if name == "mmf":
            return _water_fill(r, Rc)
        raise ConfigurationError(f"unknown allocation policy {policy!r}")
    C = np.asarray(policy, dtype=float).reshape(-1)
    if C.shape != (K,):
        raise ConfigurationError(f"explicit allocation needs {K} entries")
    if np.any(C < 0):
        raise InvariantViolation("common-rate shares must be nonnegative")
    if C.sum() > Rc * (1 + 1e-9) + 1e-12:
        raise InvariantViolation(f"allocation {C.sum():.6g} exceeds the common rate {Rc:.6g}")
    return C


def _water_fill(r, Rc):
    """Shares ``C_k = (t - r_k)^+`` with ``sum C_k = Rc``; exact via sorted levels."""
    K = r.size
    if Rc == 0:
        return np.zeros(K)
    s = np.sort(r)
    csum = np.cumsum(s)
    t = s[-1] + (Rc - (K * s[-1] - csum[-1])) / K
    for n in range(1, K + 1):
        level = (Rc + csum[n - 1]) / n
        if n == K or level <= s[n]:
            t = level
            break
    C = np.maximum(t - r, 0.0)
    total = C.sum()
    if total > 0:
        C *= Rc / total
    return C


def _report(layout, lr, alloc_policy="equal"):
    """Assemble a report from per-link rates ``lr`` (shape ``(L,)``)."""
    K = layout.num_users
    blocks = layout.stream_blocks()
    stream_rates = np.array([lr[list(b)].min() if b else 0.0 for b in blocks])
    private = stream_rates[:K].copy()
    links = {link: float(v) for link, v in zip(layout.links, lr)}
    if layout.kind == "RS1":
        Rc = float(stream_rates[K])
        C = allocate_common(private, Rc, alloc_policy)
        users = private + C
        return RateReport(users, float(users.sum()), float(users.min()), links, private, Rc, C)
    return RateReport(private.copy(), float(private.sum()), float(private.min()), links, private)


def _resolve(cs, config):
    if config.num_users != cs.num_users:
        raise ConfigurationError("strategy user count does not match the channels")
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(cs)
    return config


def _check_precoders(cs, ps, with_common):
    if ps.num_users != cs.num_users or ps.num_antennas != cs.num_antennas:
        raise ConfigurationError("precoder dimensions do not match the channels")
    if with_common and ps.common_precoder is None:
        raise ConfigurationError("rate-splitting needs a common precoder")
    if not with_common and ps.common_precoder is not None:
        raise ConfigurationError("this scheme takes no common precoder")


def noma_link_rate(cs, ps, layout, decoder, stream):
    """Rate at which ``decoder`` can decode ``stream`` after its SIC steps."""
    idx = layout.link_index(decoder, stream)
    H = cs.true_channels[decoder][None, :]
    g = received_gains(H, ps.matrix())[0]
    sig = g[stream]
    inter = float(np.sum(g[layout.interference[idx]]))
    return float(np.log2(1.0 + sig / (1.0 + inter)))


def noma_rates(cs, ps, config):
    if config.kind != "NOMA":
        raise UsageError("noma_rates needs a NOMA configuration")
    _check_precoders(cs, ps, False)
    layout = stream_layout(_resolve(cs, config))
    return _report(layout, link_rates(cs.true_channels, ps.matrix(), layout))


def mulp_rates(cs, ps):
    _check_precoders(cs, ps, False)
    layout = stream_layout(StrategyConfig("MULP", cs.num_users))
    return _report(layout, link_rates(cs.true_channels, ps.matrix(), layout))


def rs_rates(cs, ps, allocation_policy="equal"):
    _check_precoders(cs, ps, True)
    layout = stream_layout(StrategyConfig("RS1", cs.num_users))
    return _report(layout, link_rates(cs.true_channels, ps.matrix(), layout), allocation_policy)


def oma_precoders(cs, P, use_estimates=False):
    """Full power MRT to the strongest user (by estimate when requested)."""
    H = cs.channels(use_estimates)
    k = int(np.argmax(cs.norms(use_estimates)))
    p = np.zeros_like(np.asarray(H))
    n = np.linalg.norm(H[k])
    if n > 0:
        p[k] = np.sqrt(P) * H[k] / n
    return PrecoderSet(p, None, P)


def oma_rates(cs, P):
    """Rates when only the strongest user is served with matched filtering."""
    return mulp_rates(cs, oma_precoders(cs, P))


def evaluate(cs, ps, config, allocation_policy="equal"):
    """Dispatch to the evaluator matching ``config.kind``."""
    config = _resolve(cs, config)
    if config.kind == "NOMA":
        return noma_rates(cs, ps, config)
    if config.kind == "RS1":
        return rs_rates(cs, ps, allocation_policy)
    return mulp_rates(cs, ps)


def ergodic_rates(samples, ps, config, allocation_policy="equal"):
    """Sample-average rates over a list of channel sets.

    Each decode link is averaged over the samples first; stream rates are
    then the minimum of the averaged link rates over the decode set, and
    the RS common rate is the minimum over users of the averaged common
    link rates.  For single-decoder streams this is exactly the per-user
    average.  The NOMA decoding order is taken from ``config`` or, when
    absent, from the estimates of the first sample.
    """
    if not samples:
        raise ConfigurationError("ergodic_rates needs at least one sample")
    H = stack_channels(samples)
    cs0 = samples[0]
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(cs0, use_estimates=True)
    if config.num_users != cs0.num_users:
        raise ConfigurationError("strategy user count does not match the channels")
    _check_precoders(cs0, ps, config.kind == "RS1")
    layout = stream_layout(config)
    lr = link_rates(H, ps.matrix(), layout).mean(axis=0)
    return _report(layout, lr, allocation_policy)

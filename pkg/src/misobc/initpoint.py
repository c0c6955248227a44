"""Precoder initialization and the high-SNR achievability constructions.

:func:`mrt_svd_init` gives the starting point of the optimizer.  The other
functions build the zero-forcing directions and power-exponent schedules
used to show that each multiplexing gain in the closed-form tables is
achievable, and evaluate their per-stream SINR so the exponents can be
checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, InvariantViolation
from .rate import PrecoderSet
from .strategy import build_grouping, stream_layout

__all__ = [
    "PowerSchedule",
    "ServePlan",
    "mrt_svd_init",
    "zf_strong_init",
    "zfbf_precoders",
    "achievability_schedule",
    "realize_schedule",
    "expected_sinr",
]


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise ConfigurationError("zero channel estimate has no direction")
    return v / n


def _leading_left_singular(Hstack):
    """Leading left singular vector of the ``(M, n)`` matrix whose columns are channels."""
    U, s, _ = np.linalg.svd(Hstack, full_matrices=False)
    if s[0] == 0:
        raise ConfigurationError("zero channel estimate has no direction")
    return U[:, 0]


def mrt_svd_init(cs, config, P, power_split=None):
    """MRT for single-decoder streams, SVD directions for shared streams.

    ``cs`` is read through its estimates.  ``power_split`` gives the stream
    power fractions (common stream last for RS); by default powers are
    uniform over the private streams and the RS common stream gets half of
    the budget.
    """
    if config.kind == "OMA":
        from .rate import oma_precoders

        return oma_precoders(cs, P, use_estimates=True)
    if config.kind == "NOMA" and config.decoding_orders is None:
        config = config.with_orders(cs, use_estimates=True)
    H = np.asarray(cs.estimates)
    K, M = H.shape
    layout = stream_layout(config)
    S = layout.num_streams
    dirs = np.zeros((S, M), dtype=complex)
    for stream in layout.streams:
        dec = stream.decoders
        if len(dec) == 1:
            dirs[stream.index] = _unit(H[dec[0]])
        else:
            dirs[stream.index] = _leading_left_singular(H[list(dec)].T)
    if power_split is None:
        if config.kind == "RS1":
            frac = np.concatenate([np.full(K, 0.5 / K), [0.5]])
        else:
            frac = np.full(S, 1.0 / S)
    else:
        frac = np.asarray(power_split, dtype=float)
        if frac.shape != (S,) or np.any(frac < 0) or not np.isclose(frac.sum(), 1.0):
            raise ConfigurationError(f"power_split must be {S} nonnegative fractions summing to 1")
        frac = frac / frac.sum()
    X = dirs * np.sqrt(P * frac)[:, None]
    return PrecoderSet.from_matrix(X, K, P)


def zf_strong_init(cs, config, P, minor_fraction=1e-3):
    """Start point that zero-forces up to ``M`` strong users against each other.

    For NOMA the candidates are the last-decoded (strongest) user of each
    group; for MU-LP every user is a candidate.  The ``min(M, n)``
    candidates with the largest estimate norms get streams orthogonal to
    each other, sharing ``(1 - minor_fraction) P``.  The remaining streams
    keep their MRT/SVD directions and share ``minor_fraction * P``.  This
    start point already attains the sum multiplexing gain ``min(M, n)``,
    which the MRT/SVD start does not guarantee.
    """
    if config.kind == "MULP":
        strong = list(range(config.num_users))
    elif config.kind == "NOMA":
        if config.decoding_orders is None:
            config = config.with_orders(cs, use_estimates=True)
        strong = [order[-1] for order in config.decoding_orders]
    else:
        raise ConfigurationError("zf_strong_init applies to NOMA and MU-LP configurations")
    H = np.asarray(cs.estimates)
    K, M = H.shape
    strong.sort(key=lambda u: -np.linalg.norm(H[u]))
    served = strong[: min(M, len(strong))]
    base = mrt_svd_init(cs, config, P).matrix()
    rest = [k for k in range(K) if k not in served]
    X = np.zeros_like(base)
    if rest:
        minor = base[rest] / np.linalg.norm(base[rest])
        X[rest] = minor * np.sqrt(minor_fraction * P)
        major = (1.0 - minor_fraction) * P
    else:
        major = P
    dirs = zfbf_precoders(H, served, [[v for v in served if v != u] for u in served])
    X[served] = dirs * np.sqrt(major / len(served))
    return PrecoderSet.from_matrix(X, K, P)


def zfbf_precoders(H, serve_set, null_sets, rtol=1e-12):
    """Unit directions for ``serve_set`` orthogonal to the channels in ``null_sets``.

    ``H`` is the ``(K, M)`` channel array (or a channel set, read through
    its estimates).  Each direction is the normalized projection of the
    served user's channel onto the null space of its null set; when that
    projection vanishes an arbitrary null-space vector is used.
    """
    if hasattr(H, "estimates"):
        H = H.estimates
    H = np.asarray(H, dtype=complex)
    K, M = H.shape
    serve_set = list(serve_set)
    if len(null_sets) != len(serve_set):
        raise ConfigurationError("one null set per served stream is required")
    out = np.zeros((len(serve_set), M), dtype=complex)
    for i, (k, nulls) in enumerate(zip(serve_set, null_sets)):
        nulls = sorted(set(nulls))
        if not nulls:
            out[i] = _unit(H[k])
            continue
        if len(nulls) >= M:
            raise ConfigurationError(
                f"cannot null {len(nulls)} users with {M} antennas: the null space is empty"
            )
        N = scipy.linalg.null_space(np.conj(H[nulls]), rcond=rtol)
        if N.shape[1] == 0:
            raise ConfigurationError("the channels to null span the whole space")
        proj = N @ (N.conj().T @ H[k])
        if np.linalg.norm(proj) <= rtol * max(np.linalg.norm(H[k]), 1e-300):
            out[i] = N[:, 0]
        else:
            out[i] = _unit(proj)
        resid = np.abs(np.conj(H[nulls]) @ out[i])
        if np.any(resid > 1e-9 * np.linalg.norm(H[nulls], axis=1) + 1e-300):
            raise InvariantViolation("zero-forcing residual above tolerance")
    return out


@dataclass(frozen=True)
class PowerSchedule:
    """Stream power ``scale_k * P**exponent_k``; ``scale`` keeps the total within ``P``."""

    exponents: tuple
    scales: tuple

    def __post_init__(self):
        if len(self.exponents) != len(self.scales):
            raise ConfigurationError("exponents and scales differ in length")
        for e in self.exponents:
            if not 0 <= e <= 1:
                raise ConfigurationError(f"power exponent {e} outside [0, 1]")

    def powers(self, P):
        return np.array([float(s) * P ** float(e) for e, s in zip(self.exponents, self.scales)])


def _normalized(exponents, reference_power):
    """Schedule giving every stream ``reference_power / n`` at the reference power.

    Above the reference each stream grows as ``P**e``; since every
    exponent is at most one the total stays within ``P`` for all
    ``P >= reference_power``.
    """
    n = len(exponents)
    scales = tuple(float(reference_power) ** (1 - float(e)) / n for e in exponents)
    return PowerSchedule(tuple(exponents), scales)


@dataclass(frozen=True)
class ServePlan:
    """Streams of an achievability construction.

    ``streams`` lists per stream: an identifier, the user whose channel
    fixes its direction (``None`` for a common stream), the users it must be
    orthogonal to, its decoders and the streams each decoder sees as noise.
    ``claimed`` maps stream identifiers to the claimed SINR exponent.
    """

    scheme: str
    streams: tuple
    schedule: PowerSchedule
    claimed: dict
    zero_gain: bool = False
    extras: dict = None


@dataclass(frozen=True)
class _StreamPlan:
    name: str
    steer_user: int | None
    null_users: tuple
    decoders: tuple
    noise: dict  # decoder -> tuple of stream names treated as noise


def achievability_schedule(scheme, M, K, G=None, alpha=1, metric="mmf", reference_power=1e3):
    """Serve plan and power exponents of the constructions behind the DoF tables.

    Supported constructions:

    * ``NOMA`` with ``G = 1`` (MMF): one superposed stack, stream of the
      ``k``-th strongest user at power ``P^{k/K}``; every stream gets SINR
      exponent ``1/K``.
    * ``NOMA`` with ``G > 1`` (MMF): streams of group ``i`` at
      ``P^{1-(g-k)alpha/g}``, every stream zero-forced against the users of
      the other groups; SINR exponent ``alpha/g`` per stream.  Returns a zero-gain
      plan when ``M < K - g + 1``.
    * ``RS1`` sum: common stream at ``P``, ``min(M, K)`` zero-forced private
      streams at ``P^alpha``; common exponent ``1 - alpha``, private ``alpha``.
    * ``RS1`` MMF with ``M < K``: ``M`` served private streams at
      ``P^beta`` with ``beta = min(alpha, 1/(1+K-M))`` and a common stream
      at ``P``; the common exponent is ``1 - beta``.

    Users are 0-based and user ``0`` is the strongest in each group.
    Except for the ``G = 1`` stack, stream powers are split equally at
    ``reference_power`` and scale with their exponents above it, so that
    interference rather than noise limits the streams from that power on.
    """
    if not reference_power > 0:
        raise ConfigurationError("reference_power must be positive")
    scheme = scheme.upper().replace("-", "")
    alpha = Fraction(alpha).limit_denominator(10 ** 6)
    if not 0 <= alpha <= 1:
        raise ConfigurationError("alpha must lie in [0, 1]")
    if scheme == "NOMA":
        if G is None:
            raise ConfigurationError("NOMA needs G")
        groups = build_grouping(K, G)
        g = K // G
        if G == 1:
            # decoding from the weakest (last index) to the strongest (index 0)
            streams = []
            exps = []
            claimed = {}
            for k in range(K):
                dec = tuple(range(0, k + 1))
                noise = {j: tuple(f"s{m}" for m in range(k)) for j in dec}
                streams.append(_StreamPlan(f"s{k}", k, (), dec, noise))
                exps.append(Fraction(k + 1, K))
                claimed[f"s{k}"] = Fraction(1, K)
            # unit scales already space the stack evenly (in dB) between the
            # noise floor and P, which is what the k/K exponents need
            return ServePlan("NOMA", tuple(streams), PowerSchedule(tuple(exps), (1 / K,) * K), claimed)
        if M < K - g + 1:
            return ServePlan("NOMA", (), PowerSchedule((), ()), {}, zero_gain=True)
        streams, exps, claimed = [], [], {}
        for cell in groups:
            others = [u for u in range(K) if u not in cell]
            for pos, u in enumerate(cell):
                # users within the group are decoded by cell[0..pos]
                dec = tuple(cell[: pos + 1])
                nulls = tuple(others)
                same = tuple(f"s{m}" for m in cell[:pos])
                noise = {}
                for j in dec:
                    other = tuple(f"s{m}" for m in range(K) if m not in cell)
                    noise[j] = same + other
                streams.append(_StreamPlan(f"s{u}", u, nulls, dec, noise))
                exps.append(1 - Fraction(g - (pos + 1), g) * alpha)
                claimed[f"s{u}"] = alpha / g
        return ServePlan("NOMA", tuple(streams), _normalized(exps, reference_power), claimed,
                         extras={"g": g})
    if scheme in ("RS1", "RS"):
        n = min(M, K)
        if metric == "sum" or M >= K:
            beta = alpha
            served = tuple(range(n))
            z = None
        else:
            threshold = Fraction(1, 1 + K - M)
            if alpha <= threshold:
                beta = alpha
                z = (1 - alpha - alpha * K + alpha * M) * M / ((1 - alpha) * K) if alpha < 1 else Fraction(0)
            else:
                beta = threshold
                z = Fraction(0)
            served = tuple(range(M))
        streams = []
        priv_names = tuple(f"s{k}" for k in served)
        streams.append(_StreamPlan("c", None, (), tuple(range(K)),
                                   {j: priv_names for j in range(K)}))
        for k in served:
            nulls = tuple(v for v in served if v != k)
            noise = {k: tuple(x for x in priv_names if x != f"s{k}")}
            streams.append(_StreamPlan(f"s{k}", k, nulls, (k,), noise))
        exps = (Fraction(1),) + (beta,) * len(served)
        claimed = {"c": 1 - beta}
        claimed.update({f"s{k}": beta for k in served})
        extras = {"beta": beta, "z": z, "served": served}
        return ServePlan("RS1", tuple(streams), _normalized(exps, reference_power), claimed,
                         extras=extras)
    raise ConfigurationError(f"no achievability construction for {scheme!r}")


def realize_schedule(plan, H, P):
    """Precoders ``{stream name: vector}`` for a plan at power ``P``.

    Directions come from the estimates; the common stream of a
    rate-splitting plan uses the leading singular direction of all
    estimates.
    """
    if hasattr(H, "estimates"):
        H = H.estimates
    H = np.asarray(H, dtype=complex)
    powers = plan.schedule.powers(P)
    total = powers.sum()
    if total > P * (1 + 1e-12):
        powers *= P / total
    out = {}
    for sp, pw in zip(plan.streams, powers):
        if sp.steer_user is None:
            d = _leading_left_singular(H.T)
        else:
            d = zfbf_precoders(H, [sp.steer_user], [sp.null_users])[0]
        out[sp.name] = np.sqrt(pw) * d
    return out


def expected_sinr(plan, cs, precoders):
    """Per-stream SINR (minimum over decoders) with the error averaged out.

    The transmitter designs with the estimates; the interference a stream
    leaks through the estimation error has mean ``sigma_e^2 ||p||^2``, which
    is added to the interference seen through the estimate.  With zero
    error this is the exact SINR.
    """
    Hh = np.asarray(cs.estimates)
    se2 = np.mean(np.abs(cs.errors) ** 2, axis=1) if np.any(cs.errors) else np.zeros(cs.num_users)
    return expected_sinr_from(plan, Hh, se2, precoders)


def expected_sinr_from(plan, Hh, se2, precoders):
    out = {}
    for sp in plan.streams:
        vals = []
        for j in sp.decoders:
            def gain(name):
                p = precoders[name]
                return abs(np.conj(Hh[j]) @ p) ** 2 + se2[j] * np.linalg.norm(p) ** 2
            sig = abs(np.conj(Hh[j]) @ precoders[sp.name]) ** 2
            inter = sum(gain(n) for n in sp.noise.get(j, ()))
            vals.append(sig / (1.0 + inter))
        out[sp.name] = min(vals)
    return out

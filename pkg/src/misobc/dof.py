"""Closed-form multiplexing gains, pairwise comparisons and slope fitting.

All closed forms return :class:`fractions.Fraction` so that values such as
1/3 compare exactly.  ``alpha`` may be given as an int, a Fraction or a
float; floats are converted through their shortest decimal representation
(``0.1`` becomes ``1/10``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .errors import ConfigurationError

__all__ = [
    "DofPrediction",
    "SlopeFit",
    "as_fraction",
    "closed_form_dof",
    "predict",
    "compare_dof",
    "corollary_sign",
    "fit_slope",
    "golden_tables",
    "golden_tables_csv",
]

_KINDS = {"NOMA": "NOMA", "MULP": "MULP", "MU-LP": "MULP", "RS": "RS1", "RS1": "RS1", "OMA": "OMA"}
ONE = Fraction(1)
ZERO = Fraction(0)


def as_fraction(alpha):
    """Exact rational for ``alpha`` (floats go through ``repr``)."""
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, (int, np.integer)):
        return Fraction(int(alpha))
    if isinstance(alpha, str):
        return Fraction(alpha)
    return Fraction(repr(float(alpha)))


def _kind(kind):
    try:
        return _KINDS[str(kind).upper()]
    except KeyError:
        raise ConfigurationError(f"unknown strategy kind {kind!r}") from None


def _check(kind, M, K, G, alpha):
    kind = _kind(kind)
    if int(M) != M or int(K) != K or M < 1 or K < 1:
        raise ConfigurationError("M and K must be positive integers")
    a = as_fraction(alpha)
    if not ZERO <= a <= ONE:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha!r}")
    if kind == "NOMA":
        if G is None or int(G) != G or not 1 <= G < K or K % G:
            raise ConfigurationError(f"NOMA needs 1 <= G < K with G dividing K (K={K}, G={G})")
        G = int(G)
    return kind, int(M), int(K), G, a


def _noma(M, K, G, a, metric):
    g = K // G
    if metric == "sum":
        return max(ONE, min(M, G) * a)
    if G == 1:
        return Fraction(1, K)
    return a / g if M >= K - g + 1 else ZERO


def _mulp(M, K, a, metric):
    if metric == "sum":
        return max(ONE, min(M, K) * a)
    return a if M >= K else ZERO


def _rs(M, K, a, metric):
    if metric == "sum":
        return 1 + (min(M, K) - 1) * a
    if M >= K:
        return (1 + (K - 1) * a) / K
    threshold = Fraction(1, 1 + K - M)
    if a <= threshold:
        return (1 + (M - 1) * a) / K
    return threshold


def _oma(K, metric):
    if metric == "sum":
        return ONE
    return ONE if K == 1 else ZERO


def closed_form_dof(kind, M, K, G=None, alpha=1, metric="sum"):
    """Sum or MMF multiplexing gain of a strategy as an exact rational.

    >>> closed_form_dof("RS1", 4, 6, alpha=1, metric="mmf")
    Fraction(1, 3)
    """
    kind, M, K, G, a = _check(kind, M, K, G, alpha)
    if metric not in ("sum", "mmf"):
        raise ConfigurationError(f"metric must be 'sum' or 'mmf', got {metric!r}")
    if kind == "NOMA":
        return _noma(M, K, G, a, metric)
    if kind == "MULP":
        return _mulp(M, K, a, metric)
    if kind == "RS1":
        return _rs(M, K, a, metric)
    return _oma(K, metric)


@dataclass(frozen=True)
class DofPrediction:
    kind: str
    M: int
    K: int
    G: int | None
    alpha: Fraction
    sum_dof: Fraction
    mmf_dof: Fraction


def predict(kind, M, K, G=None, alpha=1):
    kind, M, K, G, a = _check(kind, M, K, G, alpha)
    return DofPrediction(kind, M, K, G if kind == "NOMA" else None, a,
                         closed_form_dof(kind, M, K, G, a, "sum"),
                         closed_form_dof(kind, M, K, G, a, "mmf"))


def _sign(x):
    return (x > 0) - (x < 0)


def compare_dof(kind_a, kind_b, M, K, G=None, alpha=1, metric="sum"):
    """Sign of ``d_a - d_b``; ``G`` is used by whichever side is NOMA."""
    da = closed_form_dof(kind_a, M, K, G if _kind(kind_a) == "NOMA" else None, alpha, metric)
    db = closed_form_dof(kind_b, M, K, G if _kind(kind_b) == "NOMA" else None, alpha, metric)
    return _sign(da - db)


def corollary_sign(baseline, M, K, G, alpha, metric):
    """Sign of ``d_NOMA - d_baseline`` as printed in the published case conditions.

    ``baseline`` is ``"MULP"`` or ``"RS1"``.  Returns ``None`` when no
    printed case covers the tuple.  The conditions are transcribed
    literally, so the known edge defects (see the decisions ledger) show
    up as disagreements with :func:`compare_dof`; the one exception is the
    NOMA G>1 versus RS max-min case whose printed bracket is garbled and
    is implemented by its evident intent.
    """
    baseline = _kind(baseline)
    _, M, K, G, a = _check("NOMA", M, K, G, alpha)
    g = K // G
    if baseline == "MULP" and metric == "sum":
        mg, mk = min(M, G) * a, min(M, K) * a
        if (mg < 1 and mk > 1) or (M > G and mg >= 1):
            return -1
        if mk <= 1 or (mg >= 1 and M <= G):
            return 0
        return None
    if baseline == "MULP" and G == 1:
        if M >= K and a > Fraction(1, K):
            return -1
        if M >= K and a == Fraction(1, K):
            return 0
        if M < K or (M >= K and a < Fraction(1, K)):
            return 1
        return None
    if baseline == "MULP":
        if M >= K:
            return -1
        if M < K - g + 1:
            return 0
        return 1
    if metric == "sum":
        if 0 < a < 1 or (a > 0 and M > G):
            return -1
        if a == 0 or (a == 1 and M <= G):
            return 0
        return None
    if G == 1:
        if a > 0 and M > 1:
            return -1
        return 0
    if M == K - g + 1 and a == 1:
        return 0
    return -1


# --------------------------------------------------------------------------
# empirical slopes


@dataclass(frozen=True)
class SlopeFit:
    snr_grid_dB: tuple
    rates: tuple
    fitted_slope: float
    stderr: float
    intercept: float = 0.0


def fit_slope(points):
    """Least-squares slope of rate against ``log2(P)`` with ``P = 10**(dB/10)``.

    ``points`` is an iterable of ``(snr_dB, rate)`` pairs; at least three
    distinct SNRs are required.
    """
    pts = sorted((float(s), float(r)) for s, r in points)
    if len(pts) < 3:
        raise ConfigurationError("slope fitting needs at least three points")
    snr = np.array([p[0] for p in pts])
    rates = np.array([p[1] for p in pts])
    if np.any(np.diff(snr) <= 0):
        raise ConfigurationError("SNR grid must not contain duplicates")
    if not (np.all(np.isfinite(snr)) and np.all(np.isfinite(rates))):
        raise ConfigurationError("non-finite points in slope fit")
    x = snr / (10.0 * np.log10(2.0))
    if np.ptp(rates) == 0:
        return SlopeFit(tuple(snr), tuple(rates), 0.0, 0.0, float(rates[0]))
    fit = stats.linregress(x, rates)
    return SlopeFit(tuple(snr), tuple(rates), float(fit.slope), float(fit.stderr), float(fit.intercept))


# --------------------------------------------------------------------------
# golden tables

_COLUMNS = [("NOMA", 1), ("NOMA", 3), ("MULP", None), ("RS1", None)]


def _label(kind, G):
    return f"NOMA-G{G}" if kind == "NOMA" else kind


def golden_tables(K=6, antennas=range(1, 7), alpha=1, columns=None):
    """Rows ``(metric, M, regime, {label: Fraction})`` for sum then MMF gains."""
    columns = _COLUMNS if columns is None else columns
    rows = []
    for metric in ("sum", "mmf"):
        for M in antennas:
            values = {_label(k, G): closed_form_dof(k, M, K, G, alpha, metric) for k, G in columns}
            rows.append((metric, M, "O" if K > M else "U", values))
    return rows


def golden_tables_csv(K=6, antennas=range(1, 7), alpha=1, columns=None):
    """Golden tables as CSV text: ``metric,M,regime,<strategy columns>``."""
    rows = golden_tables(K, antennas, alpha, columns)
    labels = list(rows[0][3])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "M", "regime", *labels])
    for metric, M, regime, values in rows:
        w.writerow([metric, M, regime, *(str(values[lab]) for lab in labels)])
    return buf.getvalue()

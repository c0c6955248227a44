"""Rayleigh fading channels, the scaled CSIT error model and conditional sampling.

Channels are stored as a ``(K, M)`` complex array whose row ``k`` is the
vector ``h_k``; the received signal of user ``k`` is ``h_k^H x + n_k`` with
unit noise power.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantViolation

__all__ = [
    "ChannelSet",
    "CsitModel",
    "complex_normal",
    "sample_channels",
    "apply_csit_error",
    "sample_conditional",
    "stack_channels",
    "write_channelset",
    "read_channelset",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """True channels, transmitter-side estimates and estimation errors.

    ``true_channels == estimates + errors`` holds exactly; the constructor
    recomputes the true channels from the two parts when both are given so
    no rounding drift can creep in.
    """

    true_channels: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.true_channels)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ConfigurationError(f"channels must be a non-empty (K, M) array, got shape {h.shape}")
        shape = h.shape
        for name in ("estimates", "errors"):
            if np.shape(getattr(self, name)) != shape:
                raise ConfigurationError(f"{name} shape {np.shape(getattr(self, name))} != {shape}")
        if not np.array_equal(np.asarray(self.estimates) + np.asarray(self.errors), h):
            raise ConfigurationError("true channels must equal estimates + errors exactly")
        var = np.asarray(self.variances, dtype=float)
        if var.shape != (shape[0],):
            raise ConfigurationError(f"expected {shape[0]} variances, got shape {var.shape}")
        if not np.all(var > 0):
            raise ConfigurationError("channel variances must be positive")
        object.__setattr__(self, "true_channels", _frozen(h, complex))
        object.__setattr__(self, "estimates", _frozen(self.estimates, complex))
        object.__setattr__(self, "errors", _frozen(self.errors, complex))
        object.__setattr__(self, "variances", _frozen(var, float))

    @classmethod
    def perfect(cls, channels, variances=None):
        """Wrap known channels as a perfect-CSIT set (zero error)."""
        h = np.atleast_2d(np.asarray(channels, dtype=complex))
        if variances is None:
            variances = np.ones(h.shape[0])
        return cls(h, h.copy(), np.zeros_like(h), variances)

    @classmethod
    def from_parts(cls, estimates, errors, variances):
        est = np.asarray(estimates, dtype=complex)
        err = np.asarray(errors, dtype=complex)
        return cls(est + err, est, err, variances)

    @property
    def num_users(self):
        return self.true_channels.shape[0]

    @property
    def num_antennas(self):
        return self.true_channels.shape[1]

    K = num_users
    M = num_antennas

    def channels(self, use_estimates=False):
        return self.estimates if use_estimates else self.true_channels

    def norms(self, use_estimates=False):
        return np.linalg.norm(self.channels(use_estimates), axis=1)

    def as_estimate(self):
        """The transmitter's view: estimates treated as if they were exact."""
        return ChannelSet.perfect(self.estimates, self.variances)


@dataclass(frozen=True)
class CsitModel:
    """CSIT error variance ``sigma_k^2 * P**(-alpha)``.

    ``error_variances`` overrides the scaled law with explicit per-user
    values (use zeros for perfect CSIT).
    """

    alpha: float | None
    snr_power: float
    error_variances: tuple | None = field(default=None)

    def __post_init__(self):
        if not self.snr_power > 0:
            raise ConfigurationError("snr_power must be positive")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.alpha is None and self.error_variances is None:
            raise ConfigurationError("either alpha or explicit error variances are required")
        if self.error_variances is not None:
            ev = tuple(float(v) for v in np.atleast_1d(self.error_variances))
            if any(v < 0 for v in ev):
                raise ConfigurationError("error variances must be nonnegative")
            object.__setattr__(self, "error_variances", ev)

    @classmethod
    def perfect(cls, snr_power, num_users):
        return cls(None, snr_power, (0.0,) * num_users)

    def variance_for(self, variances):
        """Per-user error variance for channel variances ``variances``."""
        var = np.asarray(variances, dtype=float)
        if self.error_variances is not None:
            ev = np.asarray(self.error_variances, dtype=float)
            if ev.size == 1:
                ev = np.full(var.shape, ev[0])
            if ev.shape != var.shape:
                raise ConfigurationError("error variance count does not match user count")
            return ev
        if self.alpha == 0:
            return var.copy()
        if self.alpha == 1:
            return var / self.snr_power
        return var * self.snr_power ** (-self.alpha)


def complex_normal(rng, shape, variance=1.0):
    """CN(0, variance) draws: independent real and imaginary parts of variance/2."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * scale


def _check_dims(K, M):
    if int(K) != K or int(M) != M or K < 1 or M < 1:
        raise ConfigurationError(f"K and M must be positive integers, got K={K}, M={M}")


def sample_channels(K, M, variances, seed):
    """Draw ``h_k`` with i.i.d. CN(0, sigma_k^2) entries; perfect CSIT by default."""
    _check_dims(K, M)
    var = np.asarray(variances, dtype=float).reshape(-1)
    if var.shape != (K,):
        raise ConfigurationError(f"expected {K} variances, got {var.size}")
    if not np.all(var > 0):
        raise ConfigurationError("channel variances must be positive")
    rng = np.random.default_rng(seed)
    h = complex_normal(rng, (K, M), var[:, None])
    return ChannelSet.perfect(h, var)


def apply_csit_error(cs, model, seed):
    """Split the true channels into an estimate and an independent error.

    The true channel is kept and the error is drawn from its conditional law
    given ``h``, which yields ``hhat ~ CN(0, s2 - se2)`` independent of
    ``htilde ~ CN(0, se2)`` entry-wise.
    """
    var = cs.variances
    se2 = model.variance_for(var)
    if np.any(se2 > var * (1 + 1e-12)):
        raise InvariantViolation("CSIT error variance exceeds the channel variance")
    se2 = np.minimum(se2, var)
    rng = np.random.default_rng(seed)
    h = cs.true_channels
    ratio = (se2 / var)[:, None]
    cond_var = (se2 * (var - se2) / var)[:, None]
    err = ratio * h + complex_normal(rng, h.shape, cond_var)
    est = h - err
    # re-sum so that h == hhat + htilde holds bit for bit (moves h by at most an ulp)
    return ChannelSet(est + err, est, err, var)


def sample_conditional(estimate_cs, model, n_samples, seed):
    """Channel samples ``hhat + htilde_n`` sharing the transmitter's estimate."""
    if int(n_samples) != n_samples or n_samples < 1:
        raise ConfigurationError("n_samples must be a positive integer")
    est = estimate_cs.estimates
    var = estimate_cs.variances
    se2 = model.variance_for(var)
    rng = np.random.default_rng(seed)
    errs = complex_normal(rng, (int(n_samples),) + est.shape, se2[None, :, None])
    return [ChannelSet(est + e, est, e, var) for e in errs]


def stack_channels(samples):
    """Stack the true channels of a sample list into an ``(N, K, M)`` array."""
    if not samples:
        raise ConfigurationError("empty sample list")
    shape = samples[0].true_channels.shape
    for s in samples:
        if s.true_channels.shape != shape:
            raise ConfigurationError("samples do not share dimensions")
    return np.stack([s.true_channels for s in samples])


_SECTIONS = ("true", "estimate", "error")


def write_channelset(cs, path):
    """Write ``cs`` as CSV (``.csv``) or little-endian binary (anything else).

    Layout: header ``K, M``; then the variances; then one section per array
    (true, estimate, error) with one row per user of ``re, im`` pairs.
    """
    path = Path(path)
    arrays = (cs.true_channels, cs.estimates, cs.errors)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([cs.K, cs.M])
            w.writerow(["variance"] + [repr(float(v)) for v in cs.variances])
            for name, arr in zip(_SECTIONS, arrays):
                w.writerow([name])
                for row in arr:
                    w.writerow([repr(float(x)) for x in np.column_stack([row.real, row.imag]).ravel()])
        return path
    with path.open("wb") as fh:
        fh.write(struct.pack("<ii", cs.K, cs.M))
        fh.write(np.asarray(cs.variances, dtype="<f8").tobytes())
        for arr in arrays:
            pairs = np.stack([arr.real, arr.imag], axis=-1)
            fh.write(np.ascontiguousarray(pairs, dtype="<f8").tobytes())
    return path


def read_channelset(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        K, M = int(rows[0][0]), int(rows[0][1])
        var = np.array([float(x) for x in rows[1][1:]])
        parts = {}
        i = 2
        for name in _SECTIONS:
            if rows[i] != [name]:
                raise ConfigurationError(f"expected section {name!r} at row {i}")
            vals = np.array([[float(x) for x in r] for r in rows[i + 1:i + 1 + K]])
            parts[name] = vals[:, 0::2] + 1j * vals[:, 1::2]
            i += K + 1
        return ChannelSet(parts["true"], parts["estimate"], parts["error"], var)
    data = path.read_bytes()
    K, M = struct.unpack("<ii", data[:8])
    off = 8
    var = np.frombuffer(data, dtype="<f8", count=K, offset=off).copy()
    off += 8 * K
    arrays = []
    for _ in _SECTIONS:
        pairs = np.frombuffer(data, dtype="<f8", count=2 * K * M, offset=off).reshape(K, M, 2)
        arrays.append(pairs[..., 0] + 1j * pairs[..., 1])
        off += 16 * K * M
    return ChannelSet(arrays[0], arrays[1], arrays[2], var)

"""Quick invariant suites behind ``misobc selftest``.

Each check returns ``(name, passed, detail)``.  The suites are small
versions of the property tests so that an installed copy can be sanity
checked in a few seconds without pytest.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import dof
from .channel import CsitModel, apply_csit_error, sample_channels
from .errors import ConfigurationError, InvariantViolation
from .initpoint import mrt_svd_init, zfbf_precoders
from .rate import PrecoderSet, mulp_rates, rs_rates
from .strategy import StrategyConfig, stream_layout
from .wmmse import SolveOptions, ao_solve, rate_wmmse_gap

__all__ = ["TABLE_SUM_K6", "TABLE_MMF_K6", "run_all"]

F = Fraction
# K = 6, perfect CSIT, M = 1..6; columns NOMA G=1, NOMA G=3, MU-LP, RS
TABLE_SUM_K6 = {
    "NOMA-G1": [1, 1, 1, 1, 1, 1],
    "NOMA-G3": [1, 2, 3, 3, 3, 3],
    "MULP": [1, 2, 3, 4, 5, 6],
    "RS1": [1, 2, 3, 4, 5, 6],
}
TABLE_MMF_K6 = {
    "NOMA-G1": [F(1, 6)] * 6,
    "NOMA-G3": [0, 0, 0, 0, F(1, 2), F(1, 2)],
    "MULP": [0, 0, 0, 0, 0, 1],
    "RS1": [F(1, 6), F(1, 5), F(1, 4), F(1, 3), F(1, 2), 1],
}


def check_golden_tables():
    bad = []
    for metric, M, _, values in dof.golden_tables():
        table = TABLE_SUM_K6 if metric == "sum" else TABLE_MMF_K6
        for label, value in values.items():
            if value != table[label][M - 1]:
                bad.append(f"{metric} {label} M={M}: {value} != {table[label][M - 1]}")
    return "golden DoF tables", not bad, "; ".join(bad) or "all entries match"


def _random_precoders(rng, S, M, P):
    X = rng.standard_normal((S, M)) + 1j * rng.standard_normal((S, M))
    return X * np.sqrt(P * rng.uniform(0.1, 1.0) / np.sum(np.abs(X) ** 2))


def check_rate_wmmse(n=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        K, M = int(rng.integers(2, 7)), int(rng.integers(1, 7))
        cs = sample_channels(K, M, np.ones(K), int(rng.integers(2**31)))
        kinds = ["MULP", "RS1"] + [f"NOMA-G{G}" for G in range(1, K) if K % G == 0]
        name = kinds[int(rng.integers(len(kinds)))]
        cfg = (StrategyConfig("NOMA", K, num_groups=int(name[6:])) if name.startswith("NOMA")
               else StrategyConfig(name, K)).with_orders(cs)
        layout = stream_layout(cfg)
        P = 10 ** rng.uniform(0, 3)
        ps = PrecoderSet.from_matrix(_random_precoders(rng, layout.num_streams, M, P), K, P)
        for link in layout.links:
            worst = max(worst, abs(rate_wmmse_gap(cs, ps, layout, link)))
    return "rate-WMMSE identity", worst < 1e-8, f"max gap {worst:.2e}"


def check_zfbf(seed=1):
    cs = sample_channels(6, 3, np.ones(6), seed)
    H = cs.true_channels
    # strong user of each pair nulls the other two groups
    serve = [0, 2, 4]
    nulls = [[2, 3, 4, 5], [0, 1, 4, 5], [0, 1, 2, 3]]
    try:
        zfbf_precoders(H, serve, nulls)
        return "ZFBF infeasibility", False, "nulling 4 users with 3 antennas did not raise"
    except ConfigurationError:
        pass
    nulls = [[2, 4], [0, 4], [0, 2]]
    D = zfbf_precoders(H, serve, nulls)
    worst = max(float(np.max(np.abs(np.conj(H[n]) @ D[i]) / np.linalg.norm(H[n], axis=1)))
                for i, n in enumerate(nulls))
    return "ZFBF residuals", worst < 1e-9, f"max relative residual {worst:.2e}"


def check_rs_zero_common(seed=2):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        cs = sample_channels(4, 3, np.ones(4), int(rng.integers(2**31)))
        X = _random_precoders(rng, 4, 3, 100.0)
        a = mulp_rates(cs, PrecoderSet(X, None, 100.0))
        b = rs_rates(cs, PrecoderSet(X, np.zeros(3), 100.0))
        if not (np.array_equal(a.per_user_rates, b.per_user_rates) and a.sum_rate == b.sum_rate):
            return "RS with zero common equals MU-LP", False, "rates differ"
    return "RS with zero common equals MU-LP", True, "bit-identical on 50 draws"


def check_ao_monotone(seed=3):
    opts = SolveOptions(max_iterations=30)
    try:
        for s in range(3):
            cs = sample_channels(6, 3, np.ones(6), seed + s)
            for kind, G in (("NOMA", 3), ("MULP", None), ("RS1", None)):
                cfg = StrategyConfig(kind, 6, num_groups=G).with_orders(cs)
                for obj in ("sum", "maxmin"):
                    ao_solve(cs, cfg, obj, mrt_svd_init(cs, cfg, 100.0), opts)
    except InvariantViolation as exc:
        return "AO monotonicity", False, str(exc)
    return "AO monotonicity", True, "18 runs without a decreasing step"


def check_channel_additivity(seed=4):
    cs = sample_channels(6, 4, np.ones(6), seed)
    out = apply_csit_error(cs, CsitModel(0.5, 100.0), seed + 1)
    err = float(np.max(np.abs(out.true_channels - (out.estimates + out.errors))))
    return "channel additivity", err == 0.0, f"max |h - (hhat + htilde)| = {err:.1e}"


CHECKS = (check_golden_tables, check_rate_wmmse, check_zfbf, check_rs_zero_common,
          check_ao_monotone, check_channel_additivity)


def run_all():
    return [check() for check in CHECKS]

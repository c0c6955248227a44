from fractions import Fraction

import numpy as np
import pytest

from misobc.channel import ChannelSet, sample_channels
from misobc.errors import ConfigurationError
from misobc.initpoint import (
    PowerSchedule,
    achievability_schedule,
    expected_sinr,
    mrt_svd_init,
    realize_schedule,
    zf_strong_init,
    zfbf_precoders,
)
from misobc.rate import PrecoderSet, noma_rates, rs_rates
from misobc.strategy import StrategyConfig


def _phase_free_equal(a, b, tol=1e-12):
    return abs(abs(np.vdot(a, b)) - np.linalg.norm(a) * np.linalg.norm(b)) < tol


def test_single_user_mrt():
    cs = sample_channels(1, 4, [1.0], seed=3)
    ps = mrt_svd_init(cs, StrategyConfig("MULP", 1), 5.0)
    h = cs.estimates[0]
    np.testing.assert_allclose(ps.private_precoders[0], np.sqrt(5.0) * h / np.linalg.norm(h), rtol=1e-14)


def test_identical_channels_give_channel_direction():
    h = np.array([1.0 + 1j, 0.5, -2.0j])
    cs = ChannelSet.perfect(np.vstack([h, h]))
    cfg = StrategyConfig("NOMA", 2, num_groups=1).with_orders(cs)
    ps = mrt_svd_init(cs, cfg, 2.0)
    weak = cfg.decoding_orders[0][0]
    assert _phase_free_equal(ps.private_precoders[weak], h, tol=1e-12)


def test_orthonormal_shared_stream_direction():
    cs = ChannelSet.perfect(np.array([[1.0, 0.0], [0.0, 1.0]]))
    cfg = StrategyConfig("NOMA", 2, num_groups=1).with_orders(cs)
    ps = mrt_svd_init(cs, cfg, 2.0)
    d = ps.private_precoders[cfg.decoding_orders[0][0]]
    d = d / np.linalg.norm(d)
    # the stacked matrix is the identity: any unit vector is singular; SVD returns e1 or e2
    assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-15)
    assert min(abs(abs(d[0]) - 1), abs(abs(d[1]) - 1)) < 1e-12


@pytest.mark.parametrize("kind,G", [("MULP", None), ("NOMA", 3), ("NOMA", 1), ("RS1", None), ("OMA", None)])
def test_init_uses_full_power(kind, G):
    cs = sample_channels(6, 3, np.ones(6), seed=5)
    cfg = StrategyConfig(kind, 6, num_groups=G)
    ps = mrt_svd_init(cs, cfg, 316.0)
    assert abs(ps.total_power() - 316.0) <= 1e-8 * 316.0


def test_rs_common_gets_half_the_budget():
    cs = sample_channels(4, 2, np.ones(4), seed=1)
    ps = mrt_svd_init(cs, StrategyConfig("RS1", 4), 10.0)
    assert np.linalg.norm(ps.common_precoder) ** 2 == pytest.approx(5.0, rel=1e-12)


def test_power_split_validation():
    cs = sample_channels(2, 2, np.ones(2), seed=1)
    cfg = StrategyConfig("MULP", 2)
    ps = mrt_svd_init(cs, cfg, 10.0, power_split=[0.25, 0.75])
    np.testing.assert_allclose(ps.stream_powers(), [2.5, 7.5], rtol=1e-12)
    with pytest.raises(ConfigurationError):
        mrt_svd_init(cs, cfg, 10.0, power_split=[0.5, 0.6])


def test_zero_channel_rejected():
    cs = ChannelSet.perfect(np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ConfigurationError):
        mrt_svd_init(cs, StrategyConfig("MULP", 2), 1.0)


def test_zfbf_two_antennas_one_null():
    H = np.array([[1.0, 1.0j], [1.0, 0.0]])
    (d,) = zfbf_precoders(H, [0], [[1]])
    e2 = np.array([0.0, 1.0])
    proj = e2 * np.vdot(e2, H[0])
    assert _phase_free_equal(d, proj / np.linalg.norm(proj))
    assert abs(np.vdot(H[1], d)) < 1e-15


def test_zfbf_strong_users_k6_m3():
    cs = sample_channels(6, 3, np.ones(6), seed=7)
    H = cs.true_channels
    strong = [1, 3, 5]
    D = zfbf_precoders(H, strong, [[v for v in strong if v != u] for u in strong])
    cross = [abs(np.vdot(H[v], D[i])) / np.linalg.norm(H[v]) for i, u in enumerate(strong)
             for v in strong if v != u]
    assert len(cross) == 6 and max(cross) < 1e-9
    np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0, rtol=1e-14)


def test_zfbf_empty_null_space():
    cs = sample_channels(3, 2, np.ones(3), seed=2)
    with pytest.raises(ConfigurationError):
        zfbf_precoders(cs, [0], [[1, 2]])


def test_zf_strong_init_structure():
    cs = sample_channels(6, 3, np.ones(6), seed=11)
    cfg = StrategyConfig("NOMA", 6, num_groups=3).with_orders(cs)
    ps = zf_strong_init(cs, cfg, 100.0)
    assert ps.total_power() == pytest.approx(100.0, rel=1e-12)
    strong = [o[-1] for o in cfg.decoding_orders]
    X, H = ps.private_precoders, cs.estimates
    for u in strong:
        for v in strong:
            if u != v:
                assert abs(np.vdot(H[v], X[u])) < 1e-9 * np.linalg.norm(H[v]) * np.linalg.norm(X[u])
    with pytest.raises(ConfigurationError):
        zf_strong_init(cs, StrategyConfig("RS1", 6), 1.0)


def test_zf_strong_init_mulp_square_is_plain_zf():
    cs = sample_channels(4, 4, np.ones(4), seed=12)
    ps = zf_strong_init(cs, StrategyConfig("MULP", 4), 50.0)
    G = np.conj(cs.estimates) @ ps.private_precoders.T
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-9 * np.max(np.abs(G))
    np.testing.assert_allclose(ps.stream_powers(), 12.5, rtol=1e-12)


def test_schedule_examples():
    plan = achievability_schedule("NOMA", 4, 4, G=2, alpha=Fraction(1, 2))
    exps = plan.schedule.exponents
    assert list(exps) == [Fraction(3, 4), 1, Fraction(3, 4), 1]
    assert set(plan.claimed.values()) == {Fraction(1, 4)}
    plan = achievability_schedule("NOMA", 2, 3, G=1, alpha=Fraction(1, 3))
    assert list(plan.schedule.exponents) == [Fraction(1, 3), Fraction(2, 3), 1]
    plan = achievability_schedule("RS1", 4, 6, alpha=1)
    assert plan.extras["beta"] == Fraction(1, 3) and len(plan.extras["served"]) == 4
    assert plan.claimed["c"] == Fraction(2, 3)


def test_zero_gain_plan():
    plan = achievability_schedule("NOMA", 3, 6, G=3, alpha=1)
    assert plan.zero_gain and plan.streams == ()


def test_unknown_scheme_and_bad_alpha():
    with pytest.raises(ConfigurationError):
        achievability_schedule("DPC", 2, 2)
    with pytest.raises(ConfigurationError):
        achievability_schedule("RS1", 2, 2, alpha=2)


def test_power_schedule_bounds():
    with pytest.raises(ConfigurationError):
        PowerSchedule((Fraction(3, 2),), (1.0,))
    for scheme, M, K, G, a, metric in [("NOMA", 6, 6, 2, Fraction(1, 3), "mmf"),
                                       ("NOMA", 4, 6, 1, 1, "mmf"),
                                       ("RS1", 3, 6, None, Fraction(1, 2), "sum"),
                                       ("RS1", 4, 6, None, Fraction(1, 5), "mmf")]:
        plan = achievability_schedule(scheme, M, K, G, a, metric)
        assert all(0 <= e <= 1 for e in plan.schedule.exponents)
        for P in (1e3, 1e4, 1e6):
            assert plan.schedule.powers(P).sum() <= P * (1 + 1e-12)


def _fit(P, values):
    return np.polyfit(np.log2(P), np.log2(values), 1)[0]


def test_realized_sinr_matches_rate_module_noma():
    plan = achievability_schedule("NOMA", 2, 3, G=1)
    cs = sample_channels(3, 2, np.ones(3), seed=0)
    pre = realize_schedule(plan, cs, 1e4)
    sinr = expected_sinr(plan, cs, pre)
    # plan users are ordered strongest first, the rate module decodes weakest first
    cfg = StrategyConfig("NOMA", 3, num_groups=1, decoding_orders=((2, 1, 0),))
    X = np.vstack([pre[f"s{k}"] for k in range(3)])
    rep = noma_rates(cs, PrecoderSet(X, None, 1e4), cfg)
    np.testing.assert_allclose(2 ** rep.per_user_rates - 1, [sinr[f"s{k}"] for k in range(3)], rtol=1e-9)


def test_realized_sinr_matches_rate_module_rs():
    plan = achievability_schedule("RS1", 4, 4, alpha=1, metric="sum")
    cs = sample_channels(4, 4, np.ones(4), seed=2)
    pre = realize_schedule(plan, cs, 1e4)
    sinr = expected_sinr(plan, cs, pre)
    X = np.vstack([pre[f"s{k}"] for k in range(4)])
    rep = rs_rates(cs, PrecoderSet(X, pre["c"], 1e4))
    assert 2 ** rep.common_rate - 1 == pytest.approx(sinr["c"], rel=1e-9)
    np.testing.assert_allclose(2 ** rep.private_rates - 1, [sinr[f"s{k}"] for k in range(4)], rtol=1e-9)


def test_sinr_exponent_perfect_csit_constructions():
    P = 10.0 ** np.array([5.0, 6.0, 7.0])
    for scheme, M, K, G, metric in [("NOMA", 2, 3, 1, "mmf"), ("NOMA", 6, 6, 3, "mmf"), ("RS1", 4, 6, None, "mmf")]:
        plan = achievability_schedule(scheme, M, K, G, 1, metric)
        cs = sample_channels(K, M, np.ones(K), seed=4)
        vals = [expected_sinr(plan, cs, realize_schedule(plan, cs, p)) for p in P]
        for name, claimed in plan.claimed.items():
            assert abs(_fit(P, [v[name] for v in vals]) - float(claimed)) < 0.05, (scheme, name)

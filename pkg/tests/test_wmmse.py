import math

import numpy as np
import pytest

from misobc import _inner_py
from misobc.channel import ChannelSet, CsitModel, apply_csit_error, sample_channels
from misobc.errors import ConfigurationError, InvariantViolation, UsageError
from misobc.initpoint import mrt_svd_init
from misobc.rate import PrecoderSet, evaluate
from misobc.strategy import StrategyConfig, stream_layout
from misobc.wmmse import (
    SolveOptions,
    ao_solve,
    build_problem,
    mmse_equalizer,
    mmse_weight,
    mse,
    precoder_update_maxmin,
    precoder_update_sumrate,
    rate_wmmse_gap,
    saa_solve,
    write_trace,
)


def _rand(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _noma_instance(seed=3, K=4, M=2, G=2, P=50.0):
    cs = sample_channels(K, M, np.ones(K), seed=seed)
    cfg = StrategyConfig("NOMA", K, num_groups=G).with_orders(cs)
    X = _rand(np.random.default_rng(seed), (K, M))
    X *= np.sqrt(P / np.sum(np.abs(X) ** 2))
    return cs, cfg, stream_layout(cfg), PrecoderSet(X, None, P)


def test_mse_at_zero_and_mmse_equalizer():
    cs, cfg, lay, ps = _noma_instance()
    for link in lay.links:
        assert mse(cs, ps, lay, link, 0.0) == 1.0
        g = mmse_equalizer(cs, ps, lay, link)
        j, k = link
        e = np.vdot(cs.true_channels[j], ps.matrix()[k])
        inter = sum(abs(np.vdot(cs.true_channels[j], ps.matrix()[s])) ** 2
                    for s in np.flatnonzero(lay.interference[lay.link_index(j, k)]))
        T = abs(e) ** 2 + inter + 1
        assert mse(cs, ps, lay, link, g) == pytest.approx((inter + 1) / T, rel=1e-12)


def test_mmse_equalizer_beats_random_equalizers():
    cs, cfg, lay, ps = _noma_instance(seed=3)
    rng = np.random.default_rng(3)
    for link in lay.links:
        g = mmse_equalizer(cs, ps, lay, link)
        best = mse(cs, ps, lay, link, g)
        for _ in range(100):
            trial = g + complex(*rng.normal(0, 0.5, 2))
            assert best <= mse(cs, ps, lay, link, trial) + 1e-15


def test_mmse_equalizer_examples():
    P = 7.0
    cs = ChannelSet.perfect(np.array([[1.0]]))
    lay = stream_layout(StrategyConfig("MULP", 1))
    ps = PrecoderSet([[np.sqrt(P)]], None, P)
    assert mmse_equalizer(cs, ps, lay, (0, 0)) == pytest.approx(np.sqrt(P) / (P + 1), rel=1e-15)
    zero = PrecoderSet([[0.0]], None, P)
    assert mmse_equalizer(cs, zero, lay, (0, 0)) == 0


def test_mmse_equalizer_is_stationary():
    cs, cfg, lay, ps = _noma_instance(seed=5)
    h = 1e-6
    for link in lay.links:
        g = mmse_equalizer(cs, ps, lay, link)
        for d in (h, 1j * h):
            slope = (mse(cs, ps, lay, link, g + d) - mse(cs, ps, lay, link, g - d)) / (2 * h)
            assert abs(slope) < 1e-6


def test_mmse_weight():
    assert mmse_weight(1.0) == 1.0
    assert mmse_weight(0.25) == 4.0
    for bad in (0.0, -0.5, float("nan")):
        with pytest.raises(InvariantViolation):
            mmse_weight(bad)


def test_rate_wmmse_identity_sweep():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(300):
        K, M = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        cs = sample_channels(K, M, np.ones(K), int(rng.integers(2**31)))
        names = ["MULP", "RS1"] + [f"G{g}" for g in range(1, K) if K % g == 0]
        name = names[int(rng.integers(len(names)))]
        cfg = (StrategyConfig("NOMA", K, num_groups=int(name[1:])) if name.startswith("G")
               else StrategyConfig(name, K)).with_orders(cs)
        lay = stream_layout(cfg)
        P = 10 ** rng.uniform(0, 3)
        X = _rand(rng, (lay.num_streams, M))
        X *= np.sqrt(P / np.sum(np.abs(X) ** 2))
        ps = PrecoderSet.from_matrix(X, K, P)
        worst = max(worst, max(abs(rate_wmmse_gap(cs, ps, lay, l)) for l in lay.links))
    assert worst < 1e-9


def test_rate_wmmse_gap_zero_precoders():
    cs = sample_channels(3, 2, np.ones(3), seed=1)
    lay = stream_layout(StrategyConfig("MULP", 3))
    ps = PrecoderSet(np.zeros((3, 2)), None, 1.0)
    assert all(rate_wmmse_gap(cs, ps, lay, l) == 0.0 for l in lay.links)


def test_solve_options_validation():
    with pytest.raises(ConfigurationError):
        SolveOptions(convergence_tol=0)
    with pytest.raises(ConfigurationError):
        SolveOptions(max_iterations=0)
    with pytest.raises(ConfigurationError):
        SolveOptions(inner_solver="projected-gradient")


def _surrogate_value(problem, X0, X):
    A, b, c = problem.surrogate(X0)
    r = _inner_py.surrogate_rates(X, A, b, c, problem.link_stream, problem.smask)
    return _inner_py.surrogate_objective(r, problem.mode, problem.block_ptr, problem.kind)


def _random_feasible(rng, shape, P):
    X = _rand(rng, shape)
    return X * np.sqrt(P * rng.uniform(0.05, 1.0) / np.sum(np.abs(X) ** 2))


def test_sumrate_update_single_user_is_matched_filter():
    cs = sample_channels(1, 4, [1.0], seed=2)
    P = 10.0
    init = PrecoderSet(_random_feasible(np.random.default_rng(2), (1, 4), P), None, P)
    ps, out = precoder_update_sumrate(cs, init, StrategyConfig("MULP", 1), P)
    p, h = ps.private_precoders[0], cs.true_channels[0]
    cos = abs(np.vdot(h, p)) / (np.linalg.norm(h) * np.linalg.norm(p))
    assert cos == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind,G", [("MULP", None), ("NOMA", 2), ("RS1", None)])
def test_sumrate_update_beats_random_probes(kind, G):
    cs = sample_channels(4, 3, np.ones(4), seed=13)
    cfg = StrategyConfig(kind, 4, num_groups=G).with_orders(cs)
    P = 100.0
    init = mrt_svd_init(cs, cfg, P)
    problem = build_problem(cs.true_channels, cfg, "sum", P)
    ps, out = precoder_update_sumrate(cs, init, cfg, P)
    X0 = init.matrix()
    value = _surrogate_value(problem, X0, ps.matrix())
    # full power at the optimum: every surrogate rate grows along its own precoder
    assert ps.total_power() == pytest.approx(P, rel=1e-5)
    rng = np.random.default_rng(13)
    for _ in range(100):
        probe = _random_feasible(rng, X0.shape, P)
        assert value >= _surrogate_value(problem, X0, probe) - 1e-9


def test_closed_form_update_restricted_to_single_link_blocks():
    cs, cfg, lay, ps = _noma_instance()
    with pytest.raises(UsageError):
        precoder_update_sumrate(cs, ps, cfg, ps.power_budget, SolveOptions(inner_solver="closed-form"))


def test_closed_form_and_barrier_agree_on_mulp():
    cs = sample_channels(3, 3, np.ones(3), seed=21)
    cfg = StrategyConfig("MULP", 3)
    init = mrt_svd_init(cs, cfg, 50.0)
    problem = build_problem(cs.true_channels, cfg, "sum", 50.0)
    a, out_a = precoder_update_sumrate(cs, init, cfg, 50.0, SolveOptions(inner_solver="closed-form"))
    b, _ = precoder_update_sumrate(cs, init, cfg, 50.0, SolveOptions(inner_solver="barrier"))
    va = _surrogate_value(problem, init.matrix(), a.matrix())
    vb = _surrogate_value(problem, init.matrix(), b.matrix())
    assert va == pytest.approx(vb, abs=1e-5)
    assert out_a["rel_gap"] < 1e-8


def test_maxmin_update_beats_random_probes():
    cs = sample_channels(3, 2, np.ones(3), seed=17)
    cfg = StrategyConfig("NOMA", 3, num_groups=1).with_orders(cs)
    P = 100.0
    init = mrt_svd_init(cs, cfg, P)
    problem = build_problem(cs.true_channels, cfg, "maxmin", P)
    ps, out = precoder_update_maxmin(cs, init, cfg, P)
    value = _surrogate_value(problem, init.matrix(), ps.matrix())
    rng = np.random.default_rng(17)
    for _ in range(100):
        probe = _random_feasible(rng, init.matrix().shape, P)
        assert value >= _surrogate_value(problem, init.matrix(), probe) - 1e-6 * (1 + abs(value))


def test_maxmin_update_single_user_matches_sumrate():
    cs = sample_channels(1, 3, [1.0], seed=4)
    cfg = StrategyConfig("MULP", 1)
    init = mrt_svd_init(cs, cfg, 10.0)
    a, _ = precoder_update_sumrate(cs, init, cfg, 10.0)
    b, _ = precoder_update_maxmin(cs, init, cfg, 10.0)
    np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-4)


def test_ao_orthogonal_channels_sum_and_maxmin():
    P = 10 ** 3.0
    cs = ChannelSet.perfect(np.eye(2, dtype=complex))
    cfg = StrategyConfig("MULP", 2)
    init = mrt_svd_init(cs, cfg, P)
    res = ao_solve(cs, cfg, "sum", init)
    assert res.report.sum_rate == pytest.approx(2 * np.log2(1 + P / 2), rel=1e-2)
    res = ao_solve(cs, cfg, "maxmin", init)
    np.testing.assert_allclose(res.report.per_user_rates, np.log2(1 + P / 2), rtol=1e-3)


def test_ao_symmetric_pair_gets_equal_rates():
    P = 100.0
    H = np.array([[1.0, 0.4j], [0.4j, 1.0]])
    cs = ChannelSet.perfect(H)
    cfg = StrategyConfig("MULP", 2)
    res = ao_solve(cs, cfg, "maxmin", mrt_svd_init(cs, cfg, P))
    r = res.report.per_user_rates
    assert abs(r[0] - r[1]) < 1e-4 * max(1.0, r.max())


@pytest.mark.parametrize("seed", range(5))
def test_ao_trace_monotone_noma(seed):
    cs = sample_channels(6, 3, np.ones(6), seed=seed)
    cfg = StrategyConfig("NOMA", 6, num_groups=3).with_orders(cs)
    res = ao_solve(cs, cfg, "sum", mrt_svd_init(cs, cfg, 100.0), SolveOptions(max_iterations=40))
    tr = res.objective_trace
    assert all(b >= a - 1e-9 for a, b in zip(tr, tr[1:]))
    assert res.report.sum_rate == pytest.approx(tr[-1], rel=1e-12)
    assert res.kkt_residual < 1e-4


def test_rs_from_mulp_solution_dominates_mulp():
    P = 100.0
    for seed in range(3):
        cs = sample_channels(4, 2, np.ones(4), seed=seed)
        mu = ao_solve(cs, StrategyConfig("MULP", 4), "sum", mrt_svd_init(cs, StrategyConfig("MULP", 4), P))
        init = PrecoderSet(mu.precoders.private_precoders, np.zeros(2), P)
        rs = ao_solve(cs, StrategyConfig("RS1", 4), "sum", init)
        assert rs.report.sum_rate >= mu.report.sum_rate - 1e-6


def test_ao_rejects_infeasible_init():
    cs = sample_channels(2, 2, np.ones(2), seed=0)
    cfg = StrategyConfig("RS1", 2)
    with pytest.raises(ConfigurationError):
        ao_solve(cs, cfg, "sum", PrecoderSet(np.eye(2), None, 2.0))
    with pytest.raises(ConfigurationError):
        ao_solve(cs, cfg, "median", mrt_svd_init(cs, cfg, 2.0))


def test_ao_reports_kkt_and_slackness():
    cs = sample_channels(4, 4, np.ones(4), seed=8)
    cfg = StrategyConfig("MULP", 4)
    res = ao_solve(cs, cfg, "sum", mrt_svd_init(cs, cfg, 100.0))
    assert res.converged and res.flags == []
    assert res.kkt_residual < 1e-7
    assert res.power_slackness < 1e-7
    p, r, trace = res
    assert p is res.precoders and trace is res.trace


def test_saa_with_zero_error_equals_ao_on_estimate():
    cs = sample_channels(4, 2, np.ones(4), seed=6)
    model = CsitModel.perfect(100.0, 4)
    cfg = StrategyConfig("NOMA", 4, num_groups=2).with_orders(cs, use_estimates=True)
    a = saa_solve(cs, model, 50, cfg, "sum")
    b = ao_solve(cs.as_estimate(), cfg, "sum", mrt_svd_init(cs.as_estimate(), cfg, 100.0))
    np.testing.assert_array_equal(a.precoders.matrix(), b.precoders.matrix())
    assert a.objective_trace == b.objective_trace


def test_saa_trace_monotone_and_deterministic():
    truth = sample_channels(4, 3, np.ones(4), seed=7)
    model = CsitModel(0.5, 100.0)
    est = apply_csit_error(truth, model, seed=8)
    cfg = StrategyConfig("RS1", 4)
    opts = SolveOptions(max_iterations=20, seed=9)
    a = saa_solve(est, model, 40, cfg, "maxmin", opts)
    b = saa_solve(est, model, 40, cfg, "maxmin", opts)
    tr = a.objective_trace
    assert all(y >= x - 1e-9 for x, y in zip(tr, tr[1:]))
    assert np.array_equal(a.precoders.matrix(), b.precoders.matrix())


def test_report_matches_rate_module():
    cs = sample_channels(6, 3, np.ones(6), seed=10)
    cfg = StrategyConfig("NOMA", 6, num_groups=3).with_orders(cs)
    res = ao_solve(cs, cfg, "sum", mrt_svd_init(cs, cfg, 100.0), SolveOptions(max_iterations=10))
    np.testing.assert_allclose(res.report.per_user_rates, evaluate(cs, res.precoders, cfg).per_user_rates,
                               rtol=1e-12)


def test_write_trace(tmp_path):
    cs = sample_channels(2, 2, np.ones(2), seed=0)
    cfg = StrategyConfig("MULP", 2)
    res = ao_solve(cs, cfg, "sum", mrt_svd_init(cs, cfg, 10.0))
    lines = write_trace(res.trace, tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,objective,power_used,max_kkt_residual"
    assert len(lines) == len(res.trace) + 1
    assert math.isnan(float(lines[1].split(",")[3]))

import csv
import math

import numpy as np
import pytest

from misobc import harness
from misobc.channel import sample_channels
from misobc.errors import ConfigurationError
from misobc.harness import (
    ExperimentConfig,
    cell_seeds,
    csv_columns,
    load_config,
    run_cell,
    run_experiment,
    slope_campaign,
    summarize,
    thread_count,
)

SMALL = dict(K=4, M=2, strategies=("RS1", "MULP", "NOMA-G2", "OMA"), snr_grid_dB=(10.0, 20.0),
             n_realizations=2, max_iterations=15)


def test_seeds_are_deterministic_and_share_channels_across_snr():
    a = cell_seeds(3, 1, 0)
    assert a == cell_seeds(3, 1, 0)
    b = cell_seeds(3, 1, 2)
    assert a[0] == b[0] and a[1:] != b[1:]
    assert len(set(a[1:])) == 3
    assert cell_seeds(3, 2, 0)[0] != a[0]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(strategies=("NOMA-G4",))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(alpha=1.5)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(objective="median")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(variance_mode="lognormal")
    cfg = ExperimentConfig(n_saa_samples=50)
    assert cfg.perfect_csit and cfg.eval_samples == 50


def test_load_config_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("K: 4\nM: 2\nalpha: perfect\nstrategies: [MULP, OMA]\nsnr_grid_dB: [10, 20, 30]\n")
    cfg = load_config(path, M=3, seed=None)
    assert (cfg.K, cfg.M, cfg.alpha, cfg.strategies) == (4, 3, None, ("MULP", "OMA"))
    assert cfg.snr_grid_dB == (10.0, 20.0, 30.0)
    path.write_text("K: 4\nbeamformer: zf\n")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_thread_count(monkeypatch):
    monkeypatch.delenv(harness.THREADS_ENV, raising=False)
    assert thread_count() == 1
    monkeypatch.setenv(harness.THREADS_ENV, "3")
    assert thread_count() == 3
    monkeypatch.setenv(harness.THREADS_ENV, "many")
    with pytest.raises(ConfigurationError):
        thread_count()


def test_oma_cell_matches_closed_form():
    cfg = ExperimentConfig(**SMALL)
    row = run_cell(cfg, 0, 1, "OMA")
    cs = sample_channels(4, 2, np.ones(4), cell_seeds(cfg.seed, 0, 1)[0])
    expected = math.log2(1 + np.max(cs.norms()) ** 2 * 100.0)
    assert row["sum"] == pytest.approx(expected, rel=1e-13)
    assert row["mmf"] == 0.0 and row["status"] == "ok" and row["alpha"] == "perfect"


def test_cell_row_layout_and_rs_superset():
    cfg = ExperimentConfig(**{**SMALL, "max_iterations": 60})
    rs = run_cell(cfg, 0, 1, "RS1")
    mu = run_cell(cfg, 0, 1, "MULP")
    assert set(csv_columns(4)) == set(rs)
    assert rs["R_c"] != "" and mu["R_c"] == ""
    assert rs["sum"] == pytest.approx(sum(rs[f"R_{k}"] for k in range(1, 5)), rel=1e-12)
    # RS restarts from the MU-LP solution, so it cannot end below it
    assert rs["sum"] >= mu["sum"] - 1e-6


def test_imperfect_csit_cells():
    cfg = ExperimentConfig(**{**SMALL, "alpha": 0.5, "n_saa_samples": 20, "objective": "maxmin"})
    for s in cfg.strategies:
        row = run_cell(cfg, 1, 0, s)
        assert row["status"] in ("ok", "max_iterations"), row["status"]
        assert row["alpha"] == 0.5
        assert row["mmf"] == pytest.approx(min(row[f"R_{k}"] for k in range(1, 5)), rel=1e-12)


def test_bad_strategy_becomes_error_row(monkeypatch):
    cfg = ExperimentConfig(**SMALL)

    def boom(*a, **k):
        raise ConfigurationError("synthetic failure")

    monkeypatch.setattr(harness, "sample_channels", boom)
    row = run_cell(cfg, 0, 0, "MULP")
    assert row["status"].startswith("error: synthetic failure")
    assert math.isnan(row["sum"])


def test_run_experiment_writes_rows_and_summary(tmp_path):
    out = tmp_path / "rows.csv"
    cfg = ExperimentConfig(**{**SMALL, "strategies": ("MULP", "OMA"), "output_path": str(out)})
    rows = run_experiment(cfg, workers=1)
    assert len(rows) == 2 * 2 * 2
    with open(out) as fh:
        data = list(csv.DictReader(fh))
    assert list(data[0]) == csv_columns(4)
    assert [d["strategy"] for d in data[:4]] == ["MULP", "OMA", "MULP", "OMA"]
    assert float(data[0]["sum"]) == rows[0]["sum"]
    summary = list(csv.DictReader(open(harness.summary_path(out))))
    assert len(summary) == 4 and list(summary[0]) == harness.SUMMARY_COLUMNS


def test_process_pool_matches_serial():
    cfg = ExperimentConfig(**{**SMALL, "strategies": ("MULP", "NOMA-G2"), "n_realizations": 1})
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=2)
    assert [r["sum"] for r in a] == [r["sum"] for r in b]


def test_summarize_statistics_and_exclusions():
    rows = [
        {"strategy": "X", "snr_dB": 10.0, "alpha": "perfect", "sum": 1.0, "mmf": 0.5, "status": "ok"},
        {"strategy": "X", "snr_dB": 10.0, "alpha": "perfect", "sum": 3.0, "mmf": 1.5, "status": "max_iterations"},
        {"strategy": "X", "snr_dB": 10.0, "alpha": "perfect", "sum": math.nan, "mmf": math.nan,
         "status": "invariant: objective decreased"},
    ]
    (e,) = summarize(rows)
    assert (e["n"], e["n_failed"]) == (2, 1)
    assert e["mean_sum"] == 2.0 and e["mean_mmf"] == 1.0
    assert e["se_sum"] == pytest.approx(np.std([1.0, 3.0], ddof=1) / math.sqrt(2), rel=1e-15)


def test_slope_window_validation():
    cfg = ExperimentConfig(**{**SMALL, "snr_grid_dB": (25.0, 30.0, 35.0)})
    with pytest.raises(ConfigurationError):
        slope_campaign(cfg, window=(25.0, 35.0))


def test_oma_slope_is_one(tmp_path):
    cfg = ExperimentConfig(K=4, M=2, strategies=("OMA",), snr_grid_dB=(25.0, 30.0, 35.0, 40.0), n_realizations=5)
    (row,) = slope_campaign(cfg)
    assert row.predicted == 1
    assert row.abs_diff < 0.05
    lines = harness.write_slopes([row], tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "strategy,fitted,stderr,predicted,abs_diff"
    assert lines[1].startswith("OMA,")

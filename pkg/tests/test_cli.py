import io
import subprocess
import sys

import pytest

from misobc import cli, dof, harness


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


def test_emit_golden_tables():
    code, text = run("dof", "--emit-golden-tables")
    assert code == 0
    assert text == dof.golden_tables_csv()
    assert "mmf,4,O,1/6,0,0,1/3" in text.splitlines()


def test_single_value_mode():
    assert run("dof", "--kind", "RS1", "--M", "4", "--metric", "mmf") == (0, "1/3\n")
    assert run("dof", "--kind", "MULP", "--M", "6", "--alpha", "1/2", "--metric", "mmf") == (0, "1/2\n")


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("dof", "--alpha", "half")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("launch")
    assert exc.value.code == 2


def test_configuration_error_exit_1(capsys):
    code, _ = run("dof", "--kind", "NOMA", "--G", "4")
    assert code == 1
    code, _ = run("simulate", "--K", "4", "--strategies", "NOMA-G3")
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_simulate_small_campaign(tmp_path):
    out = tmp_path / "r.csv"
    code, text = run("simulate", "--K", "3", "--M", "2", "--strategies", "MULP", "OMA", "--snr", "10", "20",
                     "--realizations", "2", "--max-iterations", "20", "-o", str(out))
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == ",".join(harness.SUMMARY_COLUMNS)
    assert len(lines) == 1 + 2 * 2
    assert out.read_text().splitlines()[0] == ",".join(harness.csv_columns(3))
    assert harness.summary_path(out).exists()


def test_simulate_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("K: 3\nM: 2\nstrategies: [OMA]\nsnr_grid_dB: [10]\nn_realizations: 3\n")
    code, text = run("simulate", "--config", str(cfg), "--snr", "20")
    assert code == 0
    assert text.splitlines()[1].startswith("OMA,20.0,perfect,3,0,")


def test_invariant_violation_exit_3(monkeypatch, capsys):
    def fake(cfg, **kw):
        row = {"strategy": "MULP", "snr_dB": 10.0, "alpha": "perfect", "seed": 1, "sum": float("nan"),
               "mmf": float("nan"), "status": "invariant: objective decreased"}
        return [row]

    monkeypatch.setattr(harness, "run_experiment", fake)
    code, _ = run("simulate", "--K", "3", "--M", "2", "--strategies", "MULP")
    assert code == 3
    assert "invariant violation" in capsys.readouterr().err


def test_slopes_subcommand():
    code, text = run("slopes", "--K", "3", "--M", "2", "--strategies", "OMA", "--realizations", "3")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "strategy,fitted,stderr,predicted,abs_diff"
    name, fitted, _, predicted, diff = lines[1].split(",")
    assert name == "OMA" and predicted == "1" and float(diff) < 0.05


def test_selftest_passes():
    code, text = run("selftest")
    assert code == 0, text
    assert "FAIL" not in text
    assert text.splitlines()[-1].startswith("backend: ")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "misobc", "dof", "--kind", "NOMA", "--G", "1", "--M", "4",
                          "--metric", "mmf"], capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout == "1/6\n"

import numpy as np
import pytest

from clonal_selection import output
from clonal_selection.cli import main
from clonal_selection.model import feedback_signal

K = 1.75e-9


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def cal1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cal1")
    assert run_cli("simulate", "--preset", "cal1-single", "--out", out) == 0
    return out


def test_simulate_writes_files(cal1_run):
    for name in ("totals.csv", "heatmap_stage1.csv", "heatmap_stage2.csv", "heatmap_stage3.csv", "report.txt"):
        assert (cal1_run / name).exists()
    totals = output.read_csv(cal1_run / "totals.csv")
    assert list(totals) == ["t", "rho_1", "rho_2", "rho_3", "s"]
    assert totals["t"][-1] == 1e4
    assert totals["rho_3"][-1] == pytest.approx(4.4171e8, rel=0.02)


def test_signal_column_roundtrips(cal1_run):
    totals = output.read_csv(cal1_run / "totals.csv")
    np.testing.assert_allclose(feedback_signal(totals["rho_3"], K), totals["s"], rtol=1e-15)


def test_heatmap_is_normalised(cal1_run):
    heat = output.read_csv(cal1_run / "heatmap_stage1.csv")
    t = heat["t"]
    last = t == t[-1]
    assert last.sum() == 200
    assert np.sum(heat["density"][last]) / 200 == pytest.approx(1.0, rel=1e-12)


def test_report_machine_section(cal1_run):
    m = output.read_machine_section(cal1_run / "report.txt")
    assert m["preset"] == "cal1-single"
    assert m["full_support_1"] == "false"
    assert m["theorem_signs_ok"] == "true"
    assert m["bound_violations"] == "0"
    assert m["clamp_count"] == "0"
    assert m["oscillation_3"] == "converged"
    assert float(m["final_rho_3"]) == pytest.approx(4.4171e8, rel=0.02)


def test_flat_run_reports_full_support(tmp_path):
    assert run_cli("simulate", "--preset", "cal1-flat", "--out", tmp_path) == 0
    m = output.read_machine_section(tmp_path / "report.txt")
    assert [m[f"full_support_{i}"] for i in (1, 2, 3)] == ["true"] * 3


def test_outputs_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("simulate", "--preset", "cal2-hopf", "--horizon", 50, "--out", tmp_path / sub) == 0
    for name in ("totals.csv", "heatmap_stage1.csv", "heatmap_stage3.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("preset = cal1-multi\nsolver.horizon = 1e4\noutput.totals_every = 1\n")
    assert run_cli("simulate", "--config", cfg, "--horizon", 2, "--dt", 0.02, "--grid", 100, "--out", tmp_path / "o") == 0
    totals = output.read_csv(tmp_path / "o" / "totals.csv")
    np.testing.assert_allclose(totals["t"], np.arange(0, 2.01, 0.02))
    heat = output.read_csv(tmp_path / "o" / "heatmap_stage1.csv")
    assert len(np.unique(heat["x"])) == 100


def test_usage_errors(tmp_path, capsys):
    assert run_cli("simulate", "--preset", "cal1-single", "--dt", 0, "--out", tmp_path) == 2
    assert "solver.dt" in capsys.readouterr().err
    assert run_cli("simulate", "--preset", "cal1-single", "--horizon", 0, "--out", tmp_path) == 2
    assert run_cli("simulate", "--config", tmp_path / "missing.cfg") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("preset = cal1-single\nsolver.dtt = 1\n")
    assert run_cli("simulate", "--config", bad) == 2
    assert "line 2" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        run_cli("reproduce", "--figure", "fig9")
    assert err.value.code == 2


def test_runtime_errors(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_cli("simulate", "--preset", "cal1-single", "--horizon", 1, "--out", blocker / "sub") == 3
    assert run_cli("simulate", "--preset", "cal1-single", "--dt", 0.4, "--horizon", 4, "--out", tmp_path / "o") == 3
    assert "dt" in capsys.readouterr().err


def test_misaligned_grid_warns(tmp_path, caplog):
    assert run_cli("simulate", "--preset", "cal1-single", "--grid", 201, "--horizon", 1, "--out", tmp_path) == 0
    assert "divisible by 20" in caplog.text


def test_reproduce_fig2(tmp_path):
    assert run_cli("reproduce", "--figure", "fig2", "--out", tmp_path) == 0
    m = output.read_machine_section(tmp_path / "fig2_report.txt")
    assert m["cal1-single.black_lines"] == "0.6" and m["cal1-single.white_lines"] == "0.4"
    heat = output.read_csv(tmp_path / "fig2_stage1.csv")
    last = heat["t"] == 1e4
    peak = heat["x"][last][np.argmax(heat["density"][last])]
    assert abs(peak - 0.6) < abs(peak - 0.4)
    assert abs(peak - 0.6) <= 0.05
    inset = output.read_csv(tmp_path / "fig2_inset_stage1.csv")
    assert inset["t"].max() == 500


def test_reproduce_fig5(tmp_path):
    assert run_cli("reproduce", "--figure", "fig5", "--out", tmp_path) == 0
    for name in ("cal1-single", "cal1-multi", "cal1-flat"):
        totals = output.read_csv(tmp_path / f"fig5_{name}_totals.csv")
        tail = totals["t"] >= 9000
        for col in ("rho_1", "rho_2", "rho_3"):
            v = totals[col][tail]
            assert np.ptp(v) / v.mean() < 0.01


def test_reproduce_fig7(tmp_path):
    assert run_cli("reproduce", "--figure", "fig7", "--out", tmp_path) == 0
    m = output.read_machine_section(tmp_path / "fig7_report.txt")
    assert m["cal2-hopf.oscillation_3"] == "sustained"


def test_verify_passes(capsys, tmp_path):
    assert run_cli("verify", "--suite", "bounds", "--out", tmp_path) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("check=bounds status=PASS")
    assert lines[-1] == "overall=PASS"


def test_verify_ode_equivalence_short(capsys, tmp_path):
    assert run_cli("verify", "--suite", "ode-equivalence", "--horizon", 200, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "check=ode-equivalence status=PASS" in out


def test_verify_all_is_conjunction(capsys, tmp_path):
    # the oscillating preset has no persistent stem-stage growth, so the theorem check fails
    code = run_cli("verify", "--suite", "all", "--preset", "cal2-hopf", "--horizon", 2000, "--out", tmp_path)
    lines = capsys.readouterr().out.splitlines()
    statuses = [l.split()[1] for l in lines if l.startswith("check=")]
    assert len(statuses) == 3
    assert code == (0 if all(s == "status=PASS" for s in statuses) else 1)
    assert "status=FAIL" in " ".join(statuses) and code == 1
    assert (tmp_path / "verify_all.txt").read_text().endswith("overall=FAIL\n")

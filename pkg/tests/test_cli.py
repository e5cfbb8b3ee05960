import json
import subprocess
import sys

import pytest

from socialtrend import cli
from socialtrend.cli import main, parse_param
from socialtrend.engine import EngineError, run_single


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "fig3"
    assert main(["simulate", "fig3", "--out", str(out), "--horizon", "150"]) == 0
    text = capsys.readouterr().out
    assert "final truth-beliefs" in text and "guard minimum" in text
    for name in ("trace.csv", "summary.json", "plot_network.csv", "plot_beliefs.csv", "plot_rates.csv"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["horizon"] == 150 and summary["seed"] == 2023


def test_simulate_is_byte_stable(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "fig4", "--out", str(tmp_path / d), "--horizon", "120", "--seed", "4"]) == 0
    for name in ("trace.csv", "summary.json", "plot_beliefs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_zero_horizon(tmp_path):
    assert main(["simulate", "fig3", "--out", str(tmp_path), "--horizon", "0"]) == 0
    assert (tmp_path / "trace.csv").read_text() == "time,agent,hypothesis,log_belief,tau,Q\n"


def test_simulate_several_runs(tmp_path):
    assert main(["simulate", "fig3", "--out", str(tmp_path), "--horizon", "20", "--runs", "2"]) == 0
    assert (tmp_path / "trace_run000.csv").is_file() and (tmp_path / "trace_run001.csv").is_file()


def test_simulate_engine_error_writes_partial(tmp_path, capsys, monkeypatch, fig3):
    # valid configs cannot fail mid-run, so inject the failure
    partial = run_single(fig3.replace(horizon=3))

    def failing(config, workers=1):
        raise EngineError("run 0 failed: observation is impossible (agent 2, time 4)", partial)

    monkeypatch.setattr(cli, "run_experiment", failing)
    assert main(["simulate", "fig3", "--out", str(tmp_path)]) == 1
    assert "agent 2, time 4" in capsys.readouterr().err
    assert len((tmp_path / "trace_partial.csv").read_text().splitlines()) == 1 + 4 * 50


def test_invalid_config_lists_errors(tmp_path, capsys):
    cfg = tmp_path / "x.cfg"
    cfg.write_text('[experiment]\nprotocol = "trending"\ntruth = 0\nspeed = 2\n'
                   '[network]\nadjacency = [[1], [0]]\n[hypotheses]\ncount = 2\n'
                   '[[agent]]\nkind = "gaussian"\nmeans = [0, 1]\nrepeat = 2\n')
    assert main(["simulate", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "speed" in err and "experiment.trend" in err


def test_missing_config(tmp_path, capsys):
    assert main(["rates", str(tmp_path / "none.cfg")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_rates_table(tmp_path, capsys):
    assert main(["rates", "fig3", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "-0.036000" in text and "-0.504000" in text
    data = json.loads((tmp_path / "rates.json").read_text())
    assert [r["theta"] for r in data["rates"]] == [1, 2, 3, 4]


def test_rates_flags_unidentifiable(tmp_path, capsys):
    cfg = tmp_path / "flat.cfg"
    cfg.write_text('[experiment]\nprotocol = "full"\ntruth = 0\n'
                   '[network]\nadjacency = [[1], [0]]\n[hypotheses]\ncount = 3\n'
                   '[[agent]]\nkind = "gaussian"\nmeans = [0.5, 0.5, 0.5]\nrepeat = 2\n')
    assert main(["rates", str(cfg), "--out", str(tmp_path)]) == 0
    captured = capsys.readouterr()
    assert "UNIDENTIFIABLE" in captured.out and "not identifiable" in captured.err


def test_rates_single_informative_agent(tmp_path):
    cfg = tmp_path / "one.cfg"
    cfg.write_text('[experiment]\nprotocol = "full"\ntruth = 0\n'
                   '[network]\nadjacency = [[1], [0]]\n[hypotheses]\ncount = 2\n'
                   '[[agent]]\nkind = "gaussian"\nmeans = [0.0, 1.0]\n'
                   '[[agent]]\nkind = "gaussian"\nmeans = [0.0, 0.0]\n')
    assert main(["rates", str(cfg), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "rates.json").read_text())
    assert data["rates"][0]["d_ave"] == pytest.approx(-0.5 * 0.5)


def test_verify_selector(tmp_path, capsys):
    assert main(["verify", "fixed_point", "--out", str(tmp_path)]) == 0
    reports = json.loads((tmp_path / "reports.json").read_text())
    assert len(reports) == 31 and all(r["passed"] for r in reports)
    assert "31/31 checks passed" in (tmp_path / "summary.txt").read_text()


def test_verify_unknown_check(capsys):
    assert main(["verify", "nonsense"]) == 2
    err = capsys.readouterr().err
    assert "nonsense" in err and "fixed_point" in err


def test_sweep(tmp_path, capsys):
    args = ["sweep", "wrong_fill", "--out", str(tmp_path), "--horizon", "100",
            "--param", "tau=1,2", "--param", "seed=1,2"]
    assert main(args) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "point,experiment.tau,experiment.seed,min_final_truth_belief,guard_minimum"
    assert len(rows) == 5


def test_sweep_reports_bad_points(tmp_path):
    assert main(["sweep", "wrong_fill", "--out", str(tmp_path), "--horizon", "10",
                 "--param", "tau=1,9"]) == 1
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 2


def test_parse_param():
    assert parse_param("seed=1,2") == ("experiment.seed", [1, 2])
    assert parse_param("experiment.trend=[1,0]") == ("experiment.trend", ["[1", "0]"])
    with pytest.raises(Exception):
        parse_param("seed")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "socialtrend", "rates", "fig4", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "d_ave" in proc.stdout


def test_verify_all_seed_7(tmp_path, capsys):
    assert main(["verify", "all", "--seed", "7", "--out", str(tmp_path)]) == 0
    reports = json.loads((tmp_path / "reports.json").read_text())
    names = {r["name"].split("[")[0] for r in reports}
    assert {"rate_convergence", "supermartingale", "no_mislearning", "residual"} <= names

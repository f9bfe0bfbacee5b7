import csv
import json

import pytest
import yaml

from delayflock import scenarios
from delayflock.cli import main, parse_grid
from delayflock.errors import ConfigError

MINIMAL = {"model": "first", "n_agents": 2}


def _write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else yaml.safe_dump(doc))
    return str(path)


def test_run_minimal(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", _write(tmp_path, MINIMAL), "--out", str(out)]) == 0
    assert (out / "trajectory.csv").exists()
    bundle = json.loads((out / "bundle.json").read_text())
    assert bundle["report_path"] is None
    assert capsys.readouterr().out.startswith("t d\n")


def test_run_broken_config(tmp_path, capsys):
    cfg = _write(tmp_path, {**MINIMAL, "integrator": {"stepsize": 0.1}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "integrator.stepsize" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2


def test_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, scenarios.flagship())
    for name in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("trajectory.csv", "config.yaml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_verify_flagship(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--config", _write(tmp_path, scenarios.flagship()), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    bundle = json.loads((out / "bundle.json").read_text())
    assert report["passed"] and report["config_hash"] == bundle["config_hash"]
    assert main(["report", str(out)]) == 0


def test_verify_dark_link_stops_before_integration(tmp_path, capsys):
    doc = {**scenarios.flagship()}
    doc["weights"] = {**doc["weights"], "overrides": [
        {"pair": [0, 1], "family": "constant", "value": 0.0}]}
    out = tmp_path / "v"
    assert main(["verify", "--config", _write(tmp_path, doc), "--out", str(out)]) == 2
    assert "persistence of excitation" in capsys.readouterr().err
    assert not out.exists()


def test_verify_convergent_kernel_warns(tmp_path, capsys):
    doc = scenarios.random_second_order(3, windows=4)
    doc["influence"] = {"family": "radial_exponential", "K0": 1.0, "lam": 1.0}
    out = tmp_path / "v"
    code = main(["verify", "--config", _write(tmp_path, doc), "--out", str(out)])
    assert code in (0, 4)
    assert "does not apply" in capsys.readouterr().err
    report = json.loads((out / "report.json").read_text())
    assert report["checks"] and any("does not apply" in n for n in report["notes"])


def test_verify_tolerance_flag(tmp_path):
    out = tmp_path / "v"
    cfg = _write(tmp_path, scenarios.flagship())
    assert main(["verify", "--config", cfg, "--out", str(out), "--tolerance", "1e-3"]) == 0
    snap = yaml.safe_load((out / "config.yaml").read_text())
    assert snap["analysis"]["rel_tol"] == 1e-3


def test_bounds_default_two_agents(tmp_path, capsys):
    assert main(["bounds", "--config", _write(tmp_path, MINIMAL)]) == 0
    lines = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert lines["Gamma"] == "0.135335283237"
    assert lines["psi0"] == "1"


def test_bounds_vanishing_table(tmp_path, capsys):
    doc = {**MINIMAL, "influence": {"family": "table", "r": [0.0, 0.1], "values": [1.0, 0.0]}}
    assert main(["bounds", "--config", _write(tmp_path, doc)]) == 2
    assert "reaches" in capsys.readouterr().err


def test_bounds_normalisation_warning(tmp_path, capsys):
    doc = {**MINIMAL, "influence": {"family": "constant", "K0": 2.0}}
    assert main(["bounds", "--config", _write(tmp_path, doc)]) == 0
    captured = capsys.readouterr()
    assert "normalisation" in captured.err
    assert "Gamma = " in captured.out


def test_bounds_degenerate_contraction(tmp_path):
    doc = {**MINIMAL, "influence": {"family": "constant", "K0": 1000.0}}
    assert main(["bounds", "--config", _write(tmp_path, doc)]) == 4


def test_bounds_second_order_with_trajectory(tmp_path, capsys):
    doc = scenarios.closed_form_second()
    cfg = _write(tmp_path, doc)
    assert main(["bounds", "--config", cfg]) == 0
    assert "mu = None" in capsys.readouterr().out
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    traj = str(tmp_path / "r" / "trajectory.csv")
    assert main(["bounds", "--config", cfg, "--trajectory", traj]) == 0
    mu = [l for l in capsys.readouterr().out.splitlines() if l.startswith("mu = ")][0]
    assert float(mu.split(" = ")[1]) > 0


def test_parse_grid():
    assert parse_grid("tau=0,0.5;N=3,4") == {"tau": [0.0, 0.5], "N": [3, 4]}
    for bad in ("", "tau", "gamma=1", "tau=a", "tau=1;tau=2"):
        with pytest.raises(ConfigError):
            parse_grid(bad)
    with pytest.raises(ConfigError):
        parse_grid("tau=" + ",".join(["1"] * 101) + ";T=" + ",".join(["1"] * 100))


def test_sweep_single_cell_matches_verify(tmp_path):
    cfg = _write(tmp_path, scenarios.flagship())
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--grid", "beta=1"]) == 0
    for f in ("report.json", "trajectory.csv"):
        assert (tmp_path / "v" / f).read_bytes() == (tmp_path / "s" / "cell_0000" / f).read_bytes()


def test_sweep_over_delay(tmp_path):
    cfg = _write(tmp_path, scenarios.flagship())
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--grid", "tau=0,0.5,1"]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 3 and all(r["passed"] == "True" for r in rows)
    rates = [float(r["certified_rate"]) for r in rows]
    assert rates[0] > rates[1] > rates[2]


def test_sweep_records_failing_cells(tmp_path):
    cfg = _write(tmp_path, scenarios.flagship())
    out = tmp_path / "s"
    code = main(["sweep", "--config", cfg, "--out", str(out), "--grid", "duty=0.5,0"])
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert code == 4
    assert [r["status"] for r in rows] == ["pass", "error"]
    assert rows[1]["exit_code"] == "2"


def test_report_on_missing_bundle(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == 2

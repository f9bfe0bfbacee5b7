import json

import numpy as np
import pytest

from delayflock import analysis as A
from delayflock.config import build_scenario, normalize
from delayflock.dynamics import integrate
from delayflock.errors import FormatError
from delayflock.scenarios import flagship
from delayflock.storage import read_trajectory, write_report, write_trajectory

from helpers import constant_points, scenario


def test_row_count(tmp_path):
    sc = scenario(points=constant_points([0.0, 1.0]), horizon=1.0)
    traj = integrate(sc)
    path = tmp_path / "t.csv"
    write_trajectory(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,agent,component_0"
    assert len(lines) - 1 == len(traj.times) * 2


def test_header_second_order(tmp_path):
    traj = integrate(scenario(dim=2, order="second", horizon=0.1))
    write_trajectory(traj, tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header == "t,agent,component_0,component_1,v_component_0,v_component_1"


def test_history_only_round_trip(tmp_path):
    sc = scenario(n=3, dim=2, tau=0.5, horizon=0.0)
    traj = integrate(sc)
    path = tmp_path / "h.csv"
    write_trajectory(traj, path)
    times = {line.split(",")[0] for line in path.read_text().splitlines()[1:]}
    assert times == {"-0.5", "0"}
    back = read_trajectory(path)
    assert np.array_equal(back.states, traj.states)
    assert np.allclose(back.state(-0.25), traj.state(-0.25))


def test_round_trip_states(tmp_path):
    sc = build_scenario(normalize(flagship()))
    traj = integrate(sc)
    path = tmp_path / "f.csv"
    write_trajectory(traj, path)
    for back in (read_trajectory(path), read_trajectory(path, sc)):
        assert np.max(np.abs(back.times - traj.times)) <= 1e-12
        assert np.max(np.abs(back.states - traj.states)) <= 1e-12


def test_round_trip_keeps_check_results(tmp_path):
    sc = build_scenario(normalize(flagship()))
    traj = integrate(sc)
    path = tmp_path / "f.csv"
    write_trajectory(traj, path)
    back = read_trajectory(path, sc)
    c = A.first_order_constants(sc)
    dirs = A.directions(2)
    a = A.check_first_order(sc, traj, c, dirs)
    b = A.check_first_order(sc, back, c, dirs)
    assert [x.passed for x in a.checks] == [x.passed for x in b.checks]
    assert [x.margin for x in a.checks] == [x.margin for x in b.checks]


@pytest.mark.parametrize("body, line", [
    ("", 1),
    ("x,agent,component_0\n", 1),
    ("t,agent,component_0\n0,0,1.0\n0,1\n", 3),
    ("t,agent,component_0\n0,0,abc\n", 2),
    ("t,agent,component_0\n0,1,1.0\n0,0,2.0\n", 2),
])
def test_format_errors(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(FormatError) as err:
        read_trajectory(path)
    assert err.value.line == line


def test_empty_report(tmp_path):
    path = tmp_path / "r.json"
    write_report(A.BoundReport(order="first"), path)
    doc = json.loads(path.read_text())
    assert doc["checks"] == [] and doc["passed"] is True


def test_report_is_stable(tmp_path):
    sc = build_scenario(normalize(flagship()))
    paths = []
    for k in range(2):
        traj = integrate(sc)
        rep = A.check_first_order(sc, traj, A.first_order_constants(sc), A.directions(2))
        paths.append(tmp_path / f"r{k}.json")
        write_report(rep, paths[-1], config_hash="abc", tool_version="0")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    names = {c["name"] for c in json.loads(paths[0].read_text())["checks"]}
    assert {"decay", "contraction", "projection_contraction", "boundedness",
            "diameter_by_interval", "kernel_floor"} <= names

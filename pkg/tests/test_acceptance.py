"""Acceptance suite.

One test per acceptance criterion; each prints a single ``criterion N: PASS``
or ``FAIL`` line (visible even without ``-s``).  Criteria 3, 4, 5 and 9
share the randomized verification runs, which are executed once per module.
"""

import json
import math
import time

import numpy as np
import pytest
import yaml

from delayflock import analysis as A
from delayflock import scenarios
from delayflock.cli import main
from delayflock.config import build_scenario, normalize
from delayflock.dynamics import integrate
from delayflock.signals import WeightSchedule, pe_margin
from delayflock.topology import Digraph, depth, make_digraph, strongly_connected

from oracles import dense_window_minimum, floyd_warshall, transitive_closure

N_FIRST = 50
N_SECOND = 25


@pytest.fixture
def announce(capsys):
    def _announce(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return _announce


def _verify_many(root, docs):
    runs = []
    start = time.perf_counter()
    for k, doc in enumerate(docs):
        cfg_path = root / f"scenario_{k:02d}.yaml"
        cfg_path.write_text(yaml.safe_dump(doc))
        out = root / f"run_{k:02d}"
        code = main(["verify", "--config", str(cfg_path), "--out", str(out)])
        report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
        runs.append({"config": cfg_path, "out": out, "code": code, "report": report})
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def first_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("first")
    return _verify_many(root, [scenarios.random_first_order(s) for s in range(N_FIRST)])


@pytest.fixture(scope="module")
def second_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("second")
    return _verify_many(root, [scenarios.random_second_order(s) for s in range(N_SECOND)])


def _check(run, name):
    for c in run["report"]["checks"]:
        if c["name"] == name:
            return c
    raise KeyError(name)


def test_criterion_1_first_order_closed_form(announce):
    sc = build_scenario(normalize(scenarios.closed_form_first()))
    start = time.perf_counter()
    traj = integrate(sc)
    elapsed = time.perf_counter() - start
    ts = np.array([0.5, 1.0, 2.0])
    err = float(np.max(np.abs(A.diameter(traj, ts) - np.exp(-2 * ts))))
    announce(1, err <= 1e-6 and elapsed < 1.0, f"max error {err:.2e}, runtime {elapsed:.2f} s")


def test_criterion_2_second_order_closed_form(announce):
    sc = build_scenario(normalize(scenarios.closed_form_second()))
    start = time.perf_counter()
    traj = integrate(sc)
    elapsed = time.perf_counter() - start
    dx, dv = A.diameters_xv(traj, traj.times)
    err = float(np.max(np.abs(dv - dv[0] * np.exp(-2 * traj.times))))
    early = dx[traj.times <= 0.75 * traj.horizon].max()
    growth = float((dx.max() - early) / early)
    ok = err <= 1e-6 and growth <= 1e-3 and elapsed < 1.0
    announce(2, ok, f"velocity error {err:.2e}, last-quarter growth {growth:.2e}, "
                    f"runtime {elapsed:.2f} s")


def test_criterion_3_first_order_theorem(first_runs, announce):
    runs, elapsed = first_runs
    exits = [r["code"] for r in runs]
    checks_ok = all(_check(r, "decay")["passed"] and _check(r, "contraction")["passed"]
                    for r in runs if r["report"])
    ok = exits == [0] * N_FIRST and checks_ok and elapsed < 300
    announce(3, ok, f"{exits.count(0)}/{N_FIRST} scenarios exit 0, {elapsed:.0f} s")


def test_criterion_4_second_order_theorem(second_runs, announce):
    runs, elapsed = second_runs
    exits = [r["code"] for r in runs]
    names = ("velocity_contraction", "velocity_decay", "delayed_distance")
    checks_ok = all(_check(r, n)["passed"] for r in runs if r["report"] for n in names)
    ok = exits == [0] * N_SECOND and checks_ok and elapsed < 600
    announce(4, ok, f"{exits.count(0)}/{N_SECOND} scenarios exit 0, {elapsed:.0f} s")


def test_criterion_5_lemma_suite(first_runs, second_runs, announce):
    violations = 0
    evaluated = 0
    lemma_checks = {"first": ("boundedness", "projection_bounds"),
                    "second": ("velocity_bounded", "velocity_projection_bounds")}
    for runs, order in ((first_runs[0], "first"), (second_runs[0], "second")):
        for r in runs:
            consts = r["report"]["constants"]
            scale = max(1.0, consts["C0"] if order == "first" else consts["C0V"])
            for name in lemma_checks[order]:
                c = _check(r, name)
                evaluated += c["evaluations"]
                if c["margin"] < -1e-9 * scale or c["tolerance"] > 1e-9 * scale * (1 + 1e-12):
                    violations += 1
    announce(5, violations == 0, f"{violations} violations over {evaluated} evaluations")


def test_criterion_6_graph_oracles(announce):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        chi = (rng.random((n, n)) < rng.uniform(0.1, 0.9)).astype(int)
        np.fill_diagonal(chi, 0)
        g = Digraph(chi)
        closure = transitive_closure(chi.tolist())
        sc = all(all(row) for row in closure)
        if strongly_connected(g) != sc:
            mismatches += 1
        elif sc and depth(g) != max(max(row) for row in floyd_warshall(chi.tolist())):
            mismatches += 1
    rings = all(depth(make_digraph("ring", n)) == n - 1 for n in range(2, 11))
    announce(6, mismatches == 0 and rings, f"{mismatches} mismatches in 200 digraphs, "
                                           f"ring depths {'ok' if rings else 'wrong'}")


def test_criterion_7_pe_exactness(announce):
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        spec = scenarios.random_periodic_schedule(rng)
        bps, vals = spec["breakpoints"], spec["values"]
        period = bps[-1]
        w = WeightSchedule(tuple(bps), tuple(vals), periodic=True)
        T = int(rng.integers(1, 3001)) * scenarios.LATTICE * period
        ref = dense_window_minimum(bps, vals, T, scenarios.LATTICE * period)
        worst = max(worst, abs(pe_margin(w, T) - ref))
    announce(7, worst <= 1e-9, f"worst disagreement {worst:.2e} over 100 schedules")


def test_criterion_8_convergence_order(announce):
    errors = []
    for h in (4e-3, 2e-3, 1e-3):
        doc = scenarios.closed_form_first()
        doc["integrator"]["h"] = h
        traj = integrate(build_scenario(normalize(doc)))
        ts = np.array([0.5, 1.0, 2.0])
        errors.append(float(np.max(np.abs(A.diameter(traj, ts) - np.exp(-2 * ts)))))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    ok = all(8 <= r <= 32 for r in ratios)
    announce(8, ok, "error ratios " + ", ".join(f"{r:.2f}" for r in ratios))


def test_criterion_9_determinism(first_runs, tmp_path, announce):
    runs, _ = first_runs
    first = runs[0]
    out = tmp_path / "repeat"
    code = main(["verify", "--config", str(first["config"]), "--out", str(out)])
    same = all((first["out"] / f).read_bytes() == (out / f).read_bytes()
               for f in ("trajectory.csv", "report.json", "config.yaml"))
    announce(9, code == first["code"] and same,
             "trajectory, report and config snapshot byte-identical" if same else "files differ")

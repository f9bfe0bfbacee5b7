"""Trajectory CSV files, report documents and run bundles.

Trajectory CSV columns are ``t, agent, component_0 .. component_{d-1}`` and,
for the second-order model, ``v_component_0 ..``.  History knots (``t < 0``)
come first, then one row per grid time and agent.  Times are written in
positional notation with 12 significant digits and state values with the
shortest repr that round-trips exactly.
"""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .dynamics import Trajectory, build_grid, rebuild
from .errors import FormatError

BUNDLE_FILE = "bundle.json"
CONFIG_FILE = "config.yaml"
TRAJECTORY_FILE = "trajectory.csv"
REPORT_FILE = "report.json"


def format_time(t):
    return np.format_float_positional(float(t), precision=12, unique=False,
                                      fractional=False, trim="-")


def _header(dim, order):
    cols = ["t", "agent"] + [f"component_{c}" for c in range(dim)]
    if order == "second":
        cols += [f"v_component_{c}" for c in range(dim)]
    return cols


def write_trajectory(traj, path):
    """Write ``traj`` as CSV (see module docstring for the layout)."""
    knots = traj.history_knots()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(traj.dimension, traj.order))
        blocks = []
        if knots.size:
            blocks.append((knots, traj.state(knots)))
        blocks.append((traj.times, traj.states))
        for times, states in blocks:
            for t, row in zip(times, states):
                ts = format_time(t)
                for a, vals in enumerate(row):
                    w.writerow([ts, a] + [repr(float(x)) for x in vals])


def _parse_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(1, "file is empty") from None
        if header[:2] != ["t", "agent"]:
            raise FormatError(1, "header must start with t,agent")
        comps = header[2:]
        dim = sum(1 for c in comps if c.startswith("component_"))
        if dim == 0:
            raise FormatError(1, "no component columns")
        if comps == _header(dim, "first")[2:]:
            order = "first"
        elif comps == _header(dim, "second")[2:]:
            order = "second"
        else:
            raise FormatError(1, "unexpected component columns")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(line_no, f"expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[0])
                agent = int(row[1])
                vals = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise FormatError(line_no, str(exc)) from None
            if not all(math.isfinite(x) for x in [t] + vals):
                raise FormatError(line_no, "non-finite value")
            rows.append((line_no, t, agent, vals))
    if not rows:
        raise FormatError(2, "no data rows")
    return dim, order, rows


def _group(rows):
    """Group rows into ``(times, states)`` after checking agent ordering."""
    n = max(r[2] for r in rows) + 1
    if len(rows) % n:
        raise FormatError(rows[-1][0], f"row count is not a multiple of {n} agents")
    times, states = [], []
    for k in range(0, len(rows), n):
        block = rows[k:k + n]
        t = block[0][1]
        for a, (line_no, tb, agent, _) in enumerate(block):
            if agent != a or tb != t:
                raise FormatError(line_no, f"expected agent {a} at t={t!r}")
        if times and t <= times[-1]:
            raise FormatError(block[0][0], "times must increase")
        times.append(t)
        states.append([r[3] for r in block])
    return np.array(times), np.array(states)


def read_trajectory(path, scenario=None):
    """Load a trajectory CSV.

    With ``scenario`` the time grid is matched to the scenario's own grid
    (absorbing the 12-digit time rounding) and node derivatives are
    recomputed from the model, so the result interpolates exactly like the
    original run.  Without it derivatives are estimated by finite differences.
    """
    dim, order, rows = _parse_rows(path)
    times, states = _group(rows)
    neg = times < 0
    grid_t, grid_s = times[~neg], states[~neg]
    if grid_t.size == 0 or grid_t[0] != 0:
        raise FormatError(rows[-1][0], "trajectory must contain t = 0")
    if scenario is not None:
        if scenario.n_agents != states.shape[1] or scenario.state_dim != states.shape[2]:
            raise FormatError(2, "file does not match the scenario dimensions")
        expected = build_grid(scenario)
        if len(expected) == len(grid_t) and np.allclose(expected, grid_t, rtol=0, atol=1e-9):
            grid_t = expected
        return rebuild(scenario, grid_t, grid_s)
    if len(grid_t) > 1:
        deriv = np.gradient(grid_s, grid_t, axis=0)
    else:
        deriv = np.zeros_like(grid_s)
    hist_t = np.concatenate([times[neg], [0.0]])
    hist_v = np.concatenate([states[neg], grid_s[:1]])
    n = states.shape[1]
    return Trajectory(
        times=grid_t, states=grid_s, deriv_right=deriv, deriv_left=deriv.copy(),
        history_times=[hist_t] * n, history_values=[hist_v[:, a] for a in range(n)],
        order=order, dimension=dim, tau=float(-hist_t[0]), metadata={"source": str(path)},
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def report_document(report, config_hash=None, tool_version=None):
    doc = report.as_dict()
    doc["config_hash"] = config_hash
    doc["tool_version"] = tool_version
    return _jsonable(doc)


def write_report(report, path, config_hash=None, tool_version=None):
    """Write a report as JSON with sorted keys (no timestamps, so reruns are byte-identical)."""
    text = json.dumps(report_document(report, config_hash, tool_version), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


@dataclass
class RunBundle:
    directory: str
    config_path: str
    trajectory_path: str
    report_path: str
    config_hash: str
    tool_version: str
    wall_clock: dict

    def save(self):
        with open(os.path.join(self.directory, BUNDLE_FILE), "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")


def load_bundle(path):
    """Read ``bundle.json`` from a bundle directory (or the file itself)."""
    if os.path.isdir(path):
        path = os.path.join(path, BUNDLE_FILE)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.lineno, exc.msg) from None
    return RunBundle(**data)


def timestamp():
    return {"finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}

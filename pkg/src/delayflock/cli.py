"""Command-line interface: ``delayflock {run,verify,bounds,sweep,report}``.

Exit codes: 0 success, 2 configuration or hypothesis error, 3 runtime
error, 4 failed bound check or degenerate constant.
"""

import argparse
import copy
import csv
import itertools
import json
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .analysis import (
    check_first_order,
    check_second_order,
    complete_intervals,
    diameter,
    diameters_xv,
    directions,
    first_order_constants,
    fit_decay,
    second_order_constants,
    second_order_prefactors,
    window_period,
)
from .config import (
    build_digraph,
    build_scenario,
    config_hash,
    load_config,
    normalize,
    serialize_config,
    weight_schedule,
)
from .dynamics import integrate
from .errors import (
    ConfigError,
    DegenerateContraction,
    DelayFlockError,
    FormatError,
    NonPositiveFloor,
)
from .signals import pe_margin
from .storage import (
    CONFIG_FILE,
    REPORT_FILE,
    TRAJECTORY_FILE,
    RunBundle,
    load_bundle,
    read_trajectory,
    timestamp,
    write_report,
    write_trajectory,
)
from .topology import neighbor_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

MAX_SWEEP_CELLS = 10_000
SWEEP_KEYS = ("tau", "T", "duty", "beta", "N")


class _Exit(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _load(args, verify=False):
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise _Exit(EXIT_CONFIG, f"cannot read config: {exc}") from None
    return _apply_overrides(cfg, args, verify)


def _apply_overrides(cfg, args, verify):
    doc = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "tolerance", None) is not None:
        doc["analysis"]["rel_tol"] = args.tolerance
    return normalize(doc, verify=verify)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_bundle(out_dir, cfg, traj, report=None):
    os.makedirs(out_dir, exist_ok=True)
    digest = config_hash(cfg)
    cfg_path = os.path.join(out_dir, CONFIG_FILE)
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    traj_path = os.path.join(out_dir, TRAJECTORY_FILE)
    write_trajectory(traj, traj_path)
    report_path = None
    if report is not None:
        report_path = os.path.join(out_dir, REPORT_FILE)
        write_report(report, report_path, config_hash=digest, tool_version=__version__)
    bundle = RunBundle(
        directory=os.path.abspath(out_dir), config_path=CONFIG_FILE,
        trajectory_path=TRAJECTORY_FILE, report_path=REPORT_FILE if report_path else None,
        config_hash=digest, tool_version=__version__, wall_clock=timestamp(),
    )
    bundle.save()
    return bundle


def _summary(cfg, scenario, traj, out=None):
    """Print diameters at the ends of the analysis windows."""
    out = out or sys.stdout
    gamma = neighbor_summary(scenario.digraph).depth
    if cfg.pe is not None:
        P = window_period(gamma, cfg.pe["T"], cfg.tau_max)
        n = complete_intervals(traj, gamma, cfg.pe["T"], cfg.tau_max)
        times = np.arange(n + 1) * P
    else:
        times = np.linspace(0.0, traj.horizon, 6)
    if traj.horizon not in times:
        times = np.append(times, traj.horizon)
    if cfg.model == "first":
        print("t d", file=out)
        for t, d in zip(times, diameter(traj, times)):
            print(f"{t:.12g} {d:.12g}", file=out)
    else:
        dx, dv = diameters_xv(traj, times)
        print("t d_X d_V", file=out)
        for t, a, b in zip(times, dx, dv):
            print(f"{t:.12g} {a:.12g} {b:.12g}", file=out)


# -- subcommands ------------------------------------------------------------

def cmd_run(args):
    cfg = _load(args)
    scenario = build_scenario(cfg)
    traj = integrate(scenario)
    bundle = _write_bundle(args.out, cfg, traj)
    _summary(cfg, scenario, traj)
    print(f"trajectory written to {os.path.join(bundle.directory, bundle.trajectory_path)}")
    return EXIT_OK


def verify_config(cfg, out_dir, quiet=False):
    """Integrate and check one validated config; returns ``(exit code, report, extras)``."""
    scenario = build_scenario(cfg)
    traj = integrate(scenario)
    an = cfg.analysis
    dirs = directions(cfg.dimension, an["directions"], cfg.seed)
    gamma = neighbor_summary(scenario.digraph).depth
    P = window_period(gamma, cfg.pe["T"], cfg.tau_max)
    if cfg.model == "first":
        consts = first_order_constants(scenario, an["floor_slack"])
        if not consts.normalized and not quiet:
            _warn("alpha_tilde * K > 1, so the normalisation of the weights is violated")
        report = check_first_order(scenario, traj, consts, dirs, an["rel_tol"], an["lemma_tol"])
        series, D0, certified = diameter(traj, traj.times), consts.D0, consts.C
    else:
        consts = second_order_constants(scenario, traj)
        if consts.divergence != "diverges" and not quiet:
            _warn(f"kernel integral condition {consts.divergence}: the flocking theorem "
                  "does not apply; checks are informational")
        if consts.alpha_tilde * consts.K_tilde > 1 and not quiet:
            _warn("alpha_tilde * K_tilde > 1, so the normalisation of the weights is violated")
        report = check_second_order(scenario, traj, consts, dirs, an["rel_tol"], an["lemma_tol"])
        series, D0, certified = diameters_xv(traj, traj.times)[1], consts.F0, consts.mu
    if out_dir is not None:
        _write_bundle(out_dir, cfg, traj, report)
    mask = (traj.times >= P) & (series > 1e-13 * D0)
    empirical = math.nan
    if mask.sum() >= 3:
        empirical = fit_decay(np.column_stack([traj.times[mask], series[mask]]))
    code = EXIT_OK if report.passed else EXIT_CHECK
    return code, report, {"empirical_rate": empirical, "certified_rate": certified}


def _print_report(report, out=None):
    out = out or sys.stdout
    for c in report.checks:
        status = "skipped" if c.skipped else ("pass" if c.passed else "FAIL")
        print(f"{c.name:34s} {status:7s} margin={c.margin:.6g} tol={c.tolerance:.3g} "
              f"n={c.evaluations}", file=out)
    for note in report.notes:
        print(f"note: {note}", file=out)


def cmd_verify(args):
    cfg = _load(args, verify=True)
    code, report, _ = verify_config(cfg, args.out)
    _print_report(report)
    print("all checks passed" if code == EXIT_OK else "some checks failed")
    return code


def cmd_bounds(args):
    cfg = _load(args)
    if cfg.pe is None:
        raise _Exit(EXIT_CONFIG, "pe: a (T, alpha_tilde) declaration is required")
    scenario = build_scenario(cfg)
    if cfg.model == "first":
        consts = first_order_constants(scenario, cfg.analysis["floor_slack"])
        if not consts.normalized:
            _warn("alpha_tilde * K > 1, so the normalisation of the weights is violated")
        values = consts.as_dict()
    else:
        if args.trajectory:
            traj = read_trajectory(args.trajectory, scenario)
            consts = second_order_constants(scenario, traj)
        else:
            consts = second_order_prefactors(scenario)
        if consts.alpha_tilde * consts.K_tilde > 1:
            _warn("alpha_tilde * K_tilde > 1, so the normalisation of the weights is violated")
        if consts.divergence != "diverges":
            _warn(f"kernel integral condition {consts.divergence}: the flocking theorem does not apply")
        values = consts.as_dict()
    for key, val in values.items():
        if isinstance(val, list):
            val = "[" + ", ".join(_fmt(v) for v in val) + "]"
        print(f"{key} = {_fmt(val)}")
    return EXIT_OK


def parse_grid(spec):
    """Parse ``"tau=0,0.5;N=3,4"`` into an ordered ``{key: [values]}`` dict."""
    grid = {}
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} needs the form key=v1,v2")
        key, vals = (s.strip() for s in part.split("=", 1))
        if key not in SWEEP_KEYS:
            raise ConfigError(f"grid key {key!r} is not one of {', '.join(SWEEP_KEYS)}")
        if key in grid:
            raise ConfigError(f"grid key {key!r} given twice")
        try:
            values = [int(v) if key == "N" else float(v) for v in vals.split(",")]
        except ValueError:
            raise ConfigError(f"grid values for {key!r} must be numbers") from None
        grid[key] = values
    if not grid:
        raise ConfigError("empty grid")
    cells = math.prod(len(v) for v in grid.values())
    if cells > MAX_SWEEP_CELLS:
        raise ConfigError(f"grid has {cells} cells, the limit is {MAX_SWEEP_CELLS}")
    return grid


def _set_delay(spec, tau):
    if tau == 0:
        return {"family": "constant", "value": 0.0}
    if spec["family"] == "constant":
        return {"family": "constant", "value": tau}
    return {**spec, "base": tau / 2, "amplitude": tau / 2}


def _set_duty(spec, duty):
    if spec["family"] != "blink":
        return spec
    return {**spec, "on_time": duty * spec["period"]}


def cell_config(cfg, params):
    """Config for one sweep cell.

    ``tau`` rescales every delay, ``duty`` sets the on-fraction of blink
    schedules, ``beta`` the kernel exponent and ``N`` the agent count.  When
    ``T`` or ``duty`` change, ``alpha_tilde`` is recomputed as the exact worst
    window integral.  The horizon is stretched to three windows if it would
    otherwise cover fewer than two.
    """
    doc = copy.deepcopy(cfg.to_dict())
    if "N" in params:
        n = params["N"]
        doc["n_agents"] = n
        for section in ("delays", "weights"):
            doc[section]["overrides"] = [o for o in doc[section]["overrides"] if max(o["pair"]) < n]
    if "tau" in params:
        tau = params["tau"]
        doc["tau_max"] = tau
        doc["delays"]["default"] = _set_delay(doc["delays"]["default"], tau)
        doc["delays"]["overrides"] = [
            {"pair": o["pair"], **_set_delay({k: v for k, v in o.items() if k != "pair"}, tau)}
            for o in doc["delays"]["overrides"]
        ]
        doc["integrator"]["h"] = min(1e-2, tau / 10) if tau > 0 else 1e-2
    if "duty" in params:
        doc["weights"]["default"] = _set_duty(doc["weights"]["default"], params["duty"])
        doc["weights"]["overrides"] = [_set_duty(o, params["duty"]) for o in doc["weights"]["overrides"]]
    if "beta" in params:
        if doc["influence"]["family"] != "radial_rational":
            raise ConfigError("beta sweeps need the radial_rational kernel")
        doc["influence"]["beta"] = params["beta"]
    if "T" in params:
        doc["pe"] = {"T": params["T"], "alpha_tilde": 1.0}
    staged = normalize(doc)
    if "T" in params or "duty" in params:
        g = build_digraph(staged)
        specs = {tuple(o["pair"]): o for o in staged.weights["overrides"]}
        margins = []
        for pair in zip(*g.arcs()):
            spec = specs.get(tuple(int(p) for p in pair), staged.weights["default"])
            sched = weight_schedule({k: v for k, v in spec.items() if k != "pair"})
            margins.append(pe_margin(sched, staged.pe["T"]))
        doc["pe"]["alpha_tilde"] = min(margins)
    if doc["pe"] is not None:
        gamma = neighbor_summary(build_digraph(staged)).depth
        P = window_period(gamma, doc["pe"]["T"], doc["tau_max"])
        if doc["integrator"]["horizon"] < 2 * P:
            doc["integrator"]["horizon"] = 3 * P
    return normalize(doc, verify=True)


def cmd_sweep(args):
    cfg = _load(args)
    grid = parse_grid(args.grid)
    keys = list(grid)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for idx, combo in enumerate(itertools.product(*grid.values())):
        params = dict(zip(keys, combo))
        cell_dir = os.path.join(args.out, f"cell_{idx:04d}")
        row = {"cell": idx, **params, "status": "", "exit_code": "", "empirical_rate": "",
               "certified_rate": "", "passed": False, "detail": ""}
        try:
            cell = cell_config(cfg, params)
            code, report, extra = verify_config(cell, cell_dir, quiet=True)
            row.update(status="pass" if code == EXIT_OK else "fail", exit_code=code,
                       empirical_rate=_fmt(extra["empirical_rate"]),
                       certified_rate=_fmt(extra["certified_rate"]), passed=report.passed)
            if not report.passed:
                row["detail"] = ",".join(c.name for c in report.checks if not c.passed)
        except Exception as exc:  # per-cell failures are recorded, the sweep goes on
            code = _exit_code(exc)
            row.update(status="error", exit_code=code, detail=str(exc))
        rows.append(row)
        print(f"cell {idx}: {params} -> {row['status']}")
    table = os.path.join(args.out, "sweep.csv")
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"table written to {table}")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK


def cmd_report(args):
    try:
        bundle = load_bundle(args.bundle)
    except OSError as exc:
        raise _Exit(EXIT_CONFIG, f"cannot read bundle: {exc}") from None
    print(f"config hash  {bundle.config_hash}")
    print(f"tool version {bundle.tool_version}")
    print(f"trajectory   {os.path.join(bundle.directory, bundle.trajectory_path)}")
    if bundle.report_path is None:
        print("no report (bundle produced by 'run')")
        return EXIT_OK
    with open(os.path.join(bundle.directory, bundle.report_path), encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("config_hash") != bundle.config_hash:
        raise _Exit(EXIT_CONFIG, "report was computed from a different config")
    for c in doc["checks"]:
        status = "skipped" if c["skipped"] else ("pass" if c["passed"] else "FAIL")
        print(f"{c['name']:34s} {status:7s} margin={c['margin']}")
    for note in doc["notes"]:
        print(f"note: {note}")
    return EXIT_OK if doc["passed"] else EXIT_CHECK


# -- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="delayflock", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, metavar="PATH", help="scenario YAML file")
        if out:
            sp.add_argument("--out", required=True, metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, metavar="N", help="override the config seed")

    sp = sub.add_parser("run", help="integrate a scenario and write its trajectory")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("verify", help="integrate and check every convergence estimate")
    common(sp)
    sp.add_argument("--tolerance", type=float, metavar="X", help="relative slack of the checks")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bounds", help="print the certified constants")
    common(sp, out=False)
    sp.add_argument("--trajectory", metavar="PATH",
                    help="trajectory CSV for the second-order trajectory-dependent constants")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("sweep", help="verify every cell of a parameter grid")
    common(sp)
    sp.add_argument("--grid", required=True, metavar="SPEC",
                    help="e.g. 'tau=0,0.5,1;T=2;duty=0.5;beta=1;N=5'")
    sp.add_argument("--tolerance", type=float, metavar="X", help="relative slack of the checks")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="summarise a run bundle")
    sp.add_argument("bundle", metavar="PATH", help="bundle directory or bundle.json")
    sp.set_defaults(func=cmd_report)
    return p


def _exit_code(exc):
    if isinstance(exc, _Exit):
        return exc.code
    if isinstance(exc, (ConfigError, NonPositiveFloor, FormatError, yaml.YAMLError)):
        return EXIT_CONFIG
    if isinstance(exc, DegenerateContraction):
        return EXIT_CHECK
    return EXIT_RUNTIME


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DelayFlockError, _Exit, OSError) as exc:
        code = _exit_code(exc)
        label = {EXIT_CONFIG: "config error", EXIT_CHECK: "check failure"}.get(code, "error")
        print(f"{label}: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # anything else is an integrator/analysis bug
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

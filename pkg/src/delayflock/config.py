"""Scenario configuration documents (YAML).

A document is validated into a :class:`ScenarioConfig` whose fields are plain
data with every default filled in, so ``parse_config(serialize_config(c)) ==
c``.  Unknown keys are rejected with their dotted path.  See
``docs/config.md`` for the full schema.
"""

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np
import yaml

from .dynamics import HistoryFunction, Scenario
from .errors import ConfigError, HypothesisError, PeViolation, SchemaError
from .signals import DelaySpec, InfluenceFunction, WeightSchedule, verify_pe
from .topology import make_digraph, neighbor_summary, strongly_connected

SCHEMA_VERSION = 1
DEFAULT_HORIZON = 10.0

_TOP_KEYS = ("schema_version", "model", "n_agents", "dimension", "seed", "topology",
             "tau_max", "delays", "weights", "pe", "influence", "histories",
             "integrator", "analysis")


@dataclass(frozen=True)
class ScenarioConfig:
    schema_version: int
    model: str
    n_agents: int
    dimension: int
    seed: int
    topology: dict
    tau_max: float
    delays: dict
    weights: dict
    pe: dict
    influence: dict
    histories: dict
    integrator: dict
    analysis: dict

    def to_dict(self):
        return asdict(self)


# -- small validation helpers -----------------------------------------------

def _keys(node, path, allowed, required=()):
    if not isinstance(node, dict):
        raise SchemaError(path, "expected a mapping")
    for k in node:
        if k not in allowed:
            raise SchemaError(f"{path}.{k}" if path else str(k), "unknown key")
    for k in required:
        if k not in node:
            raise SchemaError(f"{path}.{k}" if path else k, "required key missing")


def _num(node, key, path, default=None, lo=None, hi=None, lo_open=False, allow_none=False):
    p = f"{path}.{key}"
    val = node.get(key, default)
    if val is None:
        if allow_none:
            return None
        raise SchemaError(p, "required key missing")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(p, f"expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val):
        raise SchemaError(p, "must be finite")
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise SchemaError(p, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and val > hi:
        raise SchemaError(p, f"must be <= {hi}")
    return val


def _int(node, key, path, default=None, lo=None):
    p = f"{path}.{key}" if path else key
    val = node.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(p, f"expected an integer, got {val!r}")
    if lo is not None and val < lo:
        raise SchemaError(p, f"must be >= {lo}")
    return int(val)


def _choice(node, key, path, options, default=None):
    p = f"{path}.{key}" if path else key
    val = node.get(key, default)
    if val not in options:
        raise SchemaError(p, f"expected one of {', '.join(options)}, got {val!r}")
    return val


def _vector(val, path, dim):
    if not isinstance(val, (list, tuple)) or len(val) != dim:
        raise SchemaError(path, f"expected a list of {dim} numbers")
    out = []
    for k, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise SchemaError(f"{path}[{k}]", "expected a finite number")
        out.append(float(x))
    return out


def _numbers(val, path):
    if not isinstance(val, (list, tuple)) or not val:
        raise SchemaError(path, "expected a nonempty list of numbers")
    return _vector(val, path, len(val))


def _pair(val, path, n):
    if (not isinstance(val, (list, tuple)) or len(val) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in val)):
        raise SchemaError(path, "expected [i, j] agent indices")
    i, j = val
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise SchemaError(path, f"invalid pair {val}")
    return [int(i), int(j)]


# -- section normalisers ----------------------------------------------------

def _topology(node, n, path="topology"):
    node = {"family": "complete"} if node is None else node
    _keys(node, path, ("family", "edge_prob", "seed", "matrix"))
    fam = _choice(node, "family", path, ("complete", "ring", "random", "matrix"))
    out = {"family": fam}
    if fam == "random":
        out["edge_prob"] = _num(node, "edge_prob", path, lo=0.0, hi=1.0, lo_open=True)
        out["seed"] = _int(node, "seed", path, default=0)
    elif fam == "matrix":
        mat = node.get("matrix")
        if not isinstance(mat, list) or len(mat) != n:
            raise SchemaError(f"{path}.matrix", f"expected {n} rows")
        rows = []
        for i, row in enumerate(mat):
            if not isinstance(row, list) or len(row) != n or any(x not in (0, 1) or isinstance(x, bool) for x in row):
                raise SchemaError(f"{path}.matrix[{i}]", f"expected {n} entries equal to 0 or 1")
            if row[i] != 0:
                raise SchemaError(f"{path}.matrix[{i}][{i}]", "self loops are not allowed")
            rows.append([int(x) for x in row])
        out["matrix"] = rows
    else:
        for k in ("edge_prob", "seed", "matrix"):
            if k in node:
                raise SchemaError(f"{path}.{k}", f"not used by family {fam}")
    return out


def _delay_spec(node, path, tau_max, extra=()):
    _keys(node, path, ("family", "value", "base", "amplitude", "omega", "phase") + extra)
    fam = _choice(node, "family", path, ("constant", "sinusoid"))
    if fam == "constant":
        for k in ("base", "amplitude", "omega", "phase"):
            if k in node:
                raise SchemaError(f"{path}.{k}", "not used by constant delays")
        out = {"family": fam, "value": _num(node, "value", path, lo=0.0, hi=tau_max)}
    else:
        if "value" in node:
            raise SchemaError(f"{path}.value", "not used by sinusoid delays")
        out = {
            "family": fam,
            "base": _num(node, "base", path, lo=0.0),
            "amplitude": _num(node, "amplitude", path, lo=0.0),
            "omega": _num(node, "omega", path),
            "phase": _num(node, "phase", path, default=0.0),
        }
        if out["base"] - out["amplitude"] < 0 or out["base"] + out["amplitude"] > tau_max:
            raise SchemaError(path, "sinusoid must stay inside [0, tau_max]")
    return out


def _weight_spec(node, path, extra=()):
    _keys(node, path, ("family", "value", "on_time", "period", "offset", "level",
                       "breakpoints", "values", "periodic", "terminal") + extra)
    fam = _choice(node, "family", path, ("constant", "blink", "piecewise"))
    if fam == "constant":
        out = {"family": fam, "value": _num(node, "value", path, default=1.0, lo=0.0, hi=1.0)}
    elif fam == "blink":
        out = {
            "family": fam,
            "on_time": _num(node, "on_time", path, lo=0.0, lo_open=True),
            "period": _num(node, "period", path, lo=0.0, lo_open=True),
            "offset": _num(node, "offset", path, default=0.0, lo=0.0),
            "level": _num(node, "level", path, default=1.0, lo=0.0, hi=1.0),
        }
        if out["on_time"] > out["period"] or out["offset"] >= out["period"]:
            raise SchemaError(path, "blink needs on_time <= period and offset < period")
    else:
        periodic = node.get("periodic", False)
        if not isinstance(periodic, bool):
            raise SchemaError(f"{path}.periodic", "expected true or false")
        out = {
            "family": fam,
            "breakpoints": _numbers(node.get("breakpoints"), f"{path}.breakpoints"),
            "values": _vector(node.get("values", []), f"{path}.values",
                              len(node.get("values", []))),
            "periodic": periodic,
            "terminal": _num(node, "terminal", path, lo=0.0, hi=1.0, allow_none=True),
        }
    for k in node:
        if k not in out and k not in extra and k != "family":
            raise SchemaError(f"{path}.{k}", f"not used by family {fam}")
    try:
        weight_schedule(out)
    except ConfigError as exc:
        raise SchemaError(path, str(exc)) from None
    return out


def _overridable(node, path, n, spec_fn):
    node = node or {}
    _keys(node, path, ("default", "overrides"))
    out = {"default": spec_fn(node.get("default"), f"{path}.default"), "overrides": []}
    seen = set()
    overrides = node.get("overrides", [])
    if not isinstance(overrides, list):
        raise SchemaError(f"{path}.overrides", "expected a list")
    for k, ov in enumerate(overrides):
        p = f"{path}.overrides[{k}]"
        if not isinstance(ov, dict) or "pair" not in ov:
            raise SchemaError(p, "override needs a pair")
        pair = _pair(ov["pair"], f"{p}.pair", n)
        if tuple(pair) in seen:
            raise SchemaError(f"{p}.pair", "duplicate override")
        seen.add(tuple(pair))
        spec = spec_fn({k2: v for k2, v in ov.items() if k2 != "pair"}, p)
        out["overrides"].append({"pair": pair, **spec})
    return out


def _influence(node, path="influence"):
    node = {"family": "constant"} if node is None else node
    _keys(node, path, ("family", "K0", "beta", "lam", "r", "values", "floor"))
    fam = _choice(node, "family", path,
                  ("constant", "radial_rational", "radial_exponential", "table"))
    if fam == "table":
        out = {"family": fam, "r": _numbers(node.get("r"), f"{path}.r"),
               "values": _numbers(node.get("values"), f"{path}.values"),
               "floor": _num(node, "floor", path, allow_none=True)}
        used = ("r", "values", "floor")
    else:
        out = {"family": fam, "K0": _num(node, "K0", path, default=1.0, lo=0.0, lo_open=True)}
        used = ("K0",)
        if fam == "radial_rational":
            out["beta"] = _num(node, "beta", path, lo=0.0)
            used += ("beta",)
        elif fam == "radial_exponential":
            out["lam"] = _num(node, "lam", path, lo=0.0)
            used += ("lam",)
    for k in node:
        if k != "family" and k not in used:
            raise SchemaError(f"{path}.{k}", f"not used by family {fam}")
    try:
        influence_function(out)
    except ConfigError as exc:
        raise SchemaError(path, str(exc)) from None
    return out


def _history_block(node, path, n, dim, tau):
    node = {"family": "random_box"} if node is None else node
    _keys(node, path, ("family", "low", "high", "kind", "agents"))
    fam = _choice(node, "family", path, ("random_box", "per_agent"))
    if fam == "random_box":
        if "agents" in node:
            raise SchemaError(f"{path}.agents", "not used by random_box")
        out = {"family": fam, "low": _num(node, "low", path, default=-1.0),
               "high": _num(node, "high", path, default=1.0),
               "kind": _choice(node, "kind", path, ("constant", "linear"), default="constant")}
        if out["high"] < out["low"]:
            raise SchemaError(path, "high must be >= low")
        return out
    for k in ("low", "high", "kind"):
        if k in node:
            raise SchemaError(f"{path}.{k}", "not used by per_agent")
    agents = node.get("agents")
    if not isinstance(agents, list) or len(agents) != n:
        raise SchemaError(f"{path}.agents", f"expected {n} entries")
    out_agents = []
    for i, a in enumerate(agents):
        p = f"{path}.agents[{i}]"
        _keys(a, p, ("family", "point", "start", "end", "times", "values"))
        af = _choice(a, "family", p, ("constant", "linear", "sampled"))
        if af == "constant":
            _keys(a, p, ("family", "point"), ("point",))
            out_agents.append({"family": af, "point": _vector(a["point"], f"{p}.point", dim)})
        elif af == "linear":
            _keys(a, p, ("family", "start", "end"), ("start", "end"))
            out_agents.append({"family": af, "start": _vector(a["start"], f"{p}.start", dim),
                               "end": _vector(a["end"], f"{p}.end", dim)})
        else:
            _keys(a, p, ("family", "times", "values"), ("times", "values"))
            times = _numbers(a["times"], f"{p}.times")
            vals = a["values"]
            if not isinstance(vals, list) or len(vals) != len(times):
                raise SchemaError(f"{p}.values", "expected one row per time")
            rows = [_vector(v, f"{p}.values[{k}]", dim) for k, v in enumerate(vals)]
            if abs(times[0] + tau) > 1e-12 or times[-1] != 0.0:
                raise SchemaError(f"{p}.times", "must run from -tau_max to 0")
            if any(b <= a_ for a_, b in zip(times, times[1:])):
                raise SchemaError(f"{p}.times", "must increase strictly")
            out_agents.append({"family": af, "times": times, "values": rows})
    return {"family": fam, "agents": out_agents}


def normalize(doc, verify=False):
    """Validate a parsed document and resolve defaults."""
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected a mapping")
    _keys(doc, "", _TOP_KEYS, ("model", "n_agents"))
    version = _int(doc, "schema_version", "", default=SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version}")
    model = _choice(doc, "model", "", ("first", "second"))
    n = _int(doc, "n_agents", "", lo=2)
    dim = _int(doc, "dimension", "", default=1, lo=1)
    seed = _int(doc, "seed", "", default=0, lo=0)
    tau = _num(doc, "tau_max", "<root>", default=0.0, lo=0.0)
    topo = _topology(doc.get("topology"), n)
    delays = _overridable(doc.get("delays"), "delays", n,
                          lambda node, p: _delay_spec(node or {"family": "constant", "value": tau}, p, tau))
    weights = _overridable(doc.get("weights"), "weights", n,
                           lambda node, p: _weight_spec(node or {"family": "constant", "value": 1.0}, p))
    pe_node = doc.get("pe", {"T": 1.0, "alpha_tilde": 1.0})
    if pe_node is None:
        pe = None
    else:
        _keys(pe_node, "pe", ("T", "alpha_tilde"), ("T", "alpha_tilde"))
        pe = {"T": _num(pe_node, "T", "pe", lo=0.0, lo_open=True),
              "alpha_tilde": _num(pe_node, "alpha_tilde", "pe", lo=0.0, lo_open=True)}
    infl = _influence(doc.get("influence"))
    hist_node = doc.get("histories") or {}
    _keys(hist_node, "histories", ("positions", "velocities"))
    hist = {"positions": _history_block(hist_node.get("positions"), "histories.positions", n, dim, tau)}
    if model == "second":
        hist["velocities"] = _history_block(hist_node.get("velocities"), "histories.velocities",
                                            n, dim, tau)
    elif "velocities" in hist_node:
        raise SchemaError("histories.velocities", "only used by the second-order model")
    integ = doc.get("integrator") or {}
    _keys(integ, "integrator", ("h", "horizon"))
    default_h = min(1e-2, tau / 10) if tau > 0 else 1e-2
    integrator = {"h": _num(integ, "h", "integrator", default=default_h, lo=0.0, lo_open=True),
                  "horizon": _num(integ, "horizon", "integrator", default=DEFAULT_HORIZON, lo=0.0)}
    an = doc.get("analysis") or {}
    _keys(an, "analysis", ("directions", "rel_tol", "lemma_tol", "floor_slack"))
    analysis = {
        "directions": _int(an, "directions", "analysis", default=32, lo=1),
        "rel_tol": _num(an, "rel_tol", "analysis", default=1e-6, lo=0.0),
        "lemma_tol": _num(an, "lemma_tol", "analysis", default=1e-9, lo=0.0),
        "floor_slack": _num(an, "floor_slack", "analysis", default=0.01, lo=0.0, hi=1.0),
    }
    cfg = ScenarioConfig(
        schema_version=version, model=model, n_agents=n, dimension=dim, seed=seed,
        topology=topo, tau_max=tau, delays=delays, weights=weights, pe=pe,
        influence=infl, histories=hist, integrator=integrator, analysis=analysis,
    )
    g = build_digraph(cfg)
    arcs = {(int(i), int(j)) for i, j in zip(*g.arcs())}
    for section in ("delays", "weights"):
        for k, ov in enumerate(getattr(cfg, section)["overrides"]):
            if tuple(ov["pair"]) not in arcs:
                raise SchemaError(f"{section}.overrides[{k}].pair",
                                  f"pair {ov['pair']} is not an active arc")
    if verify:
        check_hypotheses(cfg)
    return cfg


def parse_config(text, verify=False):
    """Parse a YAML document into a validated :class:`ScenarioConfig`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<document>", f"not valid YAML: {exc}") from None
    return normalize(doc, verify=verify)


def load_config(path, verify=False):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), verify=verify)


def serialize_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None, width=100)


def config_hash(cfg):
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


# -- building runtime objects -----------------------------------------------

def build_digraph(cfg):
    topo = cfg.topology
    if topo["family"] == "matrix":
        return make_digraph("custom", matrix=topo["matrix"])
    if topo["family"] == "random":
        return make_digraph("random", cfg.n_agents, seed=topo["seed"], edge_prob=topo["edge_prob"])
    return make_digraph(topo["family"], cfg.n_agents)


def delay_spec(spec, tau_max):
    if spec["family"] == "constant":
        return DelaySpec.constant(spec["value"], tau_max)
    return DelaySpec.sinusoid(spec["base"], spec["amplitude"], spec["omega"], spec["phase"],
                              tau_max=tau_max)


def weight_schedule(spec):
    fam = spec["family"]
    if fam == "constant":
        return WeightSchedule.constant(spec["value"])
    if fam == "blink":
        return WeightSchedule.blink(spec["on_time"], spec["period"], spec["offset"], spec["level"])
    return WeightSchedule(tuple(spec["breakpoints"]), tuple(spec["values"]),
                          periodic=spec["periodic"], terminal=spec["terminal"])


def influence_function(spec):
    fam = spec["family"]
    if fam == "table":
        return InfluenceFunction("table", table_r=tuple(spec["r"]),
                                 table_values=tuple(spec["values"]), floor=spec["floor"])
    return InfluenceFunction(fam, K0=spec["K0"], beta=spec.get("beta", 0.0),
                             lam=spec.get("lam", 0.0))


def _histories(block, n, dim, tau, rng):
    if block["family"] == "random_box":
        out = []
        for _ in range(n):
            a = rng.uniform(block["low"], block["high"], dim)
            if block["kind"] == "linear":
                b = rng.uniform(block["low"], block["high"], dim)
                out.append(HistoryFunction.linear(a, b, tau))
            else:
                out.append(HistoryFunction.constant(a, tau))
        return out
    out = []
    for a in block["agents"]:
        if a["family"] == "constant":
            out.append(HistoryFunction.constant(a["point"], tau))
        elif a["family"] == "linear":
            out.append(HistoryFunction.linear(a["start"], a["end"], tau))
        else:
            times = np.asarray(a["times"])
            if tau > 0:
                times[0] = -tau
            out.append(HistoryFunction(times, np.asarray(a["values"])))
    return out


def _per_arc(section, arcs, make):
    overrides = {tuple(ov["pair"]): ov for ov in section["overrides"]}
    out = {}
    for pair in arcs:
        spec = overrides.get(pair, section["default"])
        out[pair] = make({k: v for k, v in spec.items() if k != "pair"})
    return out


def build_scenario(cfg):
    """Turn a validated config into a :class:`~delayflock.dynamics.Scenario`."""
    g = build_digraph(cfg)
    if not strongly_connected(g):
        raise HypothesisError("strongly connected", "the interaction digraph has unreachable vertices")
    arcs = sorted((int(i), int(j)) for i, j in zip(*g.arcs()))
    rng = np.random.default_rng(cfg.seed)
    pos = _histories(cfg.histories["positions"], cfg.n_agents, cfg.dimension, cfg.tau_max, rng)
    vel = None
    if cfg.model == "second":
        vel = _histories(cfg.histories["velocities"], cfg.n_agents, cfg.dimension, cfg.tau_max, rng)
    try:
        return Scenario(
            digraph=g, dimension=cfg.dimension, order=cfg.model,
            delays=_per_arc(cfg.delays, arcs, lambda s: delay_spec(s, cfg.tau_max)),
            weights=_per_arc(cfg.weights, arcs, weight_schedule),
            influence=influence_function(cfg.influence),
            histories=pos, velocity_histories=vel,
            horizon=cfg.integrator["horizon"], tau_max=cfg.tau_max, h=cfg.integrator["h"],
            pe=None if cfg.pe is None else (cfg.pe["T"], cfg.pe["alpha_tilde"]),
            seed=cfg.seed,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def check_hypotheses(cfg):
    """Raise :class:`HypothesisError` unless the convergence theorems apply.

    Checks strong connectivity, a declared and satisfied persistence of
    excitation condition and a strictly positive influence kernel, and that
    the horizon covers at least two full analysis windows.
    """
    g = build_digraph(cfg)
    if not strongly_connected(g):
        raise HypothesisError("strongly connected", "some agent cannot reach another")
    if cfg.pe is None:
        raise HypothesisError("persistence of excitation", "no (T, alpha_tilde) declared")
    infl = cfg.influence
    if infl["family"] == "table":
        vals = np.asarray(infl["values"])
        if infl["floor"] is not None:
            vals = np.maximum(vals, infl["floor"])
        if np.any(vals <= 0):
            raise HypothesisError("positive influence", "kernel table reaches zero")
    arcs = sorted((int(i), int(j)) for i, j in zip(*g.arcs()))
    schedules = _per_arc(cfg.weights, arcs, weight_schedule)
    T = cfg.pe["T"]
    horizon = cfg.integrator["horizon"]
    try:
        verify_pe(schedules, T, cfg.pe["alpha_tilde"], horizon + T)
    except PeViolation as exc:
        raise HypothesisError("persistence of excitation", str(exc)) from None
    except Exception as exc:  # schedule shorter than horizon + T
        raise HypothesisError("persistence of excitation", str(exc)) from None
    gamma = neighbor_summary(g).depth
    period = gamma * (T + cfg.tau_max) + cfg.tau_max
    if horizon < 2 * period * (1 - 1e-12):
        raise ConfigError(
            f"horizon {horizon:g} is shorter than two analysis windows (2 x {period:g})"
        )

"""Ready-made and randomized scenario documents.

Generators return plain config documents (dicts) that go through
:func:`delayflock.config.normalize` like any user file, so everything they
produce can also be written to disk and re-run from the command line.
"""

import numpy as np

from .config import build_digraph, normalize, weight_schedule
from .signals import pe_margin
from .topology import neighbor_summary

#: Breakpoints of random periodic schedules sit on this fraction of the period.
LATTICE = 1e-3


def closed_form_first():
    """Two agents, no delay, unit weights and kernel, opinions 0 and 1.

    The diameter is ``exp(-2 t)`` exactly.
    """
    return {
        "model": "first", "n_agents": 2, "dimension": 1,
        "histories": {"positions": {"family": "per_agent", "agents": [
            {"family": "constant", "point": [0.0]},
            {"family": "constant", "point": [1.0]},
        ]}},
        "integrator": {"h": 1e-3, "horizon": 2.0},
    }


def closed_form_second():
    """Two agents, no delay, unit kernel; velocity gap decays like ``exp(-2 t)``.

    The agents move apart and their distance levels off at ``2 - exp(-2 t)``.
    """
    return {
        "model": "second", "n_agents": 2, "dimension": 1,
        "histories": {
            "positions": {"family": "per_agent", "agents": [
                {"family": "constant", "point": [0.0]},
                {"family": "constant", "point": [1.0]},
            ]},
            "velocities": {"family": "per_agent", "agents": [
                {"family": "constant", "point": [-1.0]},
                {"family": "constant", "point": [1.0]},
            ]},
        },
        "integrator": {"h": 1e-2, "horizon": 8.0},
    }


def flagship(tau=0.5):
    """Five agents on a directed ring with blinking links and wobbling delays."""
    n = 5
    T = 2.0
    overrides = [{"pair": [i, (i + 1) % n], "family": "blink", "on_time": 1.0, "period": 2.0,
                  "offset": 0.3 * i} for i in range(n)]
    delays = ({"family": "constant", "value": 0.0} if tau == 0 else
              {"family": "sinusoid", "base": tau / 2, "amplitude": tau / 2, "omega": 1.3})
    gamma = n - 1
    return {
        "model": "first", "n_agents": n, "dimension": 2, "seed": 1,
        "topology": {"family": "ring"},
        "tau_max": tau,
        "delays": {"default": delays},
        "weights": {"default": {"family": "blink", "on_time": 1.0, "period": 2.0},
                    "overrides": overrides},
        "pe": {"T": T, "alpha_tilde": 1.0},
        "influence": {"family": "radial_rational", "K0": 1.0, "beta": 1.0},
        "histories": {"positions": {"family": "random_box", "low": -1.0, "high": 1.0,
                                    "kind": "linear"}},
        "integrator": {"horizon": 3 * (gamma * (T + tau) + tau)},
    }


def random_periodic_schedule(rng, period=None, pieces=None, binary=False):
    """Periodic piecewise-constant weight with breakpoints on a lattice.

    Breakpoints are multiples of ``LATTICE * period`` so that a dense grid of
    the same spacing contains every kink of the window integral.
    """
    period = float(rng.uniform(0.5, 4.0)) if period is None else float(period)
    pieces = int(rng.integers(1, 8)) if pieces is None else int(pieces)
    slots = int(round(1 / LATTICE))
    cuts = np.sort(rng.choice(np.arange(1, slots), size=pieces - 1, replace=False))
    bps = [0.0] + [float(c * LATTICE * period) for c in cuts] + [period]
    if binary:
        vals = rng.integers(0, 2, size=pieces).astype(float)
        vals[rng.integers(pieces)] = 1.0
    else:
        vals = rng.uniform(0, 1, size=pieces)
    return {"family": "piecewise", "breakpoints": bps, "values": [float(v) for v in vals],
            "periodic": True, "terminal": None}


def _random_delay(rng, tau):
    if tau == 0 or rng.random() < 0.5:
        return {"family": "constant", "value": float(tau * rng.choice([0.5, 1.0]))}
    amp = float(tau / 2 * rng.uniform(0.2, 1.0))
    return {"family": "sinusoid", "base": tau / 2, "amplitude": amp,
            "omega": float(rng.uniform(0.5, 3.0)), "phase": float(rng.uniform(0, 2 * np.pi))}


def _random_weight(rng, period, duty_range):
    if rng.random() < 0.5:
        on = float(np.round(rng.uniform(*duty_range) * period, 3))
        offset = float(np.round(rng.uniform(0, period), 3)) % period
        return {"family": "blink", "on_time": max(on, 1e-3), "period": period, "offset": offset}
    # telegraph: a random periodic on/off pattern sharing the blink period
    pieces = int(rng.integers(2, 6))
    return random_periodic_schedule(rng, period=period, pieces=pieces, binary=True)


def _certify(doc):
    """Fill in ``pe`` with the window length and the exact worst window integral."""
    cfg = normalize({k: v for k, v in doc.items() if k != "_T"} | {"pe": None})
    g = build_digraph(cfg)
    arcs = [(int(i), int(j)) for i, j in zip(*g.arcs())]
    specs = {tuple(ov["pair"]): ov for ov in cfg.weights["overrides"]}
    T = doc["_T"]
    margins = []
    for pair in arcs:
        spec = specs.get(pair, cfg.weights["default"])
        margins.append(pe_margin(weight_schedule({k: v for k, v in spec.items() if k != "pair"}), T))
    return min(margins), neighbor_summary(g).depth


def _random_common(rng, order, n_range, tau_range, duty_range, edge_range):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    dim = int(rng.integers(1, 4))
    tau = 0.0 if rng.random() < 0.2 else float(np.round(rng.uniform(*tau_range), 3))
    period = float(np.round(rng.uniform(0.5, 2.0), 3))
    edge_prob = float(np.round(rng.uniform(*edge_range), 3))
    topo_seed = int(rng.integers(0, 2**31))
    doc = {
        "model": order, "n_agents": n, "dimension": dim, "seed": int(rng.integers(0, 2**31)),
        "topology": {"family": "random", "edge_prob": edge_prob, "seed": topo_seed},
        "tau_max": tau,
        "delays": {"default": _random_delay(rng, tau), "overrides": []},
        "weights": {"default": _random_weight(rng, period, duty_range), "overrides": []},
        "histories": {"positions": {"family": "random_box", "low": -1.0, "high": 1.0,
                                    "kind": str(rng.choice(["constant", "linear"]))}},
    }
    g = build_digraph(normalize({**doc, "pe": None}))
    for i, j in zip(*g.arcs()):
        pair = [int(i), int(j)]
        if rng.random() < 0.5:
            doc["delays"]["overrides"].append({"pair": pair, **_random_delay(rng, tau)})
        if rng.random() < 0.7:
            doc["weights"]["overrides"].append({"pair": pair, **_random_weight(rng, period, duty_range)})
    doc["_T"] = period
    return doc


def random_first_order(seed):
    """Randomized first-order scenario satisfying every theorem hypothesis.

    Horizon covers three analysis windows.
    """
    rng = np.random.default_rng(seed)
    doc = _random_common(rng, "first", (2, 6), (0.2, 1.0), (0.2, 0.8), (0.1, 0.7))
    doc["influence"] = {"family": "radial_rational", "K0": float(np.round(rng.uniform(0.5, 2.0), 3)),
                        "beta": float(np.round(rng.uniform(0.0, 2.0), 3))}
    alpha, gamma = _certify(doc)
    T = doc.pop("_T")
    tau = doc["tau_max"]
    doc["pe"] = {"T": T, "alpha_tilde": alpha}
    doc["integrator"] = {"horizon": 3 * (gamma * (T + tau) + tau)}
    return doc


def random_second_order(seed, windows=30):
    """Randomized second-order scenario with a divergent kernel integral.

    ``beta * gamma <= 1`` so the rational kernel satisfies the integral
    condition.  Links are fairly dense and long-lived so the velocities
    align within the horizon of ``windows`` analysis windows.
    """
    rng = np.random.default_rng(seed)
    doc = _random_common(rng, "second", (2, 5), (0.1, 0.5), (0.5, 0.9), (0.4, 0.9))
    doc["histories"]["velocities"] = {"family": "random_box", "low": -1.0, "high": 1.0,
                                      "kind": str(rng.choice(["constant", "linear"]))}
    doc["influence"] = {"family": "radial_rational", "K0": 1.0, "beta": 0.0}
    alpha, gamma = _certify(doc)
    doc["influence"]["beta"] = float(np.round(rng.uniform(0.0, 1.0 / gamma), 3))
    T = doc.pop("_T")
    tau = doc["tau_max"]
    doc["pe"] = {"T": T, "alpha_tilde": alpha}
    doc["integrator"] = {"horizon": windows * (gamma * (T + tau) + tau)}
    return doc

"""Small builders shared by the tests."""

import numpy as np

from delayflock.dynamics import HistoryFunction, Scenario
from delayflock.signals import DelaySpec, InfluenceFunction, WeightSchedule
from delayflock.topology import make_digraph


def scenario(n=2, dim=1, order="first", kind="complete", tau=0.0, delay=None, weight=None,
             influence=None, points=None, velocities=None, horizon=2.0, h=None, pe=(1.0, 1.0),
             seed=0):
    g = make_digraph(kind, n, seed=seed, edge_prob=0.5) if kind == "random" else make_digraph(kind, n)
    pairs = [(int(i), int(j)) for i, j in zip(*g.arcs())]
    delay = delay or (lambda pair: DelaySpec.constant(tau, tau))
    weight = weight or (lambda pair: WeightSchedule.constant(1.0))
    rng = np.random.default_rng(seed)
    if points is None:
        points = [HistoryFunction.linear(rng.uniform(-1, 1, dim), rng.uniform(-1, 1, dim), tau)
                  for _ in range(n)]
    vel = None
    if order == "second":
        if velocities is None:
            velocities = [HistoryFunction.constant(rng.uniform(-1, 1, dim), tau) for _ in range(n)]
        vel = velocities
    return Scenario(
        digraph=g, dimension=dim, order=order,
        delays={p: delay(p) for p in pairs}, weights={p: weight(p) for p in pairs},
        influence=influence or InfluenceFunction("constant", K0=1.0),
        histories=points, velocity_histories=vel, horizon=horizon, tau_max=tau, h=h, pe=pe,
    )


def constant_points(values, tau=0.0):
    return [HistoryFunction.constant(np.atleast_1d(v), tau) for v in values]

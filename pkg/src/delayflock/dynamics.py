"""Method-of-steps integration of the delayed alignment models.

First order (opinion dynamics)::

    x_i' = sum_j chi_ij alpha_ij(t) phi(|x_i(t) - x_j(t - tau_ij(t))|) / (N - 1)
                * (x_j(t - tau_ij(t)) - x_i(t))

Second order (flocking)::

    x_i' = v_i
    v_i' = sum_j chi_ij alpha_ij(t) phi(|x_i(t) - x_j(t - tau_ij(t))|) / (N - 1)
                * (v_j(t - tau_ij(t)) - v_i(t))

The integrator takes fixed classical Runge-Kutta steps on a grid that contains
every switching time of the weights, so each step sees constant weights.
Delayed values come from the initial history, from cubic Hermite dense output
of completed steps, or (when the delay is shorter than the running step) from
the previous step's Hermite polynomial extrapolated forward.  A lookup at
exactly the current stage time uses the stage state itself, so zero delays
reduce to the undelayed ODE.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .topology import strongly_connected

# Uniform nodes closer than this fraction of h to a weight switch are dropped.
#: Upper bound on the number of uniform steps in one run.
MAX_STEPS = 10**7
SNAP_FRACTION = 0.25
# Extrapolate from the previous step only if it is at least this long
# relative to the running step; otherwise use a first-order Taylor step.
EXTRAPOLATION_RATIO = 0.5


@dataclass(frozen=True, eq=False)
class HistoryFunction:
    """Piecewise-linear initial datum on ``[-tau, 0]``.

    ``times`` increase from ``-tau`` to ``0``; ``values`` has one row per time.
    Constant and linear data are represented exactly.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = "sampled"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or len(t) != len(v) or len(t) == 0:
            raise ConfigError("history needs one value row per time")
        if t[-1] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigError("history times must increase strictly and end at 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, point, tau):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if tau > 0:
            return cls(np.array([-tau, 0.0]), np.vstack([point, point]), "constant")
        return cls(np.array([0.0]), point[None, :], "constant")

    @classmethod
    def linear(cls, start, end, tau):
        start = np.atleast_1d(np.asarray(start, dtype=float))
        end = np.atleast_1d(np.asarray(end, dtype=float))
        if tau > 0:
            return cls(np.array([-tau, 0.0]), np.vstack([start, end]), "linear")
        return cls(np.array([0.0]), end[None, :], "linear")

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def start(self):
        return self.times[0]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.times[0] - 1e-12) or np.any(s > 1e-12):
            raise ValueError("history evaluated outside its domain")
        if len(self.times) == 1:
            out = np.broadcast_to(self.values[0], s.shape + (self.dim,)).copy()
        else:
            out = np.stack([np.interp(s, self.times, self.values[:, c])
                            for c in range(self.dim)], axis=-1)
        return out


def _merge_histories(pos, vel):
    """Join position and velocity histories on the union of their knots."""
    if vel is None:
        return pos.times, pos.values
    times = np.union1d(pos.times, vel.times)
    return times, np.hstack([pos(times), vel(times)])


@dataclass(eq=False)
class Scenario:
    """A fully resolved problem instance.

    ``delays`` and ``weights`` map each active pair ``(i, j)`` (those with
    ``chi[i, j] == 1``) to its delay and weight.  ``velocity_histories`` is
    required for the second-order model only.
    """

    digraph: object
    dimension: int
    order: str
    delays: dict
    weights: dict
    influence: object
    histories: list
    horizon: float
    tau_max: float
    h: float = None
    velocity_histories: list = None
    pe: tuple = None
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.order not in ("first", "second"):
            raise ConfigError(f"unknown model order {self.order!r}")
        n = self.digraph.n_agents
        if not strongly_connected(self.digraph):
            raise ConfigError("the interaction digraph must be strongly connected")
        arcs = {(int(i), int(j)) for i, j in zip(*self.digraph.arcs())}
        if set(self.delays) != arcs or set(self.weights) != arcs:
            raise ConfigError("delays and weights must be given for exactly the active pairs")
        for pair, d in self.delays.items():
            if d.tau_max > self.tau_max + 1e-15:
                raise ConfigError(f"delay of pair {pair} exceeds tau_max")
        if len(self.histories) != n:
            raise ConfigError("need one position history per agent")
        if self.order == "second":
            if self.velocity_histories is None or len(self.velocity_histories) != n:
                raise ConfigError("second-order scenarios need one velocity history per agent")
        hists = list(self.histories) + list(self.velocity_histories or [])
        for hist in hists:
            if hist.dim != self.dimension:
                raise ConfigError("history dimension does not match the scenario")
            if self.tau_max > 0 and abs(hist.start + self.tau_max) > 1e-12:
                raise ConfigError("histories must be defined on exactly [-tau_max, 0]")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.h is None:
            self.h = min(1e-2, self.tau_max / 10) if self.tau_max > 0 else 1e-2
        if self.h <= 0:
            raise ConfigError("step size must be positive")

    @property
    def n_agents(self):
        return self.digraph.n_agents

    @property
    def state_dim(self):
        return self.dimension * (2 if self.order == "second" else 1)

    def arc_arrays(self):
        pairs = sorted(self.delays)
        I = np.array([p[0] for p in pairs], dtype=int)
        J = np.array([p[1] for p in pairs], dtype=int)
        return pairs, I, J

    def switch_times(self):
        pts = [w.switch_times(0.0, self.horizon) for w in self.weights.values()]
        pts = np.concatenate(pts) if pts else np.empty(0)
        return np.unique(pts)


def build_grid(scenario):
    """Uniform steps of size ``h`` merged with every weight switching time."""
    H, h = float(scenario.horizon), float(scenario.h)
    if H == 0:
        return np.array([0.0])
    n = int(np.ceil(H / h - 1e-9))
    if n > MAX_STEPS:
        raise ConfigError(f"horizon {H:g} with step {h:g} needs {n} steps (limit {MAX_STEPS})")
    uniform = np.arange(n + 1) * h
    uniform[-1] = H
    bps = scenario.switch_times()
    if len(bps):
        idx = np.searchsorted(bps, uniform)
        left = np.abs(uniform - bps[np.clip(idx - 1, 0, len(bps) - 1)])
        right = np.abs(bps[np.clip(idx, 0, len(bps) - 1)] - uniform)
        near = np.minimum(left, right) < SNAP_FRACTION * h
        near[0] = near[-1] = False
        uniform = uniform[~near]
    grid = np.union1d(uniform, bps)
    # collapse float duplicates
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(1.0, H)])
    return grid[keep]


def _hermite(y0, y1, f0, f1, dt, theta):
    th = theta[..., None]
    t2 = th * th
    t3 = t2 * th
    h00 = 1 - 3 * t2 + 2 * t3
    h10 = th - 2 * t2 + t3
    h01 = 3 * t2 - 2 * t3
    h11 = t3 - t2
    dt = dt[..., None]
    return h00 * y0 + h10 * dt * f0 + h01 * y1 + h11 * dt * f1


class _Solver:
    """Shared state for integration and for re-deriving node derivatives."""

    def __init__(self, scenario, times):
        self.scn = scenario
        self.times = times
        self.M = len(times) - 1
        n, D = scenario.n_agents, scenario.state_dim
        self.N, self.D, self.d = n, D, scenario.dimension
        self.Y = np.zeros((self.M + 1, n, D))
        self.FR = np.zeros_like(self.Y)
        self.FL = np.zeros_like(self.Y)
        self.pairs, self.I, self.J = scenario.arc_arrays()
        E = len(self.pairs)
        self.S = np.zeros((n, E))
        self.S[self.I, np.arange(E)] = 1.0
        delays = [scenario.delays[p] for p in self.pairs]
        self.d_base = np.array([d.base for d in delays])
        self.d_amp = np.array([d.amplitude for d in delays])
        self.d_omega = np.array([d.omega for d in delays])
        self.d_phase = np.array([d.phase for d in delays])
        self.d_max = np.array([d.tau_max for d in delays])
        self.sinus = self.d_amp != 0
        if self.M > 0:
            mids = 0.5 * (times[:-1] + times[1:])
            self.alpha = np.stack([scenario.weights[p](mids) for p in self.pairs], axis=1)
            self.alpha = self.alpha.reshape(self.M, E)
        else:
            self.alpha = np.zeros((0, E))
        vel = scenario.velocity_histories if scenario.order == "second" else None
        self.hist = [
            _merge_histories(p, None if vel is None else vel[i])
            for i, p in enumerate(scenario.histories)
        ]
        self.scale = 1.0 / (n - 1)
        self.n_extrapolated = 0
        self.n_taylor = 0

    def delays_at(self, t):
        tau = self.d_base.copy()
        if self.sinus.any():
            tau[self.sinus] = np.clip(
                self.d_base[self.sinus]
                + self.d_amp[self.sinus] * np.sin(self.d_omega[self.sinus] * t + self.d_phase[self.sinus]),
                0.0, self.d_max[self.sinus],
            )
        return tau

    def history(self, agents, s):
        out = np.empty((len(s), self.D))
        for a in np.unique(agents):
            sel = agents == a
            ht, hv = self.hist[a]
            if len(ht) == 1:
                out[sel] = hv[0]
            else:
                for c in range(self.D):
                    out[sel, c] = np.interp(s[sel], ht, hv[:, c])
        return out

    def hermite_steps(self, steps, agents, s):
        t0 = self.times[steps]
        dt = self.times[steps + 1] - t0
        theta = (s - t0) / dt
        return _hermite(self.Y[steps, agents], self.Y[steps + 1, agents],
                        self.FR[steps, agents], self.FL[steps + 1, agents], dt, theta)

    def lookup(self, s, tau, k, t_stage, y_stage):
        """Delayed states of the source agents ``J`` at times ``s``.

        Steps before node ``k`` are complete; ``y_stage`` is the state at
        ``t_stage`` (which lies in ``[t_k, t_{k+1}]``).
        """
        J = self.J
        out = np.empty((len(s), self.D))
        tk = self.times[k]
        zero = tau == 0.0
        hist = (s <= 0.0) & ~zero
        past = (s > 0.0) & (s <= tk) & ~zero
        ahead = (s > tk) & ~zero
        if zero.any():
            out[zero] = y_stage[J[zero]]
        if hist.any():
            out[hist] = self.history(J[hist], s[hist])
        if past.any():
            steps = np.searchsorted(self.times[: k + 1], s[past], side="left") - 1
            steps = np.clip(steps, 0, k - 1)
            out[past] = self.hermite_steps(steps, J[past], s[past])
        if ahead.any():
            cur = self.times[k + 1] - tk if k < self.M else 0.0
            if k >= 1 and self.times[k] - self.times[k - 1] >= EXTRAPOLATION_RATIO * cur:
                steps = np.full(int(ahead.sum()), k - 1)
                out[ahead] = self.hermite_steps(steps, J[ahead], s[ahead])
                self.n_extrapolated += int(ahead.sum())
            else:
                ja = J[ahead]
                out[ahead] = self.Y[k, ja] + (s[ahead] - tk)[:, None] * self.FR[k, ja]
                self.n_taylor += int(ahead.sum())
        return out

    def rhs(self, t, y, alpha, k):
        tau = self.delays_at(t)
        delayed = self.lookup(t - tau, tau, k, t, y)
        I = self.I
        if self.scn.order == "first":
            diff = delayed - y[I]
            r = np.sqrt(np.einsum("ec,ec->e", diff, diff))
            w = alpha * self.scn.influence(r) * self.scale
            return self.S @ (w[:, None] * diff)
        d = self.d
        gap = y[I, :d] - delayed[:, :d]
        r = np.sqrt(np.einsum("ec,ec->e", gap, gap))
        w = alpha * self.scn.influence(r) * self.scale
        acc = self.S @ (w[:, None] * (delayed[:, d:] - y[I, d:]))
        return np.hstack([y[:, d:], acc])

    def node_derivatives(self, k):
        """Fill ``FL[k]`` and ``FR[k]`` from ``Y[k]``; steps before ``k - 1`` are complete."""
        t = self.times[k]
        base = max(k - 1, 0)
        if k == 0:
            if self.M > 0:
                self.FR[0] = self.rhs(t, self.Y[0], self.alpha[0], 0)
            else:
                self.FR[0] = self.rhs(t, self.Y[0], np.zeros(len(self.pairs)), 0)
            self.FL[0] = self.FR[0]
            return
        self.FL[k] = self.rhs(t, self.Y[k], self.alpha[k - 1], base)
        if k < self.M and not np.array_equal(self.alpha[k], self.alpha[k - 1]):
            self.FR[k] = self.rhs(t, self.Y[k], self.alpha[k], base)
        else:
            self.FR[k] = self.FL[k]

    def initial_state(self):
        return np.stack([hv[-1] for _, hv in self.hist])

    def run(self):
        self.Y[0] = self.initial_state()
        self.node_derivatives(0)
        for k in range(self.M):
            t0, t1 = self.times[k], self.times[k + 1]
            h = t1 - t0
            a = self.alpha[k]
            y0 = self.Y[k]
            k1 = self.FR[k]
            tm = t0 + 0.5 * h
            k2 = self.rhs(tm, y0 + 0.5 * h * k1, a, k)
            k3 = self.rhs(tm, y0 + 0.5 * h * k2, a, k)
            k4 = self.rhs(t1, y0 + h * k3, a, k)
            self.Y[k + 1] = y0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            self.node_derivatives(k + 1)

    def rederive(self):
        """Recompute node derivatives for states already stored in ``Y``."""
        for k in range(self.M + 1):
            self.node_derivatives(k)


@dataclass(eq=False)
class Trajectory:
    """Dense solution on ``[-tau, horizon]``.

    ``states[k]`` is the ``(N, D)`` state at ``times[k]``; ``deriv_right`` and
    ``deriv_left`` are the one-sided time derivatives used by the cubic
    Hermite interpolant.  For the second-order model the first ``d`` state
    components are positions and the last ``d`` are velocities.
    """

    times: np.ndarray
    states: np.ndarray
    deriv_right: np.ndarray
    deriv_left: np.ndarray
    history_times: list
    history_values: list
    order: str
    dimension: int
    tau: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return self.states.shape[1]

    @property
    def horizon(self):
        return float(self.times[-1])

    def _history_at(self, s):
        out = np.empty((len(s), self.n_agents, self.states.shape[2]))
        for a, (ht, hv) in enumerate(zip(self.history_times, self.history_values)):
            if len(ht) == 1:
                out[:, a] = hv[0]
            else:
                for c in range(hv.shape[1]):
                    out[:, a, c] = np.interp(s, ht, hv[:, c])
        return out

    def state(self, t):
        """Interpolated state(s) at ``t``: shape ``(N, D)`` or ``(len(t), N, D)``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = -self.tau, self.horizon
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(t_arr < lo - tol) or np.any(t_arr > hi + tol):
            from .errors import OutOfRange
            raise OutOfRange(f"time outside [{lo:g}, {hi:g}]")
        out = np.empty((len(t_arr), self.n_agents, self.states.shape[2]))
        neg = t_arr < 0
        if neg.any():
            out[neg] = self._history_at(t_arr[neg])
        pos = ~neg
        if pos.any():
            tp = np.minimum(t_arr[pos], hi)
            if len(self.times) == 1:
                out[pos] = self.states[0]
            else:
                k = np.clip(np.searchsorted(self.times, tp, side="right") - 1, 0, len(self.times) - 2)
                t0 = self.times[k]
                dt = self.times[k + 1] - t0
                theta = ((tp - t0) / dt)[:, None]
                out[pos] = _hermite(self.states[k], self.states[k + 1],
                                    self.deriv_right[k], self.deriv_left[k + 1],
                                    dt[:, None], theta)
        return out if np.ndim(t) else out[0]

    def positions(self, t):
        return self.state(t)[..., : self.dimension]

    def velocities(self, t):
        if self.order != "second":
            raise ValueError("first-order trajectories carry no velocities")
        return self.state(t)[..., self.dimension:]

    def history_knots(self):
        """All history knot times in ``[-tau, 0)``."""
        if not self.history_times:
            return np.empty(0)
        ts = np.unique(np.concatenate(self.history_times))
        return ts[ts < 0]


def integrate(scenario):
    """Integrate a scenario over ``[0, horizon]``."""
    times = build_grid(scenario)
    solver = _Solver(scenario, times)
    solver.run()
    return _trajectory_from(solver, scenario)


def _trajectory_from(solver, scenario):
    return Trajectory(
        times=solver.times,
        states=solver.Y,
        deriv_right=solver.FR,
        deriv_left=solver.FL,
        history_times=[ht for ht, _ in solver.hist],
        history_values=[hv for _, hv in solver.hist],
        order=scenario.order,
        dimension=scenario.dimension,
        tau=float(scenario.tau_max),
        metadata={
            "h": float(scenario.h),
            "steps": int(solver.M),
            "extrapolated_lookups": solver.n_extrapolated,
            "taylor_lookups": solver.n_taylor,
        },
    )


def rebuild(scenario, times, states):
    """Trajectory for stored grid states, re-deriving derivatives from the model."""
    solver = _Solver(scenario, np.asarray(times, dtype=float))
    solver.Y[:] = states
    solver.rederive()
    return _trajectory_from(solver, scenario)


def rhs_first_order(scenario, t, states, delayed):
    """Right-hand side of the first-order model.

    ``delayed(j, s)`` returns the state of agent ``j`` at time ``s``.  This is
    the reference (unvectorised) form used for checking; :func:`integrate`
    evaluates the same expression in batch.
    """
    states = np.asarray(states, dtype=float)
    n = scenario.n_agents
    out = np.zeros_like(states)
    for (i, j), dspec in scenario.delays.items():
        s = t - dspec(t)
        xj = np.asarray(delayed(j, s), dtype=float)
        diff = xj - states[i]
        rate = scenario.weights[(i, j)](t) * scenario.influence(np.linalg.norm(diff)) / (n - 1)
        out[i] += rate * diff
    return out


def rhs_second_order(scenario, t, positions, velocities, delayed):
    """Right-hand side of the second-order model; returns ``(x', v')``.

    ``delayed(j, s)`` returns ``(x_j(s), v_j(s))``.
    """
    x = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    n = scenario.n_agents
    acc = np.zeros_like(v)
    for (i, j), dspec in scenario.delays.items():
        s = t - dspec(t)
        xj, vj = (np.asarray(a, dtype=float) for a in delayed(j, s))
        rate = scenario.weights[(i, j)](t) * scenario.influence(np.linalg.norm(x[i] - xj)) / (n - 1)
        acc[i] += rate * (vj - v[i])
    return v.copy(), acc

"""Diameters, interval quantities, contraction constants and bound checks.

Time is cut into windows ``I_n = [n P - tau, n P]`` with period
``P = gamma (T + tau) + tau``.  The first-order contraction factor is::

    Gamma = exp(-K ((gamma**2 + 3 gamma) / 2 (T + tau) + tau))
            * (psi0 alpha_tilde / (N - 1)) ** gamma

and the certified decay rate is ``C = ln(1 / (1 - Gamma)) / P``.  The
second-order factors replace ``psi0`` by the running kernel minimum along the
observed position spread.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateContraction, NonPositiveValue, OutOfRange
from .signals import divergence_class, psi_floor, running_min, sup_norm
from .topology import neighbor_summary

DEFAULT_REL_TOL = 1e-6
DEFAULT_LEMMA_TOL = 1e-9
DEFAULT_FLOOR_SLACK = 0.01
STABILIZATION_LIMIT = 1e-3
_CHUNK = 2048


# -- diameters --------------------------------------------------------------

def _pairwise_max(points):
    """Largest distance between rows of ``points[..., k, d]`` along axis -2."""
    diff = points[..., :, None, :] - points[..., None, :, :]
    return np.sqrt(np.einsum("...ijc,...ijc->...ij", diff, diff)).max(axis=(-1, -2))


def diameter(traj, t):
    """Opinion (or position) diameter ``max_ij |x_i(t) - x_j(t)|``."""
    return _pairwise_max(traj.positions(t))


def diameters_xv(traj, t):
    """Position and velocity diameters of a second-order trajectory."""
    st = traj.state(t)
    d = traj.dimension
    return _pairwise_max(st[..., :d]), _pairwise_max(st[..., d:])


def _block(traj, which):
    d = traj.dimension
    return slice(0, d) if which == "x" else slice(d, 2 * d)


# -- initial-datum constants ------------------------------------------------

def _history_extremes(hist_list):
    """``(max |y(s)|, max_s,t |y(s) - y(t)|)`` over piecewise-linear data."""
    c0 = 0.0
    spread = 0.0
    for h in hist_list:
        vals = h.values
        c0 = max(c0, float(np.linalg.norm(vals, axis=1).max()))
        spread = max(spread, float(_pairwise_max(vals)))
    return c0, spread


def base_constants(scenario):
    """``(C0, C0V, M0X)`` from the initial data.

    Norms and pairwise distances of piecewise-linear data are convex on each
    piece, so the maxima over ``[-tau, 0]`` are attained at knots.  ``C0V`` is
    ``None`` for first-order scenarios.
    """
    c0, m0x = _history_extremes(scenario.histories)
    c0v = None
    if scenario.order == "second":
        c0v, _ = _history_extremes(scenario.velocity_histories)
    return c0, c0v, m0x


def initial_spread(scenario, velocities=False):
    """``max_ij max_{r,s in [-tau,0]} |y_i(r) - y_j(s)|`` for positions or velocities."""
    hists = scenario.velocity_histories if velocities else scenario.histories
    pts = np.vstack([h.values for h in hists])
    return float(_pairwise_max(pts))


# -- directions -------------------------------------------------------------

def directions(dim, count=32, seed=0):
    """Deterministic unit vectors: signed axes (for ``dim <= 3``) plus random ones."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    vecs = []
    if dim <= 3:
        eye = np.eye(dim)
        vecs.extend(list(eye) + list(-eye))
    rng = np.random.default_rng(seed)
    while len(vecs) < count:
        g = rng.standard_normal(dim)
        n = np.linalg.norm(g)
        if n > 1e-8:
            vecs.append(g / n)
    return np.array(vecs[:max(count, 2 * dim if dim <= 3 else 1)])


# -- exact extrema of the dense output --------------------------------------

def _cubic_extrema(P0, P1, Q0, Q1, lo, hi):
    """Min and max over ``theta in [lo, hi]`` of the Hermite cubic.

    ``P0, P1`` are endpoint values and ``Q0, Q1`` endpoint slopes times the
    step length; ``lo``/``hi`` broadcast against them.
    """
    c1 = Q0
    c2 = -3 * P0 - 2 * Q0 + 3 * P1 - Q1
    c3 = 2 * P0 + Q0 - 2 * P1 + Q1
    A, B, C = 3 * c3, 2 * c2, c1
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = B * B - 4 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        quad = np.abs(A) > 1e-14 * (np.abs(B) + np.abs(C) + 1e-300)
        r1 = np.where(quad, (-B + sq) / (2 * A), -C / B)
        r2 = np.where(quad, (-B - sq) / (2 * A), -C / B)
        ok = quad & (disc >= 0) | ~quad & (B != 0)
    cands = [np.broadcast_to(lo, P0.shape), np.broadcast_to(hi, P0.shape)]
    for r in (r1, r2):
        valid = ok & np.isfinite(r) & (r > lo) & (r < hi)
        cands.append(np.where(valid, r, lo))
    th = np.stack(cands)
    vals = P0 + th * (c1 + th * (c2 + th * c3))
    return vals.min(axis=0), vals.max(axis=0)


def projection_range(traj, which, dirs, a, b, per_agent=False):
    """Exact extrema of ``<y_i(t), v>`` over ``t in [a, b]`` for each direction.

    ``which`` selects positions (``"x"``) or velocities (``"v"``).  The
    initial datum is piecewise linear and the solution is the cubic Hermite
    interpolant, so both are handled in closed form.  Returns arrays of shape
    ``(V,)`` (or ``(N, V)`` with ``per_agent``).
    """
    blk = _block(traj, which)
    a = max(a, -traj.tau)
    b = min(b, traj.horizon)
    if b < a:
        raise OutOfRange(f"empty interval [{a:g}, {b:g}]")
    shape = (traj.n_agents, len(dirs))
    lo = np.full(shape, np.inf)
    hi = np.full(shape, -np.inf)
    if a < 0 or b <= 0:
        top = min(b, 0.0)
        knots = traj.history_knots()
        ts = np.unique(np.concatenate([[a, top], knots[(knots >= a) & (knots <= top)]]))
        proj = traj.state(ts)[..., blk] @ dirs.T
        lo = np.minimum(lo, proj.min(axis=0))
        hi = np.maximum(hi, proj.max(axis=0))
    if b >= 0:
        a0 = max(a, 0.0)
        times = traj.times
        if len(times) == 1:
            proj = traj.states[0][:, blk] @ dirs.T
            lo, hi = np.minimum(lo, proj), np.maximum(hi, proj)
        else:
            k0 = int(np.clip(np.searchsorted(times, a0, side="right") - 1, 0, len(times) - 2))
            k1 = int(np.clip(np.searchsorted(times, b, side="left") - 1, k0, len(times) - 2))
            for start in range(k0, k1 + 1, _CHUNK):
                ks = np.arange(start, min(start + _CHUNK, k1 + 1))
                dt = times[ks + 1] - times[ks]
                th_lo = np.clip((a0 - times[ks]) / dt, 0.0, 1.0)[:, None, None]
                th_hi = np.clip((b - times[ks]) / dt, 0.0, 1.0)[:, None, None]
                P0 = traj.states[ks][..., blk] @ dirs.T
                P1 = traj.states[ks + 1][..., blk] @ dirs.T
                Q0 = (traj.deriv_right[ks][..., blk] @ dirs.T) * dt[:, None, None]
                Q1 = (traj.deriv_left[ks + 1][..., blk] @ dirs.T) * dt[:, None, None]
                mn, mx = _cubic_extrema(P0, P1, Q0, Q1, th_lo, th_hi)
                lo = np.minimum(lo, mn.min(axis=0))
                hi = np.maximum(hi, mx.max(axis=0))
    if per_agent:
        return lo, hi
    return lo.min(axis=0), hi.max(axis=0)


def sample_times(traj, a, b):
    """History knots and grid nodes in ``[a, b]`` plus both endpoints."""
    a = max(a, -traj.tau)
    b = min(b, traj.horizon)
    knots = traj.history_knots()
    nodes = traj.times
    parts = [[a, b], knots[(knots >= a) & (knots <= b)], nodes[(nodes >= a) & (nodes <= b)]]
    return np.unique(np.concatenate(parts))


# -- interval quantities ----------------------------------------------------

def window_period(gamma, T, tau):
    return gamma * (T + tau) + tau


def interval_bounds(n, gamma, T, tau):
    P = window_period(gamma, T, tau)
    return n * P - tau, n * P


def complete_intervals(traj, gamma, T, tau):
    """Largest ``n`` with ``I_n`` inside the simulated range."""
    P = window_period(gamma, T, tau)
    return int(math.floor(traj.horizon / P * (1 + 1e-12) + 1e-12))


@dataclass
class IntervalQuantities:
    """Extrema of one window ``I_n`` for positions (first order) or velocities.

    ``low``/``high`` are the interval extrema of the projections per
    direction and ``low_end``/``high_end`` the extrema at the right endpoint
    only.  ``spread`` is ``D_n`` (first order) or ``F_n`` (second order).
    """

    n: int
    interval: tuple
    low: np.ndarray
    high: np.ndarray
    low_end: np.ndarray
    high_end: np.ndarray
    spread: float


def interval_quantities(traj, n, dirs, gamma, T, which="x"):
    a, b = interval_bounds(n, gamma, T, traj.tau)
    if b > traj.horizon * (1 + 1e-12) + 1e-12:
        raise OutOfRange(f"interval I_{n} = [{a:g}, {b:g}] exceeds the horizon")
    b = min(b, traj.horizon)
    blk = _block(traj, which)
    low, high = projection_range(traj, which, dirs, a, b)
    end_proj = traj.state(b)[:, blk] @ dirs.T
    ts = sample_times(traj, a, b)
    pts = traj.state(ts)[..., blk].reshape(-1, traj.dimension)
    spread = max(float(_pairwise_max(pts)), float(np.max(high - low)))
    return IntervalQuantities(n=n, interval=(a, b), low=low, high=high,
                              low_end=end_proj.min(axis=0), high_end=end_proj.max(axis=0),
                              spread=spread)


# -- constants --------------------------------------------------------------

def gamma_constant(K, gamma, T, tau, psi0, alpha_tilde, N):
    """First-order contraction factor ``Gamma``."""
    expo = -K * (0.5 * (gamma * gamma + 3 * gamma) * (T + tau) + tau)
    return math.exp(expo) * (psi0 * alpha_tilde / (N - 1)) ** gamma


def decay_rate_first(Gamma, gamma, T, tau):
    """Exponential rate ``ln(1 / (1 - Gamma)) / (gamma (T + tau) + tau)``."""
    if not 0.0 < Gamma < 1.0:
        raise DegenerateContraction(f"contraction factor {Gamma!r} is not in (0, 1)")
    return -math.log1p(-Gamma) / window_period(gamma, T, tau)


def contraction_prefactor(K, gamma, T, tau, alpha_tilde, N):
    """``C* = exp(-K (...)) (alpha_tilde / (N - 1)) ** gamma``."""
    expo = -K * (0.5 * (gamma * gamma + 3 * gamma) * (T + tau) + tau)
    return math.exp(expo) * (alpha_tilde / (N - 1)) ** gamma


@dataclass
class FirstOrderConstants:
    N: int
    gamma: int
    T: float
    alpha_tilde: float
    tau: float
    K: float
    C0: float
    psi0: float
    psi0_used: float
    D0: float
    Gamma: float
    C: float
    normalized: bool

    @property
    def period(self):
        return window_period(self.gamma, self.T, self.tau)

    def as_dict(self):
        return {**asdict(self), "period": self.period}


def first_order_constants(scenario, floor_slack=DEFAULT_FLOOR_SLACK):
    """Constants of the first-order estimate; needs only the scenario.

    For tabulated kernels the grid minimum is reduced by ``floor_slack``
    (relative) before it enters ``Gamma``.
    """
    if scenario.pe is None:
        raise ValueError("persistence of excitation constants (T, alpha_tilde) are required")
    T, at = scenario.pe
    gamma = neighbor_summary(scenario.digraph).depth
    C0, _, _ = base_constants(scenario)
    K = sup_norm(scenario.influence)
    psi0 = psi_floor(scenario.influence, C0)
    used = psi0 * (1 - floor_slack) if scenario.influence.family == "table" else psi0
    G = gamma_constant(K, gamma, T, scenario.tau_max, used, at, scenario.n_agents)
    C = decay_rate_first(G, gamma, T, scenario.tau_max)
    return FirstOrderConstants(
        N=scenario.n_agents, gamma=gamma, T=float(T), alpha_tilde=float(at),
        tau=float(scenario.tau_max), K=K, C0=C0, psi0=psi0, psi0_used=used,
        D0=initial_spread(scenario), Gamma=G, C=C, normalized=at * K <= 1.0,
    )


class RunningKernelFloor:
    """``phi_tilde(t)``: kernel minimum over ``[0, tau C0V + M0X + max_{s <= t} d_X(s)]``."""

    def __init__(self, traj, influence, offset):
        self.traj = traj
        self.influence = influence
        self.offset = offset
        knots = traj.history_knots()
        hist = np.concatenate([knots, [0.0]]) if traj.tau > 0 else np.array([0.0])
        dx_hist, _ = diameters_xv(traj, hist)
        dx_nodes = _pairwise_max(traj.states[..., : traj.dimension])
        self.start = float(dx_hist.max())
        self.node_cummax = np.maximum.accumulate(np.maximum(dx_nodes, self.start))

    def spread(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(t.shape, self.start)
        pos = t >= 0
        if pos.any():
            k = np.clip(np.searchsorted(self.traj.times, t[pos], side="right") - 1,
                        0, len(self.traj.times) - 1)
            dx_t, _ = diameters_xv(self.traj, t[pos])
            out[pos] = np.maximum(self.node_cummax[k], dx_t)
        return out

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        out = running_min(self.influence, self.offset + self.spread(t))
        out = np.atleast_1d(out)
        return float(out[0]) if scalar else out


@dataclass
class SecondOrderConstants:
    N: int
    gamma: int
    T: float
    alpha_tilde: float
    tau: float
    K_tilde: float
    C0V: float
    M0X: float
    F0: float
    C_star: float
    divergence: str
    d_star_empirical: float = None
    phi_hat: float = None
    mu: float = None
    Gamma_seq: list = field(default_factory=list)
    phi_tilde: object = field(default=None, repr=False)

    @property
    def period(self):
        return window_period(self.gamma, self.T, self.tau)

    def as_dict(self):
        out = {k: v for k, v in asdict(self).items() if k != "phi_tilde"}
        out["period"] = self.period
        return out


def second_order_prefactors(scenario):
    """Trajectory-independent second-order constants."""
    if scenario.pe is None:
        raise ValueError("persistence of excitation constants (T, alpha_tilde) are required")
    T, at = scenario.pe
    gamma = neighbor_summary(scenario.digraph).depth
    _, c0v, m0x = base_constants(scenario)
    Kt = sup_norm(scenario.influence)
    return SecondOrderConstants(
        N=scenario.n_agents, gamma=gamma, T=float(T), alpha_tilde=float(at),
        tau=float(scenario.tau_max), K_tilde=Kt, C0V=c0v, M0X=m0x,
        F0=initial_spread(scenario, velocities=True),
        C_star=contraction_prefactor(Kt, gamma, T, scenario.tau_max, at, scenario.n_agents),
        divergence=divergence_class(scenario.influence, gamma),
    )


def second_order_constants(scenario, traj):
    """Second-order constants along a simulated trajectory.

    ``Gamma_seq[n] = C* phi_tilde((n + 1) P) ** gamma`` for every window that
    fits in the horizon.  ``d_star_empirical`` is the observed bound
    ``tau C0V + M0X + sup d_X`` and ``phi_hat`` the kernel minimum up to it.
    Raises :class:`DegenerateContraction` when ``C* phi_hat ** gamma`` is not
    in (0, 1).
    """
    c = second_order_prefactors(scenario)
    offset = c.tau * c.C0V + c.M0X
    phi = RunningKernelFloor(traj, scenario.influence, offset)
    c.phi_tilde = phi
    n_max = complete_intervals(traj, c.gamma, c.T, c.tau)
    ends = np.arange(1, n_max + 1) * c.period
    ends = np.minimum(ends, traj.horizon)
    c.Gamma_seq = [float(c.C_star * g ** c.gamma) for g in np.atleast_1d(phi(ends))] if n_max else []
    c.d_star_empirical = float(offset + phi.node_cummax[-1])
    c.phi_hat = float(running_min(scenario.influence, c.d_star_empirical))
    factor = c.C_star * c.phi_hat ** c.gamma
    if not 0.0 < factor < 1.0:
        raise DegenerateContraction(f"contraction factor {factor!r} is not in (0, 1)")
    c.mu = -math.log1p(-factor) / c.period
    return c


# -- reports ----------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    description: str
    margin: float
    tolerance: float
    skipped: bool = False
    evaluations: int = 0

    @property
    def passed(self):
        return not self.skipped and self.margin >= -self.tolerance

    def as_dict(self):
        return {
            "name": self.name,
            "description": self.description,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "skipped": self.skipped,
            "evaluations": self.evaluations,
        }


@dataclass
class BoundReport:
    order: str
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, description, margins, tolerance, skipped=False):
        margins = np.atleast_1d(np.asarray(margins, dtype=float))
        worst = float(margins.min()) if margins.size else math.inf
        self.checks.append(CheckResult(name, description, worst, float(tolerance),
                                       skipped, int(margins.size)))

    def as_dict(self):
        return {
            "order": self.order,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "constants": self.constants,
            "notes": list(self.notes),
        }


def _delayed_pairs(scenario, traj, t):
    """``x_i(t)`` and ``x_j(t - tau_ij(t))`` for every active pair at grid times ``t``."""
    pairs, I, J = scenario.arc_arrays()
    d = traj.dimension
    xi = traj.states[:, I, :d]
    out = np.empty_like(xi)
    for e, p in enumerate(pairs):
        s = t - scenario.delays[p](t)
        out[:, e] = traj.positions(s)[:, J[e]]
    return xi, out


def _projection_checks(report, traj, dirs, gamma, T, which, n_max, factors, tol_sandwich,
                       tol_lemma, names):
    """Projection lemmas: bounds after each window and contraction into the next."""
    lemma_margins = []
    sandwich_margins = []
    quantities = []
    for n in range(n_max + 1):
        q = interval_quantities(traj, n, dirs, gamma, T, which)
        quantities.append(q)
        lo, hi = projection_range(traj, which, dirs, q.interval[0], traj.horizon)
        lemma_margins.append(np.concatenate([lo - q.low, q.high - hi]))
    for n in range(n_max):
        q, nxt = quantities[n], quantities[n + 1]
        G = factors[n]
        lower = q.low + G * (q.high_end - q.low)
        upper = q.high - G * (q.high - q.low_end)
        sandwich_margins.append(np.concatenate([nxt.low - lower, upper - nxt.high]))
    report.add(names[0], "projections stay within the extrema of every earlier window",
               np.concatenate(lemma_margins), tol_lemma)
    report.add(names[1], "projections on window n+1 contract by the factor Gamma",
               np.concatenate(sandwich_margins) if sandwich_margins else [], tol_sandwich,
               skipped=n_max < 1)
    return quantities


def check_first_order(scenario, traj, constants, dirs, rel_tol=DEFAULT_REL_TOL,
                      lemma_tol=DEFAULT_LEMMA_TOL):
    """Check every first-order estimate against a trajectory."""
    c = constants
    report = BoundReport(order="first", constants=c.as_dict())
    if not c.normalized:
        report.notes.append("alpha_tilde * K > 1: the normalisation assumption is violated")
    tol = rel_tol * c.D0
    ltol = lemma_tol * max(1.0, c.C0)
    P = c.period
    n_max = complete_intervals(traj, c.gamma, c.T, c.tau)
    t = traj.times
    x = traj.states[..., : traj.dimension]
    d_nodes = _pairwise_max(x)

    bound = c.D0 * np.exp(-c.C * (t - P))
    report.add("decay", "d(t) <= D0 exp(-C (t - gamma (T + tau) - tau))", bound - d_nodes, tol)

    quantities = _projection_checks(
        report, traj, dirs, c.gamma, c.T, "x", n_max, [c.Gamma] * n_max, tol, ltol,
        ("projection_bounds", "projection_contraction"))
    spreads = np.array([q.spread for q in quantities])
    report.constants["D_n"] = spreads.tolist()
    report.add("contraction", "D_{n+1} <= (1 - Gamma) D_n",
               (1 - c.Gamma) * spreads[:-1] - spreads[1:], tol, skipped=n_max < 1)
    report.add("monotone_intervals", "D_{n+1} <= D_n", spreads[:-1] - spreads[1:], tol,
               skipped=n_max < 1)

    norms = np.linalg.norm(x, axis=2)
    report.add("boundedness", "|x_i(t)| <= C0", c.C0 - norms.ravel(), ltol)

    margins = []
    for n, q in enumerate(quantities):
        sel = t >= q.interval[0]
        margins.append(q.spread - d_nodes[sel])
    report.add("diameter_by_interval", "d(t) <= D_n for t >= n P - tau",
               np.concatenate(margins), tol)

    xi, xj = _delayed_pairs(scenario, traj, t)
    r = np.linalg.norm(xi - xj, axis=2)
    psi = scenario.influence(r)
    report.add("kernel_floor", "psi(x_i(t), x_j(t - tau_ij(t))) >= psi0",
               (psi - c.psi0_used).ravel(), lemma_tol * max(1.0, c.K))
    return report


def _stabilization_margin(traj, d_nodes):
    t = traj.times
    H = traj.horizon
    early = d_nodes[t <= 0.75 * H]
    ref = float(early.max()) if early.size else 0.0
    top = float(d_nodes.max())
    growth = 0.0 if top <= ref else (top - ref) / ref if ref > 0 else math.inf
    return STABILIZATION_LIMIT - growth, growth


def check_second_order(scenario, traj, constants, dirs, rel_tol=DEFAULT_REL_TOL,
                       lemma_tol=DEFAULT_LEMMA_TOL):
    """Check every second-order estimate against a trajectory."""
    c = constants
    report = BoundReport(order="second", constants=c.as_dict())
    if c.divergence != "diverges":
        report.notes.append(
            f"kernel integral condition: {c.divergence}; the flocking theorem does not "
            "apply and the checks are informational"
        )
    if c.alpha_tilde * c.K_tilde > 1:
        report.notes.append("alpha_tilde * K_tilde > 1: the normalisation assumption is violated")
    d = traj.dimension
    t = traj.times
    P = c.period
    n_max = complete_intervals(traj, c.gamma, c.T, c.tau)
    x = traj.states[..., :d]
    v = traj.states[..., d:]
    dx = _pairwise_max(x)
    dv = _pairwise_max(v)
    tol_v = rel_tol * c.F0
    ltol = lemma_tol * max(1.0, c.C0V)

    margin, growth = _stabilization_margin(traj, dx)
    report.constants["position_growth_last_quarter"] = growth
    report.add("position_bounded", "sup d_X finite and stable over the last quarter",
               [margin if math.isfinite(margin) else -math.inf], 0.0)

    report.add("velocity_decay", "d_V(t) <= F0 exp(-mu (t - gamma (T + tau) - tau))",
               c.F0 * np.exp(-c.mu * (t - P)) - dv, tol_v)

    factors = c.Gamma_seq[:n_max]
    quantities = _projection_checks(
        report, traj, dirs, c.gamma, c.T, "v", n_max, factors, tol_v, ltol,
        ("velocity_projection_bounds", "velocity_projection_contraction"))
    F = np.array([q.spread for q in quantities])
    report.constants["F_n"] = F.tolist()
    report.add("velocity_contraction", "F_{n+1} <= (1 - Gamma_{n+1}) F_n",
               (1 - np.asarray(factors)) * F[:-1] - F[1:], tol_v, skipped=n_max < 1)
    report.add("monotone_intervals", "F_{n+1} <= F_n", F[:-1] - F[1:], tol_v, skipped=n_max < 1)

    xi, xj = _delayed_pairs(scenario, traj, t)
    gap = np.linalg.norm(xi - xj, axis=2)
    reach = c.tau * c.C0V + c.M0X
    D0X = initial_spread(scenario)
    report.add("delayed_distance", "|x_i(t) - x_j(t - tau_ij(t))| <= tau C0V + M0X + d_X(t)",
               (reach + dx[:, None] - gap).ravel(), rel_tol * (reach + D0X))

    floor = c.phi_tilde(t)
    rates = scenario.influence(gap)
    report.add("rate_floor", "psi(|x_i(t) - x_j(t - tau_ij(t))|) >= phi_tilde(t)",
               (rates - floor[:, None]).ravel(), lemma_tol * max(1.0, c.K_tilde))

    report.add("velocity_bounded", "|v_i(t)| <= C0V",
               (c.C0V - np.linalg.norm(v, axis=2)).ravel(), ltol)
    return report


def fit_decay(series):
    """Least-squares exponential rate of ``(t, value)`` samples (positive = decay)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("need at least three (t, value) samples")
    if np.any(arr[:, 1] <= 0):
        raise NonPositiveValue("exponential fit needs strictly positive values")
    slope = np.polyfit(arr[:, 0], np.log(arr[:, 1]), 1)[0]
    return float(-slope)

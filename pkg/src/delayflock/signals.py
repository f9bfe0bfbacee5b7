"""Time-dependent ingredients of the models.

Delays are continuous and bounded by a global ``tau_max``.  Weights are
piecewise-constant signals with values in [0, 1], optionally periodic, which
makes window integrals and the persistence of excitation margin exact.
Influence kernels are radial: the first-order rate uses ``phi(|y - z|)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HorizonExceeded, NonPositiveFloor, PeViolation

# Grid used to minimise kernels that have no closed-form minimiser.
FLOOR_GRID_POINTS = 4096


@dataclass(frozen=True)
class DelaySpec:
    """``tau(t) = base + amplitude * sin(omega * t + phase)``, kept in [0, tau_max]."""

    kind: str
    base: float
    tau_max: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid"):
            raise ConfigError(f"unknown delay family {self.kind!r}")
        if self.kind == "constant" and (self.amplitude or self.omega or self.phase):
            raise ConfigError("constant delays take no sinusoid parameters")
        if self.amplitude < 0:
            raise ConfigError("delay amplitude must be nonnegative")
        lo, hi = self.base - self.amplitude, self.base + self.amplitude
        if lo < 0 or hi > self.tau_max:
            raise ConfigError(
                f"delay range [{lo:g}, {hi:g}] is not inside [0, tau_max={self.tau_max:g}]"
            )

    @classmethod
    def constant(cls, value, tau_max=None):
        return cls("constant", float(value), float(value if tau_max is None else tau_max))

    @classmethod
    def sinusoid(cls, base, amplitude, omega, phase=0.0, tau_max=None):
        if tau_max is None:
            tau_max = base + amplitude
        return cls("sinusoid", float(base), float(tau_max), float(amplitude),
                   float(omega), float(phase))

    def __call__(self, t):
        if self.kind == "constant":
            return np.full(np.shape(t), self.base) if np.ndim(t) else self.base
        val = self.base + self.amplitude * np.sin(self.omega * np.asarray(t) + self.phase)
        # sin may round a hair past +-1
        return np.clip(val, 0.0, self.tau_max)


def eval_delay(d, t):
    return d(t)


@dataclass(frozen=True)
class WeightSchedule:
    """Piecewise-constant weight ``alpha(t)``.

    ``values[k]`` holds on ``[breakpoints[k], breakpoints[k+1])``.  A periodic
    schedule repeats with period ``breakpoints[-1]``; otherwise ``terminal``
    (when given) applies after the last breakpoint.  ``breakpoints=(0,)`` with
    a terminal value is a constant signal.
    """

    breakpoints: tuple
    values: tuple
    periodic: bool = False
    terminal: float = None
    _prefix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        if not b or b[0] != 0.0:
            raise ConfigError("breakpoints must start at 0")
        if len(v) != len(b) - 1:
            raise ConfigError("need exactly one value per interval between breakpoints")
        if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise ConfigError("breakpoints must be strictly increasing")
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise ConfigError("weights must lie in [0, 1]")
        if self.periodic:
            if not v:
                raise ConfigError("a periodic schedule needs at least one interval")
            if self.terminal is not None:
                raise ConfigError("periodic schedules take no terminal value")
        elif self.terminal is not None:
            if not 0.0 <= self.terminal <= 1.0:
                raise ConfigError("terminal weight must lie in [0, 1]")
            object.__setattr__(self, "terminal", float(self.terminal))
        elif not v:
            raise ConfigError("schedule defines no interval")
        seg = np.diff(b) * np.asarray(v)
        object.__setattr__(self, "_prefix", np.concatenate([[0.0], np.cumsum(seg)]))

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value=1.0):
        return cls((0.0,), (), terminal=value)

    @classmethod
    def blink(cls, on, period, offset=0.0, level=1.0):
        """Periodic on/off signal: ``level`` on ``[offset, offset + on)`` mod ``period``."""
        if not 0 < on <= period or not 0 <= offset < period:
            raise ConfigError("blink needs 0 < on <= period and 0 <= offset < period")
        if on == period:
            return cls((0.0, period), (level,), periodic=True)
        end = offset + on
        if end <= period:
            pts = [0.0, offset, end, period]
            vals = [0.0, level, 0.0]
        else:
            pts = [0.0, end - period, offset, period]
            vals = [level, 0.0, level]
        # drop empty leading/trailing pieces
        keep_b, keep_v = [pts[0]], []
        for b1, val in zip(pts[1:], vals):
            if b1 > keep_b[-1]:
                keep_b.append(b1)
                keep_v.append(val)
        return cls(tuple(keep_b), tuple(keep_v), periodic=True)

    # -- evaluation ---------------------------------------------------------

    @property
    def period(self):
        return self.breakpoints[-1] if self.periodic else None

    @property
    def end(self):
        """Last time the schedule is defined at (infinite if it never ends)."""
        if self.periodic or self.terminal is not None:
            return math.inf
        return self.breakpoints[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        b = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        if self.periodic:
            t = np.mod(t, b[-1])
        if np.any(t > self.end) or np.any(t < 0):
            raise HorizonExceeded(f"weight queried outside [0, {self.end:g}]")
        k = np.searchsorted(b, t, side="right") - 1
        tail = self.terminal if self.terminal is not None else (v[-1] if len(v) else 0.0)
        ext = np.concatenate([v, [tail]])
        out = ext[np.minimum(k, len(v))]
        return out if out.ndim else float(out)

    def _cumulative_base(self, t):
        b = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        m = len(v)
        t = np.asarray(t, dtype=float)
        if m == 0:
            return self.terminal * t
        k = np.clip(np.searchsorted(b, t, side="right") - 1, 0, m - 1)
        inside = self._prefix[k] + v[k] * (t - b[k])
        if self.terminal is None:
            return inside
        beyond = self._prefix[m] + self.terminal * (t - b[m])
        return np.where(t > b[m], beyond, inside)

    def cumulative(self, t):
        """``A(t) = integral of alpha over [0, t]``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cumulative weight is defined for t >= 0")
        if self.periodic:
            period = self.breakpoints[-1]
            q = np.floor(t / period)
            r = t - q * period
            # guard against r == period from rounding
            wrap = r >= period
            q = np.where(wrap, q + 1, q)
            r = np.where(wrap, 0.0, r)
            out = q * self._prefix[-1] + self._cumulative_base(r)
        else:
            if np.any(t > self.end):
                raise HorizonExceeded(
                    f"integration beyond t={self.end:g} needs a terminal value"
                )
            out = self._cumulative_base(t)
        return out if np.ndim(out) else float(out)

    def switch_times(self, t0, t1):
        """Times in ``(t0, t1)`` at which the weight changes value."""
        b = self.breakpoints
        v = self.values
        if self.periodic:
            period = b[-1]
            local = [b[k] for k in range(len(v)) if v[k] != v[k - 1]]
            if not local:
                return np.empty(0)
            first = math.floor(t0 / period)
            last = math.ceil(t1 / period)
            cycles = np.arange(first, last + 1)[:, None] * period
            pts = (cycles + np.asarray(local)[None, :]).ravel()
        else:
            seq = list(v) + ([self.terminal] if self.terminal is not None else [])
            pts = np.asarray([b[k] for k in range(1, min(len(seq), len(b))) if seq[k] != seq[k - 1]])
        pts = np.sort(pts)
        return pts[(pts > t0) & (pts < t1)]


def integrate_weight(w, t0, t1):
    if not 0 <= t0 <= t1:
        raise ValueError("need 0 <= t0 <= t1")
    if t0 == t1:
        return 0.0
    return w.cumulative(t1) - w.cumulative(t0)


def window_minimum(w, T, horizon=None):
    """Exact ``(min, argmin)`` of ``t -> integral over [t, t+T]`` of the weight.

    The window integral is piecewise linear in ``t`` with kinks only where
    ``t`` or ``t + T`` meets a breakpoint, so it is enough to evaluate it at
    those candidates.  Periodic schedules are scanned over one period and the
    result holds for all ``t >= 0``; otherwise ``t`` ranges over
    ``[0, horizon - T]``.
    """
    if T <= 0:
        raise ValueError("window length must be positive")
    b = np.asarray(w.breakpoints)
    if w.periodic:
        period = b[-1]
        cand = np.concatenate([[0.0], np.mod(b, period), np.mod(b - T, period)])
    else:
        if horizon is None or horizon < T:
            raise ValueError("aperiodic schedules need horizon >= T")
        hi = horizon - T
        pts = np.concatenate([b, b - T])
        cand = np.concatenate([[0.0, hi], pts[(pts >= 0) & (pts <= hi)]])
    cand = np.unique(cand)
    vals = np.asarray(w.cumulative(cand + T)) - np.asarray(w.cumulative(cand))
    k = int(np.argmin(vals))
    return float(vals[k]), float(cand[k])


def pe_margin(w, T, horizon=None):
    return window_minimum(w, T, horizon)[0]


@dataclass(frozen=True)
class PeWitness:
    T: float
    alpha_tilde: float
    verified_horizon: float
    margin: float
    tightest_pair: tuple


def verify_pe(schedules, T, alpha_tilde, horizon, rtol=1e-12):
    """Certify persistence of excitation for every active pair.

    ``schedules`` maps ``(i, j)`` to the weight of each pair with
    ``chi[i, j] == 1``.  Periodic schedules are certified for all time; for
    the others the certificate covers ``[0, horizon]``.  Raises
    :class:`PeViolation` listing every failing pair.
    """
    if T <= 0 or alpha_tilde <= 0:
        raise ValueError("T and alpha_tilde must be positive")
    worst = (math.inf, None)
    verified = math.inf
    bad = []
    for pair, w in sorted(schedules.items()):
        if not w.periodic:
            verified = min(verified, horizon)
        margin, start = window_minimum(w, T, None if w.periodic else horizon)
        if margin < alpha_tilde * (1 - rtol):
            bad.append((tuple(pair), start, margin))
        if margin < worst[0]:
            worst = (margin, tuple(pair))
    if bad:
        raise PeViolation(bad)
    return PeWitness(T=T, alpha_tilde=alpha_tilde, verified_horizon=verified,
                     margin=worst[0], tightest_pair=worst[1])


def normalization_holds(alpha_tilde, K):
    """Whether ``alpha_tilde * K <= 1``, which keeps the contraction factors below 1."""
    return alpha_tilde * K <= 1.0


@dataclass(frozen=True)
class InfluenceFunction:
    """Radial influence kernel ``phi(r)``.

    Families: ``constant`` (``K0``), ``radial_rational``
    (``K0 * (1 + r**2) ** (-beta / 2)``), ``radial_exponential``
    (``K0 * exp(-lam * r)``) and ``table`` (piecewise-linear through
    ``(table_r, table_values)``, constant beyond the last sample, clamped from
    below by ``floor`` when given).
    """

    family: str
    K0: float = 1.0
    beta: float = 0.0
    lam: float = 0.0
    table_r: tuple = ()
    table_values: tuple = ()
    floor: float = None

    def __post_init__(self):
        if self.family not in ("constant", "radial_rational", "radial_exponential", "table"):
            raise ConfigError(f"unknown influence family {self.family!r}")
        if self.family == "table":
            r = tuple(float(x) for x in self.table_r)
            v = tuple(float(x) for x in self.table_values)
            object.__setattr__(self, "table_r", r)
            object.__setattr__(self, "table_values", v)
            if len(r) < 1 or len(r) != len(v):
                raise ConfigError("table needs matching, nonempty r and value samples")
            if r[0] != 0.0 or any(b <= a for a, b in zip(r, r[1:])):
                raise ConfigError("table radii must start at 0 and increase strictly")
        else:
            if self.K0 <= 0:
                raise ConfigError("influence amplitude K0 must be positive")
            if self.beta < 0 or self.lam < 0:
                raise ConfigError("influence decay parameters must be nonnegative")

    @property
    def monotone(self):
        """Nonincreasing in r (closed-form minimum at the right endpoint)."""
        return self.family != "table"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "constant":
            out = np.full(r.shape, self.K0)
        elif self.family == "radial_rational":
            out = self.K0 * (1.0 + r * r) ** (-self.beta / 2.0)
        elif self.family == "radial_exponential":
            out = self.K0 * np.exp(-self.lam * r)
        else:
            out = np.interp(r, self.table_r, self.table_values)
            if self.floor is not None:
                out = np.maximum(out, self.floor)
        return out if out.ndim else float(out)

    def _table_knots(self):
        v = np.asarray(self.table_values)
        if self.floor is not None:
            v = np.maximum(v, self.floor)
        return np.asarray(self.table_r), v


def sup_norm(f):
    if f.family == "table":
        return float(f._table_knots()[1].max())
    return float(f.K0)


def running_min(f, R):
    """``min of phi over [0, R]``; vectorised over ``R``."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("radius must be nonnegative")
    if f.monotone:
        return f(R)
    knots, vals = f._table_knots()
    prefix = np.minimum.accumulate(vals)
    k = np.searchsorted(knots, R, side="right") - 1
    out = np.minimum(prefix[k], f(R))
    return out if out.ndim else float(out)


def psi_floor(f, C0):
    """Lower bound of the first-order kernel over the ball of radius ``C0``.

    Two points in the ball are at most ``2 * C0`` apart.  Monotone families
    use the closed form; tables are minimised over a uniform grid of
    ``FLOOR_GRID_POINTS`` steps merged with the table knots.
    """
    if C0 < 0:
        raise ValueError("radius must be nonnegative")
    reach = 2.0 * C0
    if f.monotone:
        val = float(f(reach))
    else:
        knots = np.asarray(f.table_r)
        grid = np.concatenate([np.linspace(0.0, reach, FLOOR_GRID_POINTS + 1),
                               knots[knots <= reach]])
        val = float(np.min(f(grid)))
    if val <= 0:
        raise NonPositiveFloor(f"influence kernel reaches {val:g} within separation {reach:g}")
    return val


def divergence_class(f, gamma):
    """Classify ``integral over [0, inf) of running_min(f, t) ** gamma``.

    Returns ``"diverges"``, ``"converges"`` or ``"unknown"``.
    """
    if f.family == "constant" or (f.family == "radial_rational" and f.beta == 0):
        return "diverges"
    if f.family == "radial_rational":
        # integrand decays like t ** (-beta * gamma)
        return "diverges" if f.beta * gamma <= 1 else "converges"
    if f.family == "radial_exponential":
        return "diverges" if f.lam == 0 else "converges"
    return "unknown"

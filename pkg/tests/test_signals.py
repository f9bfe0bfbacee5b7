import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delayflock.errors import ConfigError, HorizonExceeded, NonPositiveFloor, PeViolation
from delayflock.signals import (
    DelaySpec,
    InfluenceFunction,
    WeightSchedule,
    divergence_class,
    eval_delay,
    integrate_weight,
    normalization_holds,
    pe_margin,
    psi_floor,
    running_min,
    sup_norm,
    verify_pe,
    window_minimum,
)

from oracles import dense_window_minimum, segment_integral


@st.composite
def periodic_schedules(draw):
    n = draw(st.integers(1, 6))
    cuts = sorted(draw(st.sets(st.integers(1, 999), min_size=n - 1, max_size=n - 1)))
    period = draw(st.floats(0.5, 4.0))
    bps = [0.0] + [c * period / 1000 for c in cuts] + [period]
    vals = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    return WeightSchedule(tuple(bps), tuple(vals), periodic=True)


@st.composite
def finite_schedules(draw):
    n = draw(st.integers(1, 6))
    lengths = draw(st.lists(st.floats(0.05, 3.0), min_size=n, max_size=n))
    bps = np.concatenate([[0.0], np.cumsum(lengths)])
    vals = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    terminal = draw(st.one_of(st.none(), st.floats(0, 1)))
    return WeightSchedule(tuple(bps), tuple(vals), terminal=terminal)


# -- delays -------------------------------------------------------------------

def test_constant_delay():
    assert eval_delay(DelaySpec.constant(0.5), 3.0) == 0.5


def test_sinusoid_peak():
    d = DelaySpec.sinusoid(0.3, 0.2, 1.0, 0.0, tau_max=0.5)
    assert eval_delay(d, math.pi / 2) == pytest.approx(0.5, abs=1e-15)


def test_sinusoid_must_fit_in_bound():
    with pytest.raises(ConfigError):
        DelaySpec.sinusoid(0.3, 0.4, 1.0, tau_max=1.0)
    with pytest.raises(ConfigError):
        DelaySpec.sinusoid(0.8, 0.4, 1.0, tau_max=1.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10), st.floats(-3, 3))
def test_delay_stays_in_range(a, frac, omega, phase):
    b = min(a, 1 - a) * frac
    d = DelaySpec.sinusoid(a, b, omega, phase, tau_max=1.0)
    t = np.random.default_rng(0).uniform(0, 1e3, 10**5)
    vals = d(t)
    assert vals.min() >= 0 and vals.max() <= 1.0


# -- weights ------------------------------------------------------------------

def test_constant_weight_integral():
    w = WeightSchedule((0.0, 10.0), (1.0,))
    assert integrate_weight(w, 2.0, 5.0) == 3.0


def test_blink_integral():
    w = WeightSchedule.blink(1.0, 2.0)
    assert integrate_weight(w, 0.0, 3.0) == 2.0


def test_empty_interval():
    assert integrate_weight(WeightSchedule.blink(0.3, 1.0, 0.2), 1.7, 1.7) == 0.0


def test_horizon_exceeded():
    w = WeightSchedule((0.0, 1.0), (1.0,))
    with pytest.raises(HorizonExceeded):
        integrate_weight(w, 0.0, 2.0)


def test_pe_margin_constant():
    assert pe_margin(WeightSchedule.constant(1.0), 2.0, horizon=10.0) == 2.0


def test_pe_margin_blink():
    assert pe_margin(WeightSchedule.blink(1.0, 2.0), 2.0) == 1.0


def test_pe_margin_dark_window():
    w = WeightSchedule((0.0, 5.0, 7.0), (1.0, 0.0), terminal=1.0)
    assert pe_margin(w, 2.0, horizon=20.0) == 0.0
    assert window_minimum(w, 2.0, horizon=20.0)[1] == 5.0


def test_blink_wraps_around():
    w = WeightSchedule.blink(0.5, 1.0, offset=0.75)
    assert w(0.1) == 1.0 and w(0.3) == 0.0 and w(0.8) == 1.0
    assert integrate_weight(w, 0.0, 1.0) == pytest.approx(0.5)


def test_switch_times_skip_repeated_values():
    w = WeightSchedule((0.0, 1.0, 2.0, 3.0), (1.0, 1.0, 0.0), periodic=True)
    assert list(w.switch_times(0.0, 6.0)) == [2.0, 3.0, 5.0]


def test_verify_pe_witness():
    sched = {(0, 1): WeightSchedule.constant(1.0), (1, 0): WeightSchedule.constant(1.0)}
    wit = verify_pe(sched, 1.0, 1.0, horizon=10.0)
    assert wit.margin == 1.0
    assert wit.verified_horizon == 10.0


def test_verify_pe_names_the_dark_pair():
    sched = {(0, 1): WeightSchedule.constant(1.0), (1, 0): WeightSchedule.constant(0.0)}
    with pytest.raises(PeViolation) as err:
        verify_pe(sched, 1.0, 1.0, horizon=10.0)
    assert err.value.pair == (1, 0)
    assert [v[0] for v in err.value.violations] == [(1, 0)]


def test_verify_pe_telegraph_duty_cycle():
    # on for 0.4 of every unit slot, so every window of length 5 sees at least 2
    rng = np.random.default_rng(5)
    sched = {}
    for pair in [(0, 1), (1, 2), (2, 0)]:
        starts = rng.uniform(0, 0.6, size=5) + np.arange(5)
        bps, vals = [0.0], []
        for s in starts:
            bps += [s, s + 0.4]
            vals += [0.0, 1.0]
        bps.append(5.0)
        vals.append(0.0)
        pts, vs = [bps[0]], []
        for b, v in zip(bps[1:], vals):
            if b > pts[-1]:
                pts.append(b)
                vs.append(v)
        sched[pair] = WeightSchedule(tuple(pts), tuple(vs), periodic=True)
    wit = verify_pe(sched, 5.0, 2.0, horizon=100.0)
    assert wit.margin >= 2.0 - 1e-12


@given(periodic_schedules(), st.floats(0, 20), st.floats(0, 20))
def test_integral_matches_segment_sum(w, a, b):
    t0, t1 = sorted((a, b))
    ref = segment_integral(w.breakpoints, w.values, True, None, t0, t1)
    assert integrate_weight(w, t0, t1) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@given(finite_schedules(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_integral_is_additive(w, a, b, c):
    end = w.breakpoints[-1] + (0 if w.terminal is None else 5)
    t0, t1, t2 = sorted(x * end for x in (a, b, c))
    whole = integrate_weight(w, t0, t2)
    parts = integrate_weight(w, t0, t1) + integrate_weight(w, t1, t2)
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-12)


@given(periodic_schedules(), st.floats(0.1, 5.0))
def test_pe_margin_is_a_lower_bound(w, T):
    m = pe_margin(w, T)
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 5 * w.period, 200)
    sampled = np.asarray(w.cumulative(t + T)) - np.asarray(w.cumulative(t))
    assert np.all(sampled >= m - 1e-12)


def test_pe_margin_matches_dense_grid():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        period = 2.0
        cuts = np.sort(rng.choice(np.arange(1, 1000), n - 1, replace=False))
        bps = [0.0] + list(cuts * period / 1000) + [period]
        vals = list(rng.uniform(0, 1, n))
        T = int(rng.integers(1, 3000)) * period / 1000
        w = WeightSchedule(tuple(bps), tuple(vals), periodic=True)
        ref = dense_window_minimum(bps, vals, T, period / 1000)
        assert abs(pe_margin(w, T) - ref) <= 1e-9


def test_normalization_predicate():
    assert normalization_holds(0.5, 2.0)
    assert not normalization_holds(0.6, 2.0)


# -- influence ----------------------------------------------------------------

def test_sup_norm_examples():
    assert sup_norm(InfluenceFunction("constant", K0=2.5)) == 2.5
    assert sup_norm(InfluenceFunction("radial_rational", K0=1.0, beta=2.0)) == 1.0
    tab = InfluenceFunction("table", table_r=(0, 1, 2, 3), table_values=(0.5, 0.9, 0.2, 0.4))
    grid = np.linspace(0, 5, 50001)
    assert sup_norm(tab) == pytest.approx(tab(grid).max())


def test_psi_floor_examples():
    assert psi_floor(InfluenceFunction("constant", K0=3.0), 7.0) == 3.0
    rat = InfluenceFunction("radial_rational", K0=1.0, beta=2.0)
    assert psi_floor(rat, 1.0) == pytest.approx(0.2, abs=1e-15)
    assert psi_floor(rat, 0.0) == 1.0
    assert psi_floor(rat, 1.0) == pytest.approx(rat(np.linspace(0, 2, 10001)).min())


def test_psi_floor_table_touching_zero():
    tab = InfluenceFunction("table", table_r=(0.0, 0.5), table_values=(1.0, 0.0))
    with pytest.raises(NonPositiveFloor):
        psi_floor(tab, 1.0)
    floored = InfluenceFunction("table", table_r=(0.0, 0.5), table_values=(1.0, 0.0), floor=0.1)
    assert psi_floor(floored, 1.0) == 0.1


def test_running_min_examples():
    rat = InfluenceFunction("radial_rational", K0=2.0, beta=1.0)
    assert running_min(rat, 3.0) == rat(3.0)
    assert running_min(InfluenceFunction("constant", K0=0.7), 100.0) == 0.7
    dip = InfluenceFunction("table", table_r=(0, 1, 2, 3), table_values=(1.0, 0.2, 0.8, 0.9))
    assert running_min(dip, 0.5) == pytest.approx(0.6)
    assert running_min(dip, 2.5) == 0.2


@given(st.floats(0, 6))
def test_running_min_matches_scan(R):
    dip = InfluenceFunction("table", table_r=(0, 1, 2, 3, 4),
                            table_values=(1.0, 0.3, 0.8, 0.1, 0.5))
    scan = dip(np.linspace(0, R, 20001)).min()
    assert abs(running_min(dip, R) - scan) <= 1e-3


@pytest.mark.parametrize("f", [
    InfluenceFunction("constant", K0=1.3),
    InfluenceFunction("radial_rational", K0=2.0, beta=1.5),
    InfluenceFunction("radial_exponential", K0=1.0, lam=0.7),
    InfluenceFunction("table", table_r=(0, 1, 2), table_values=(1.0, 0.4, 0.6)),
])
def test_floor_and_sup_bracket_random_pairs(f):
    rng = np.random.default_rng(2)
    C0 = 1.5
    dirs = rng.normal(size=(10**4, 2, 3))
    pts = dirs / np.linalg.norm(dirs, axis=2, keepdims=True) * rng.uniform(0, C0, (10**4, 2, 1))
    vals = f(np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1))
    assert vals.min() >= psi_floor(f, C0) - 1e-12
    assert vals.max() <= sup_norm(f)


def test_divergence_classes():
    assert divergence_class(InfluenceFunction("constant"), 4) == "diverges"
    assert divergence_class(InfluenceFunction("radial_rational", beta=0.5), 1) == "diverges"
    assert divergence_class(InfluenceFunction("radial_rational", beta=0.5), 3) == "converges"
    assert divergence_class(InfluenceFunction("radial_exponential", lam=1.0), 1) == "converges"
    tab = InfluenceFunction("table", table_r=(0,), table_values=(1,))
    assert divergence_class(tab, 1) == "unknown"

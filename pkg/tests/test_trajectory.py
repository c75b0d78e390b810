import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimsim.model import PhysicalParams
from aimsim.trajectory import (
    SampledTrajectory,
    check_bounds,
    concatenate,
    crossing_time,
    from_csv,
    grid_steps,
    integrate,
    to_csv,
    vehicle_objective,
)


def test_integrate_zero_input():
    tr = integrate(-60.0, 0.0, [0.0, 0.0], 0.1)
    assert np.all(tr.x == -60.0) and np.all(tr.v == 0.0)


def test_integrate_constant_velocity():
    tr = integrate(0.0, 10.0, [0.0] * 10, 0.1)
    assert tr.x[10] == pytest.approx(10.0, abs=1e-12)


def test_integrate_constant_accel_matches_closed_form():
    tr = integrate(0.0, 0.0, [3.0] * 10, 0.1)
    assert tr.v[10] == pytest.approx(3.0, abs=1e-12)
    assert tr.x[10] == pytest.approx(0.5 * 3.0 * 1.0**2, abs=1e-12)


def test_integrate_arrays_are_read_only():
    tr = integrate(0.0, 1.0, [1.0], 0.1)
    with pytest.raises(ValueError):
        tr.x[0] = 5.0


@given(
    st.floats(-60, 0), st.floats(0, 11.11),
    st.lists(st.floats(-3, 3), min_size=1, max_size=60),
    st.sampled_from([0.05, 0.1, 0.5]),
)
def test_discretization_contract(x0, v0, u, dt):
    tr = integrate(x0, v0, u, dt)
    u = np.asarray(u)
    np.testing.assert_allclose(tr.v[1:], tr.v[:-1] + u * dt, rtol=0, atol=1e-9)
    np.testing.assert_allclose(tr.x[1:], tr.x[:-1] + tr.v[:-1] * dt + 0.5 * u * dt * dt, rtol=0, atol=1e-9)


@given(
    st.floats(-60, 0), st.floats(0, 11.11),
    st.lists(st.floats(-3, 3), min_size=1, max_size=60),
    st.sampled_from([0.1, 0.5]), st.floats(0, 100), st.floats(-3, 3),
)
def test_reintegration_is_identity(x0, v0, u, dt, t0, u_prev):
    tr = integrate(x0, v0, u, dt, t0, u_prev)
    again = integrate(tr.x[0], tr.v[0], tr.u, tr.dt, tr.t0, tr.u_prev)
    assert np.array_equal(again.x, tr.x) and np.array_equal(again.v, tr.v) and np.array_equal(again.u, tr.u)


def _traj_from_x(t0, dt, xs):
    xs = np.asarray(xs, dtype=float)
    v = np.zeros_like(xs)
    return SampledTrajectory(t0, dt, np.zeros(len(xs) - 1), v, xs)


def test_crossing_time_interpolates():
    tr = _traj_from_x(2.0, 0.1, [19.9, 20.2])
    assert crossing_time(tr, 20.0) == pytest.approx(2.0 + 0.1 * (0.1 / 0.3), abs=1e-12)


def test_crossing_time_boundaries():
    tr = _traj_from_x(1.5, 0.1, [21.0, 22.0])
    assert crossing_time(tr, 20.0) == 1.5
    assert crossing_time(tr, 30.0) is None


@given(st.floats(0, 11.11), st.lists(st.floats(-3, 3), min_size=2, max_size=80), st.floats(-59, 40),
       st.floats(0, 30))
def test_crossing_time_monotone(v0, u, p1, gap):
    # keep speeds nonnegative so x is nondecreasing
    v, clean = v0, []
    for uk in u:
        uk = max(uk, -v / 0.1)
        clean.append(uk)
        v += uk * 0.1
    tr = integrate(-60.0, v0, clean, 0.1)
    a, b = crossing_time(tr, p1), crossing_time(tr, p1 + gap)
    if a is not None and b is not None:
        assert a <= b + 1e-12


def test_objective_zero_motion():
    tr = integrate(-10.0, 0.0, [0.0] * 50, 0.1)
    assert vehicle_objective(tr, 1.0, 2.0, 3.0, 5.0) == 0.0


def test_objective_constant_vmax():
    tr = integrate(-60.0, 11.11, [0.0] * 300, 0.1)
    assert vehicle_objective(tr, 1.0, 0.0, 0.0, 30.0) == pytest.approx(333.3, abs=1e-9)


def test_objective_acceleration_pulse():
    dt = 0.001
    u = [1.0] * 1000 + [0.0] * 1000
    tr = integrate(0.0, 0.0, u, dt)
    assert vehicle_objective(tr, 0.0, 1.0, 0.0, 2.0) == pytest.approx(-1.0, abs=2 * dt)


def test_objective_pads_at_constant_velocity():
    short = integrate(0.0, 5.0, [0.0] * 10, 0.1)
    assert vehicle_objective(short, 1.0, 0.0, 0.0, 30.0) == pytest.approx(150.0, abs=1e-9)


def test_objective_jerk_uses_previous_accel():
    tr = integrate(0.0, 5.0, [1.0, 1.0], 0.5, u_prev=1.0)
    assert vehicle_objective(tr, 0.0, 0.0, 1.0, 1.0) == 0.0
    tr0 = integrate(0.0, 5.0, [1.0, 1.0], 0.5, u_prev=0.0)
    assert vehicle_objective(tr0, 0.0, 0.0, 1.0, 1.0) == pytest.approx(-(2.0**2) * 0.5)


def test_objective_window_before_start_rejected():
    tr = integrate(0.0, 5.0, [0.0] * 10, 0.1, t0=3.0)
    with pytest.raises(ValueError):
        vehicle_objective(tr, 1.0, 0.0, 0.0, 1.0, t_start=2.0)


@given(st.floats(0, 11.11), st.lists(st.floats(-3, 3), min_size=300, max_size=300))
@settings(max_examples=50)
def test_objective_equals_displacement_for_pure_velocity_weight(v0, u):
    dt = 0.1
    v, clean = v0, []
    for uk in u:
        uk = min(max(uk, -v / dt), (11.11 - v) / dt)
        clean.append(uk)
        v += uk * dt
    tr = integrate(-60.0, v0, clean, dt)
    disp = tr.x[300] - tr.x[0]
    # left Riemann sum of v differs from the displacement by 0.5*sum(u)*dt^2
    assert vehicle_objective(tr, 1.0, 0.0, 0.0, 30.0) == pytest.approx(disp, abs=3.0 * dt * 11.11)


def test_check_bounds_examples():
    p = PhysicalParams()
    ok = integrate(-60.0, 5.0, [1.0, -1.0], 0.1)
    assert check_bounds(ok, p) == []
    fast = SampledTrajectory(0.0, 0.1, np.zeros(1), np.array([11.12, 11.0]), np.zeros(2))
    (viol,) = check_bounds(fast, p, 1e-6)
    assert viol.quantity == "v" and viol.index == 0 and viol.magnitude == pytest.approx(0.01)
    hard = SampledTrajectory(0.0, 0.1, np.array([-3.5]), np.array([5.0, 4.65]), np.zeros(2))
    (viol,) = check_bounds(hard, p)
    assert viol.quantity == "u" and viol.magnitude == pytest.approx(0.5)


def test_csv_round_trip():
    tr = integrate(-60.0, 11.11, [0.5, -0.25, 0.0], 0.1, t0=3.0)
    back = from_csv(to_csv(tr))
    assert np.array_equal(back.x, tr.x) and np.array_equal(back.u, tr.u)
    assert back.t0 == 3.0
    assert to_csv(tr, vehicle_id=7).splitlines()[0] == "id,t,x,v,u"


def test_concatenate_keeps_committed_samples():
    a = integrate(-60.0, 10.0, [0.0] * 10, 0.1)
    b = integrate(a.x[5], a.v[5], [-1.0] * 5, 0.1, t0=0.5)
    c = concatenate([(5, a), (5, b)])
    assert c.n_steps == 10
    assert np.array_equal(c.x[:5], a.x[:5]) and np.array_equal(c.x[5:], b.x)


def test_grid_steps():
    assert grid_steps(30.0, 0.1) == 300
    with pytest.raises(ValueError):
        grid_steps(1.05, 0.1)

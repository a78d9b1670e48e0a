import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from morse_cuplength.flow import (BumpFamily, NoDecayError, action_energy_constant, energy,
                                  energy_identity_residual, exponential_rate, homotopy_field,
                                  integrate, pure_F_flow, window_diagnostics, write_csv)
from morse_cuplength.problem import parse_problem


def test_beta_examples():
    b = BumpFamily(1, 2.0)
    assert b(-1.0) == (0.0, 0.0)
    assert b(1.0) == (1.0, 0.0)
    s = np.linspace(-3, b.window_end + 2, 200_001)
    assert np.max(np.abs(b(s)[1])) == pytest.approx(15 / 8, rel=1e-6)


@pytest.mark.parametrize("r", [0.0, 0.25, 1.0, 2.0, 16.0])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_beta_invariants(r, k):
    b = BumpFamily(k, r)
    s = np.linspace(-3, (k + 1) * r + 3, 40_001)
    v, dv = b(s)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(v[s <= -1] == 0) and np.all(v[s >= (k + 1) * r + 1] == 0)
    rise = (s > -1) & (s < 0)
    assert np.all(dv[rise] >= 0) and np.all(dv[rise] <= 2)
    plateau = (s >= 0) & (s <= (k + 1) * r)
    if r >= 1:
        assert np.all(v[plateau] == 1.0)
    else:
        assert np.all(dv[plateau] == 0.0)
    assert np.all(v <= min(r, 1.0) + 1e-15)


def test_beta_vanishes_as_r_to_zero():
    assert max(BumpFamily(2, r)(0.0)[0] for r in (1e-3,)) <= 1e-3


def test_homotopy_field_regions(P1):
    x = np.array([0.4, 1.1])
    G, gG = homotopy_field(P1, BumpFamily(1, 2.0), -2.0, x)
    assert G == pytest.approx(P1.F.value(x)) and np.allclose(gG, P1.F.gradient(x))
    G, gG = homotopy_field(P1, BumpFamily(1, 2.0), 0.0, x)
    assert G == pytest.approx(P1.h.value(x)) and np.allclose(gG, P1.h.gradient(x))
    y = np.array([math.pi / 2, 0.8])            # h = F where cos x0 = 0
    assert homotopy_field(P1, BumpFamily(1, 0.5), 0.3, y)[0] == pytest.approx(P1.F.value(y))


def test_pure_F_flow_P1(P1):
    t = integrate(P1, pure_F_flow(P1), [0.2, 0.3], 0.0, 60.0)
    assert t.converged
    assert np.allclose(t.end, [0.2, 0.0], atol=1e-9)
    assert np.allclose(t.points[:, 0], 0.2)


def test_constant_on_Z(P1):
    t = integrate(P1, pure_F_flow(P1), [1.7, 0.0], 0.0, 10.0)
    assert np.allclose(t.points, [1.7, 0.0])
    assert energy(t) == 0.0
    rep = window_diagnostics(P1, t)
    assert rep.max_abs_G == rep.max_abs_F == rep.energy == 0.0
    with pytest.raises(NoDecayError):
        exponential_rate(P1, t, 1.0)


def test_P3_exact_solution(P3):
    a = 1.5
    t = integrate(P3, pure_F_flow(P3), [0.3, a], 0.0, 20.0, stop_on_converge=False)
    exact = a * np.exp(-2 * (t.s - t.s[0]))
    assert np.max(np.abs(t.x[:, 1] - exact)) < 1e-9
    # the dense interpolant is cubic Hermite, good to about 1e-6 relative
    assert t.at(1.0)[1] == pytest.approx(a * math.exp(-2.0), rel=1e-5)
    assert energy(t) == pytest.approx(a * a, rel=1e-8)
    fit = exponential_rate(P3, t, 2.0)
    assert fit.rate == pytest.approx(2.0, abs=1e-3) and fit.predicted == pytest.approx(1.0)


def test_action_energy_constants(P1, P3):
    assert action_energy_constant(P1, 1.0) == pytest.approx(1 / (1 + math.cos(1.0)), rel=1e-6)
    assert action_energy_constant(P3, 0.7) == pytest.approx(0.25)
    half = P3.with_h("x1^2/2")
    doc = ('{"manifold": {"torus_dims": 1, "euclidean_dims": 1}, "Z": {"pinned": '
           '[{"index": 1}]}, "F": "x1^2/2", "h": "x1^2/2", "seed_grid": [8, 8]}')
    assert action_energy_constant(parse_problem(doc), 1.0) == pytest.approx(0.5)
    assert half is not None


def test_against_scipy_oracle(P1):
    """The DP45 integrator agrees with scipy's RK45 through the ramps."""
    b = BumpFamily(1, 2.0)
    x0 = np.array([0.9, 0.4])
    t = integrate(P1, b, x0, -1.5, 8.0, stop_on_converge=False)

    def rhs(s, x):
        return -homotopy_field(P1, b, s, x)[1]

    ref = solve_ivp(rhs, (-1.5, 8.0), x0, method="DOP853", rtol=1e-12, atol=1e-13,
                    dense_output=True, max_step=0.05)
    for s in (-0.5, 0.0, 2.0, 5.5, 8.0):
        lift = ref.sol(s)
        assert np.allclose(t.at(s), np.mod(lift, 2 * math.pi), atol=1e-7)


def test_half_step_self_consistency(P1):
    b = BumpFamily(1, 8.0)
    x0 = [1.0, 0.0]
    a = integrate(P1, b, x0, -1.0, 8.0, extra_breakpoints=b.evaluation_times())
    c = integrate(P1, b, x0, -1.0, 8.0, extra_breakpoints=b.evaluation_times(),
                  max_step=0.25, rtol=1e-12)
    assert np.allclose(a.at(8.0), c.at(8.0), atol=1e-6)


pos = st.tuples(st.floats(0, 2 * math.pi), st.floats(-1.2, 1.2))


@settings(max_examples=25)
@given(pos, st.sampled_from([0.25, 1.0, 3.0]))
def test_energy_identity_and_monotonicity(P1, x0, r):
    b = BumpFamily(1, r)
    t = integrate(P1, b, list(x0), -2.0, b.window_end + 5.0)
    assert energy_identity_residual(t) < 1e-6
    flat = np.abs(b(t.s)[1]) == 0
    i = np.flatnonzero(flat[:-1] & flat[1:])
    assert np.all(t.G[i + 1] - t.G[i] <= 1e-9)


@settings(max_examples=25)
@given(pos)
def test_shift_covariance(P1, x0):
    b = BumpFamily(1, 1.0)
    s0 = 0.7
    full = integrate(P1, b, list(x0), -1.0, 6.0, extra_breakpoints=(s0,),
                     stop_on_converge=False)
    i = int(np.flatnonzero(full.s == s0)[0])
    tail = integrate(P1, b, full.x[i], s0, 6.0, stop_on_converge=False)
    for s in (1.5, 3.0, 6.0):
        assert np.allclose(full.at(s), tail.at(s), atol=1e-7)


def test_csv_format(P1):
    t = integrate(P1, BumpFamily(1, 1.0), [0.3, 0.2], -1.0, 4.0)
    buf = io.StringIO()
    write_csv(t, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "s,x0,x1,F,G,grad_norm2"
    assert len(lines) == len(t) + 1
    row = [float(v) for v in lines[1].split(",")]
    assert row[0] == t.s[0] and row[4] == t.G[0]

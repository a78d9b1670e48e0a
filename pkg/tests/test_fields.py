import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from morse_cuplength.fields.analysis import morse_bott_verify, oscillation, spectral_gap
from morse_cuplength.fields.expr import ExpressionSyntaxError, UnknownIdentifierError
from morse_cuplength.fields.field import bind, fd_check, parse_expression
from morse_cuplength.fields.newton import cluster_roots, newton_critical, seed_grid
from morse_cuplength.geometry import ManifoldModel
from morse_cuplength.problem import ProblemError, parse_problem

T2 = ManifoldModel(2)
CYL = ManifoldModel(1, 1)


def test_parse_examples():
    f = bind("1 - cos(x1)", T2)
    assert f.value([0.7, math.pi]) == pytest.approx(2.0)
    assert bind("2*x0 + x1^2", ManifoldModel(0, 2)).value([3, 2]) == pytest.approx(10.0)
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("cos(")
    assert err.value.position == 4
    with pytest.raises(UnknownIdentifierError):
        parse_expression("foo(x0)")


def test_unary_minus_binds_tighter_than_power():
    line = ManifoldModel(0, 1)
    assert bind("-x0^2", line).value([3.0]) == pytest.approx(9.0)
    assert bind("0 - x0^2", line).value([3.0]) == pytest.approx(-9.0)


def test_derivative_examples():
    F = bind("1 - cos(x1)", T2)
    v, g, H = F.evaluate(np.array([[1.9, math.pi]]), 2)
    assert v[0] == pytest.approx(2.0)
    assert np.allclose(g[0], [0, 0], atol=1e-15)
    assert np.allclose(H[0], np.diag([0, -1]))
    assert np.allclose(F.gradient([0.0, math.pi / 2]), [0, 1])
    assert np.allclose(F.hessian([0.4, 0.0]), np.diag([0, 1]))


def test_fd_check_examples():
    assert fd_check(bind("0", T2), 50)["gradient"] == 0.0
    assert fd_check(bind("x1^2", CYL), 200)["gradient"] <= 1e-9
    assert fd_check(bind("1 - cos(x1)", T2), 200)["gradient"] <= 1e-6


def test_oscillation_examples():
    assert oscillation(bind("0.1*cos(x0)", T2)).value == pytest.approx(0.2, abs=1e-12)
    assert oscillation(bind("3.5", T2)).value == 0.0
    assert oscillation(bind("0.1*(cos(x0) + cos(x1))", T2)).value == pytest.approx(0.4, abs=1e-12)


@given(st.floats(-50, 50, allow_nan=False))
def test_oscillation_shift_invariant(c):
    base = oscillation(bind("0.1*cos(x0) + 0.05*sin(2*x1)", T2), grid=32).value
    shifted = oscillation(bind(f"0.1*cos(x0) + 0.05*sin(2*x1) + {c!r}", T2), grid=32).value
    assert shifted == pytest.approx(base, abs=1e-9)


def test_spectral_gap_examples(P1, P2, P3):
    assert spectral_gap(P1).value == pytest.approx(2.0, abs=1e-10)
    assert spectral_gap(P2).value == pytest.approx(2.0, abs=1e-10)
    assert math.isinf(spectral_gap(P3).value)


def test_spectral_gap_refinement_stable(P1):
    coarse = spectral_gap(P1).value
    fine = spectral_gap(P1, [2 * c for c in P1.seed_grid]).value
    assert abs(fine - coarse) < 1e-8


def test_morse_bott_examples(P1, P2, P3):
    r1 = morse_bott_verify(P1)
    assert r1.passed and r1.min_transverse == pytest.approx(1.0)
    assert morse_bott_verify(P2).passed
    for rep in (r1, morse_bott_verify(P3)):
        ev = rep.transverse_eigenvalues
        assert np.ptp(ev, axis=0).max() < 1e-8


def test_morse_bott_degenerate():
    doc = ('{"manifold": {"torus_dims": 1, "euclidean_dims": 1}, "Z": {"pinned": '
           '[{"index": 1, "value": 0}]}, "F": "x1^4", "h": "x1^4", "seed_grid": [8, 8]}')
    assert not morse_bott_verify(parse_problem(doc)).passed


def test_load_errors():
    good = ('{"manifold": {"torus_dims": 2, "euclidean_dims": 0, "periods": [%s, 6.283185307179586]},'
            ' "Z": {"pinned": [{"index": 1, "value": 0.0}]}, "F": "%s", "h": "1 - cos(x1)"}')
    parse_problem(good % ("6.283185307179586", "1 - cos(x1)"))
    with pytest.raises(ProblemError, match="F"):
        parse_problem(good % ("6.283185307179586", "1 - cos(x1) + 0.5"))
    with pytest.raises(ProblemError):
        parse_problem(good % ("-1", "1 - cos(x1)"))
    with pytest.raises(ProblemError):
        parse_problem('{"manifold": {"torus_dims": 2}}')


def test_newton_finds_closed_form_roots():
    h = bind("1 - cos(x1) + 0.1*cos(x0)", T2)
    seeds, spacing = seed_grid(T2, (12, 12))
    res = newton_critical(h, seeds)
    assert res.n_failed == 0
    cl = cluster_roots(h, res.roots, 1e-4, 2 * spacing, 1e-6)
    vals = sorted(round(c.value, 12) for c in cl)
    assert vals == [-0.1, 0.1, 1.9, 2.1]
    assert sorted(c.morse_index for c in cl) == [0, 1, 1, 2]

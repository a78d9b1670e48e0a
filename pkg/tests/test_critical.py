import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morse_cuplength import catalog
from morse_cuplength.critical import (BOUND_VIOLATED, HYPOTHESIS_VIOLATED, PASS,
                                      find_critical_points, verify_cuplength_bound)
from morse_cuplength.geometry import distance


def _match(points, expected, m):
    for loc, val, idx in expected:
        hits = [c for c in points if distance(m, c.location, loc) < 1e-8]
        assert len(hits) == 1, loc
        assert hits[0].value == pytest.approx(val, abs=1e-8)
        assert hits[0].morse_index == idx


def test_P1_closed_form(P1):
    pts = find_critical_points(P1.h, P1)
    assert len(pts) == 4
    pi = math.pi
    _match(pts, [((0, 0), 0.1, 1), ((pi, 0), -0.1, 0), ((0, pi), 2.1, 2), ((pi, pi), 1.9, 1)],
           P1.manifold)


def test_P3_closed_form(P3):
    pts = find_critical_points(P3.h, P3)
    assert sorted(round(c.value, 10) for c in pts) == [-0.1, 0.1]


def test_unperturbed_F_gives_two_continua(P1):
    pts = find_critical_points(P1.F, P1)
    assert len(pts) == 2
    assert all(c.continuum and c.degenerate for c in pts)
    assert sorted(round(c.value, 10) for c in pts) == [0.0, 2.0]


def test_verify_P1(P1):
    rep = verify_cuplength_bound(P1)
    assert rep.verdict == PASS and not rep.advisory
    assert rep.norm_hF == pytest.approx(0.2) and rep.gap == pytest.approx(2.0)
    assert rep.required == 2 and rep.found_in_window == 2 and rep.found_total == 4
    vals = sorted(rep.critical_points[i].value for i in rep.in_window)
    assert vals == pytest.approx([-0.1, 0.1], abs=1e-8)


def test_verify_P2(P2):
    rep = verify_cuplength_bound(P2)
    assert rep.verdict == PASS and rep.required == 3 and rep.found_in_window == 4
    vals = sorted(rep.critical_points[i].value for i in rep.in_window)
    assert vals == pytest.approx([-0.2, 0.0, 0.0, 0.2], abs=1e-8)


def test_P3_tight(P3):
    rep = verify_cuplength_bound(P3)
    assert rep.verdict == PASS and math.isinf(rep.gap)
    assert rep.found_in_window == rep.required == 2


def test_hypothesis_violated():
    rep = verify_cuplength_bound(catalog.load("P1", eps=1.5))
    assert rep.norm_hF == pytest.approx(3.0) and rep.verdict == HYPOTHESIS_VIOLATED


def test_bound_violated_when_enumeration_is_starved(P1):
    # one Newton seed cannot find both in-window points: the audit verdict
    rep = verify_cuplength_bound(P1, seed_grid=(1, 1))
    assert rep.found_in_window < rep.required
    assert rep.verdict == BOUND_VIOLATED


@settings(max_examples=6)
@given(st.floats(-3, 3, allow_nan=False).filter(lambda c: abs(c) > 1e-3))
def test_shift_equivariance(P1, c):
    base = find_critical_points(P1.h, P1, (24, 24))
    moved = find_critical_points(P1.h.shifted(c), P1, (24, 24))
    assert len(base) == len(moved)
    for a, b in zip(sorted(base, key=lambda q: q.value), sorted(moved, key=lambda q: q.value)):
        assert distance(P1.manifold, a.location, b.location) < 1e-9
        assert b.value - a.value == pytest.approx(c, abs=1e-12)
    shifted = P1.with_h(f"1 - cos(x1) + 0.1*cos(x0) + {c!r}")
    assert verify_cuplength_bound(shifted, (24, 24)).norm_hF == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("name", ["P1", "P2", "P3"])
def test_refinement_never_loses_points(name):
    p = catalog.load(name)
    coarse = tuple(max(4, c // 4) for c in p.seed_grid)
    fine = tuple(2 * c for c in coarse)
    assert len(find_critical_points(p.h, p, fine)) >= len(find_critical_points(p.h, p, coarse))


@pytest.mark.parametrize("name", ["P1", "P2", "P3"])
def test_pass_verdict_properties(name):
    p = catalog.load(name)
    rep = verify_cuplength_bound(p)
    assert rep.verdict == PASS
    assert rep.found_in_window >= rep.cuplength + 1
    assert all(abs(rep.critical_points[i].value) <= rep.norm_hF + 1e-9 for i in rep.in_window)

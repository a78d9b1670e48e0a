"""Critical points of ``h`` and the cuplength bound verdict."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fields.analysis import critical_clusters, oscillation, spectral_gap
from .fields.field import ScalarFieldSpec
from .problem import ProblemDef

log = logging.getLogger(__name__)

PASS = "pass"
HYPOTHESIS_VIOLATED = "hypothesis_violated"
BOUND_VIOLATED = "BOUND_VIOLATED"


@dataclass
class CriticalPoint:
    location: np.ndarray
    value: float
    morse_index: int | None          # None for degenerate points
    hessian_spectrum: np.ndarray
    basin_id: int
    grad_norm: float
    continuum: bool = False          # part of a non-isolated critical set
    members: int = 1                 # distinct Newton roots in the cluster

    @property
    def degenerate(self) -> bool:
        return self.morse_index is None

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "value": float(self.value),
            "morse_index": "degenerate" if self.morse_index is None else int(self.morse_index),
            "hessian_spectrum": [float(v) for v in self.hessian_spectrum],
            "basin_id": int(self.basin_id),
            "grad_norm": float(self.grad_norm),
            "continuum": bool(self.continuum),
            "members": int(self.members),
        }


def find_critical_points(f: ScalarFieldSpec, p: ProblemDef,
                         seed_grid=None) -> list[CriticalPoint]:
    """Critical points of ``f`` from multi-start Newton over the seed grid.

    Isolated roots keep their Morse index. Roots that chain together into a
    continuum come back as one degenerate entry whose location is the
    lexicographically smallest root found on it.
    """
    if f.manifold != p.manifold:
        raise ValueError("field is bound to a different manifold")
    tol = p.tolerances
    clusters, nr, _ = critical_clusters(f, seed_grid or p.seed_grid, tol)
    if nr.n_failed:
        log.info("find_critical_points: %d/%d seeds did not converge", nr.n_failed, nr.n_seeds)
    out = []
    for i, c in enumerate(clusters):
        g = np.linalg.norm(f.gradient(c.representative))
        if g >= tol.gradient_tol:
            log.warning("dropping root with |grad| = %.3g at %s", g, c.representative)
            continue
        idx = None if (c.degenerate or c.continuum) else c.morse_index
        out.append(CriticalPoint(c.representative, c.value, idx, c.eigenvalues, i,
                                 float(g), c.continuum, len(c.points)))
    return out


@dataclass
class TheoremReport:
    norm_hF: float
    gap: float                      # math.inf when F has no critical points off Z
    applicable: bool
    required: int
    found_total: int
    found_in_window: int
    window: tuple[float, float]
    verdict: str
    cuplength: int
    advisory: bool = False
    advisory_reasons: list = field(default_factory=list)
    critical_points: list = field(default_factory=list)
    in_window: list = field(default_factory=list)   # indices into critical_points
    continua_in_window: int = 0

    def to_dict(self) -> dict:
        return {
            "norm_hF": self.norm_hF,
            "gap": "infinite" if math.isinf(self.gap) else self.gap,
            "applicable": self.applicable,
            "required": self.required,
            "found_total": self.found_total,
            "found_in_window": self.found_in_window,
            "continua_in_window": self.continua_in_window,
            "window": list(self.window),
            "verdict": self.verdict,
            "cuplength": self.cuplength,
            "advisory": self.advisory,
            "advisory_reasons": list(self.advisory_reasons),
            "critical_points": [c.to_dict() for c in self.critical_points],
            "in_window": list(self.in_window),
        }


def verify_cuplength_bound(p: ProblemDef, seed_grid=None) -> TheoremReport:
    """Check that ``h`` has at least ``cuplength(Z) + 1`` critical values in the window.

    The window is ``[-||h - F||, ||h - F||]``, closed, widened by
    ``window_slack``. Non-isolated critical sets of ``h`` in the window count
    as satisfying the bound but make the verdict advisory, as does an
    uncertified oscillation.
    """
    from .topology import cuplength

    tol = p.tolerances
    osc = oscillation(p.difference, tol.oscillation_grid, tol.euclidean_half_width)
    norm = osc.value
    gap = spectral_gap(p, seed_grid).value
    cup = cuplength(p.Z, p.manifold)
    required = cup + 1
    window = (-norm, norm)
    reasons = []
    if not osc.certified:
        reasons.append("oscillation not certified: " + "; ".join(osc.notes))
    applicable = norm < gap
    points = find_critical_points(p.h, p, seed_grid)
    inside = [i for i, c in enumerate(points) if abs(c.value) <= norm + tol.window_slack]
    continua = sum(points[i].continuum for i in inside)
    isolated = len(inside) - continua
    if continua:
        reasons.append(f"{continua} non-isolated critical set(s) of h in the window")
    if not applicable:
        verdict = HYPOTHESIS_VIOLATED
    elif continua or isolated >= required:
        verdict = PASS
    else:
        verdict = BOUND_VIOLATED
    return TheoremReport(norm, gap, applicable, required, len(points), len(inside),
                         window, verdict, cup, bool(reasons), reasons, points, inside,
                         continua)

"""Shooting construction of the moduli space, constrained counts and breaking chains.

``F`` attains its minimum on ``Z`` for every catalog problem, so a solution
that is asymptotic to ``Z`` as ``s -> -inf`` rests at a point ``z0`` of ``Z``
until the homotopy switches on at ``s = -1``. Each element is therefore
determined by ``z0`` and found by integrating forward from ``gamma(-1) = z0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .critical import find_critical_points
from .fields.analysis import oscillation
from .flow import (BumpFamily, Trajectory, WindowReport, energy_identity_residual,
                   integrate_batch, tail_horizon, window_diagnostics)
from .geometry import distance, distance_to_Z, normalize
from .problem import ProblemDef
from .search import NonTransverseError, locate_zeros
from .topology import Constraint, ZMorseFunction, expected_dimension, intrinsic_box

log = logging.getLogger(__name__)


class NoWitnessError(RuntimeError):
    """The constrained count found no solution to follow."""


@dataclass
class ModuliElement:
    r: float
    trajectory: Trajectory
    backward_limit: np.ndarray
    forward_limit: np.ndarray
    shoot_param: np.ndarray
    diagnostics: WindowReport
    energy_residual: float
    rejection: str = ""

    @property
    def accepted(self) -> bool:
        return not self.rejection

    def to_dict(self) -> dict:
        return {"r": self.r, "z0": self.shoot_param.tolist(),
                "forward_limit": self.forward_limit.tolist(),
                "diagnostics": self.diagnostics.to_dict(),
                "energy_residual": self.energy_residual,
                "samples": len(self.trajectory), "rejection": self.rejection}


def _check_on_Z(p: ProblemDef, X: np.ndarray) -> None:
    dz = np.atleast_1d(distance_to_Z(p.manifold, p.Z, X))
    if np.any(dz > p.tolerances.z_tol):
        i = int(np.argmax(dz))
        raise ValueError(f"seed {X[i].tolist()} is not on Z (distance {dz[i]:.3g})")


def shoot(p: ProblemDef, b: BumpFamily, Z0, horizon: float | None = None,
          **kw) -> list[Trajectory]:
    """Trajectories with ``gamma(s) = z0`` for ``s <= -1``, integrated to the tail.

    The domain is ``[-1 - T, (k+1) r + 1 + T]``; the constant part before
    ``-1`` is exact and stored as a single extra sample. The evaluation times
    ``jr`` are integrator breakpoints, so samples sit exactly on them.
    """
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=float))
    _check_on_Z(p, Z0)
    T = tail_horizon(p) if horizon is None else horizon
    ts = integrate_batch(p, b, Z0, -1.0, b.window_end + T,
                         extra_breakpoints=b.evaluation_times(), **kw)
    return [t.with_constant_prefix(-1.0 - T) for t in ts]


def solve_moduli(p: ProblemDef, b: BumpFamily, z_seeds, norm: float | None = None,
                 horizon: float | None = None, keep_rejected: bool = False,
                 **kw) -> list[ModuliElement]:
    """Moduli elements shot from ``z_seeds``.

    An element is accepted when its forward limit lies on ``Z`` within
    ``z_tol`` and its window diagnostics show no violation; rejected ones are
    dropped unless ``keep_rejected``.
    """
    tol = p.tolerances
    if norm is None:
        norm = oscillation(p.difference, tol.oscillation_grid, tol.euclidean_half_width).value
    Z0 = normalize(p.manifold, np.atleast_2d(np.asarray(z_seeds, dtype=float)))
    out = []
    for z0, t in zip(Z0, shoot(p, b, Z0, horizon, **kw)):
        diag = window_diagnostics(p, t, norm)
        end = t.end
        dz = float(distance_to_Z(p.manifold, p.Z, end))
        reason = ""
        if not t.converged:
            reason = "no convergence within the horizon"
        elif dz > tol.z_tol:
            reason = f"forward limit {dz:.3g} away from Z"
        elif not diag.ok:
            reason = f"{len(diag.violations)} window violation(s)"
        e = ModuliElement(float(b.r), t, z0, p.Z.project(p.manifold, end), z0, diag,
                          energy_identity_residual(t), reason)
        if reason:
            log.info("rejected element from z0 = %s: %s", z0.tolist(), reason)
        if e.accepted or keep_rejected:
            out.append(e)
    return out


def evaluate_points(e: ModuliElement | Trajectory, k: int | None = None) -> np.ndarray:
    """``(gamma(r), gamma(2r), ..., gamma(kr))`` as a ``(k, n)`` array."""
    t = e.trajectory if isinstance(e, ModuliElement) else e
    b = t.bump
    k = b.k if k is None else k
    times = np.array([j * b.r for j in range(1, k + 1)])
    if len(times) and times[-1] > t.s[-1]:
        raise ValueError("trajectory domain too short for the evaluation times")
    return t.at(times)


@dataclass
class CountResult:
    parity: int
    witnesses: np.ndarray            # z0 of each solution, points of Z
    elements: list[ModuliElement]
    r: float
    expected_dim: int

    def to_dict(self) -> dict:
        return {"r": self.r, "parity": self.parity, "count": int(len(self.witnesses)),
                "witnesses": [[float(v) for v in w] for w in self.witnesses],
                "expected_dim": self.expected_dim}


def constrained_count(p: ProblemDef, b: BumpFamily, constraints, f_star: ZMorseFunction,
                      star=None, horizon: float | None = None) -> CountResult:
    """Parity of moduli elements with ``gamma(jr) in W^s(x_j, f_j)``.

    ``constraints[j-1]`` is the stable-manifold condition at ``gamma(jr)``
    (the Morse functions are extended to ``M`` by a normal quadratic).
    ``star = (S-, S+)`` adds ``z0 in W^u(x*-, f*)`` and
    ``gamma(+inf) in W^s(x*+, f*)``; by default ``x*-`` is the maximum and
    ``x*+`` the minimum of ``f*``. Solutions in ``z0`` are isolated by
    sign-change bisection over a grid of cells on ``Z``.
    """
    m, Z, tol = p.manifold, p.Z, p.tolerances
    d = Z.dim(m)
    constraints = list(constraints)
    if len(constraints) != b.k:
        raise ValueError(f"need one constraint per evaluation slot (k = {b.k})")
    star = star or ((True,) * d, (False,) * d)
    head = Constraint(f_star, star[0], "unstable")
    tail = Constraint(f_star, star[1], "stable")
    cons = [*constraints, head, tail]
    edim = expected_dimension(d, cons)
    if edim > 0:
        raise ValueError(f"constrained moduli space has expected dimension {edim}")
    T = tail_horizon(p) if horizon is None else horizon

    def points(w):
        X0 = Z.embed(m, w)
        ts = shoot(p, b, X0, T)
        ev = np.stack([evaluate_points(t) for t in ts])       # (N, k, n)
        ends = np.stack([t.end for t in ts])
        return [ev[:, j] for j in range(b.k)] + [X0, ends]

    def sigma(w):
        P = points(w)
        parts = [c.evaluate(P[i])[0] for i, c in enumerate(cons) if c.codim > 0]
        return np.concatenate(parts, axis=1) if parts else np.zeros((len(w), 0))

    def accept(w):
        P = points(w)
        ok = np.ones(len(w), dtype=bool)
        for i, c in enumerate(cons):
            ok &= c.member(P[i])
        return ok

    w = locate_zeros(intrinsic_box(m, Z), sigma, tol.search_grid, tol.search_min_width, accept)
    X0 = normalize(m, Z.embed(m, w)) if len(w) else np.zeros((0, m.dim))
    elements = solve_moduli(p, b, X0, horizon=T, keep_rejected=True) if len(X0) else []
    return CountResult(len(X0) % 2, X0, elements, float(b.r), edim)


# breaking ----------------------------------------------------------------------

@dataclass
class ChainPoint:
    label: str                   # "y0+", "y1-", ...
    s: float
    point: np.ndarray
    h_value: float
    grad_norm: float             # |grad h| at the extracted point
    nearest_critical: np.ndarray
    critical_distance: float

    def to_dict(self) -> dict:
        return {"label": self.label, "s": self.s, "point": self.point.tolist(),
                "h": self.h_value, "grad_norm": self.grad_norm,
                "nearest_critical": self.nearest_critical.tolist(),
                "critical_distance": self.critical_distance}


@dataclass
class ChainAtR:
    r: float
    z0: np.ndarray
    points: list[ChainPoint]
    drops: list[float]           # h(previous) - h(next) per link
    element: ModuliElement | None = None

    @property
    def monotone(self) -> bool:
        return all(dr >= -1e-8 for dr in self.drops)

    def to_dict(self) -> dict:
        return {"r": self.r, "z0": self.z0.tolist(),
                "points": [c.to_dict() for c in self.points],
                "drops": list(self.drops), "monotone": self.monotone}


@dataclass
class BreakingChain:
    r_sequence: list[float]
    chains: list[ChainAtR] = field(default_factory=list)
    critical_points: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return all(c.monotone for c in self.chains)

    def to_dict(self) -> dict:
        return {"r_sequence": list(self.r_sequence),
                "chains": [c.to_dict() for c in self.chains],
                "monotone": self.monotone}


def extract_chain(p: ProblemDef, t: Trajectory, crit_locations: np.ndarray,
                  samples: int = 257) -> list[ChainPoint]:
    """``y_0^+, y_1^-, y_1^+, ..., y_{k+1}^-`` from a witness trajectory.

    ``y_j^-`` minimizes ``|grad h|`` over ``[jr - r/4, jr]`` and ``y_j^+`` over
    ``[jr, jr + r/4]``, so the windows of different slots never overlap. The
    points are taken on the trajectory itself, not polished by Newton.
    """
    b = t.bump
    r, k = float(b.r), b.k
    wins = [("y0+", 0.0, r / 4)]
    for j in range(1, k + 1):
        wins += [(f"y{j}-", j * r - r / 4, j * r), (f"y{j}+", j * r, j * r + r / 4)]
    wins.append((f"y{k + 1}-", (k + 1) * r - r / 4, (k + 1) * r))
    out = []
    m = p.manifold
    for label, a, c in wins:
        S = np.linspace(a, c, samples)
        X = t.at(S)
        hv, hg = p.h.evaluate(X, 1)
        gn = np.linalg.norm(hg, axis=1)
        i = int(np.argmin(gn))
        if len(crit_locations):
            dc = np.atleast_1d(distance(m, crit_locations, X[i]))
            jc = int(np.argmin(dc))
            near, dist = crit_locations[jc], float(dc[jc])
        else:
            near, dist = np.full(m.dim, np.nan), math.inf
        out.append(ChainPoint(label, float(S[i]), X[i], float(hv[i]), float(gn[i]), near, dist))
    return out


def breaking_analysis(p: ProblemDef, k: int, r_sequence, constraints, f_star: ZMorseFunction,
                      star=None, horizon: float | None = None) -> BreakingChain:
    """Follow one witness of the constrained count through ``r_sequence``.

    At the first radius the lexicographically first witness is taken; after
    that the witness whose ``z0`` is nearest the previous one.
    """
    crit = find_critical_points(p.h, p)
    locs = np.array([c.location for c in crit]) if crit else np.zeros((0, p.manifold.dim))
    out = BreakingChain([float(r) for r in r_sequence], critical_points=crit)
    prev = None
    for r in r_sequence:
        b = BumpFamily(k, float(r))
        res = constrained_count(p, b, constraints, f_star, star, horizon)
        if len(res.witnesses) == 0:
            raise NoWitnessError(f"no constrained moduli element at r = {r}")
        if prev is None:
            i = 0
        else:
            i = int(np.argmin(distance(p.manifold, res.witnesses, prev)))
        prev = res.witnesses[i]
        el = res.elements[i]
        pts = extract_chain(p, el.trajectory, locs)
        drops = [pts[j].h_value - pts[j + 1].h_value for j in range(len(pts) - 1)]
        out.chains.append(ChainAtR(float(r), prev, pts, drops, el))
    return out

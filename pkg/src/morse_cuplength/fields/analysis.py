"""Oscillation seminorm, spectral gap and the Morse-Bott check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..geometry import distance_to_Z
from ..problem import ProblemDef, Tolerances
from .field import ScalarFieldSpec
from .newton import CriticalCluster, cluster_roots, newton_critical, seed_grid

log = logging.getLogger(__name__)


@dataclass
class OscillationResult:
    value: float
    sup: float
    inf: float
    argsup: np.ndarray
    arginf: np.ndarray
    certified: bool
    notes: list = field(default_factory=list)

    def __float__(self) -> float:
        return self.value


def oscillation(f: ScalarFieldSpec, grid: int = 64, half_width: float = 4.0,
                refine: int = 6) -> OscillationResult:
    """``sup f - inf f`` by a dense grid followed by local refinement.

    Euclidean axes are searched on ``[-half_width, half_width]``. An extremum
    on that boundary with ``f`` still improving outward may lie outside the
    box, so the result is then flagged as not certified.
    """
    m = f.manifold
    axes = []
    for j in range(m.dim):
        if m.is_toroidal(j):
            axes.append(np.arange(grid) * m.periods[j] / grid)
        else:
            axes.append(np.linspace(-half_width, half_width, grid))
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in mesh], axis=-1)
    v = f.evaluate(X, 0)
    notes, certified = [], True
    bounds = [(None, None) if m.is_toroidal(j) else (-half_width, half_width)
              for j in range(m.dim)]

    def polish(sign: float):
        best_x, best_v, ok_any = None, -math.inf, False
        for i in np.argsort(-sign * v)[:refine]:
            res = minimize(lambda x: -sign * f.evaluate(x, 1)[0], X[i],
                           jac=lambda x: -sign * f.evaluate(x, 1)[1],
                           method="L-BFGS-B", bounds=bounds,
                           options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
            score = sign * float(f.evaluate(res.x, 0))   # larger is better
            ok_any |= bool(res.success)
            if score > best_v:
                best_v, best_x = score, res.x
        return best_x, sign * best_v, ok_any

    xs, vs, ok_s = polish(+1.0)
    xi, vi, ok_i = polish(-1.0)
    vs, vi = max(vs, float(v.max())), min(vi, float(v.min()))
    if not (ok_s and ok_i):
        certified = False
        notes.append("local refinement did not converge")
    for name, x, sign in (("sup", xs, 1.0), ("inf", xi, -1.0)):
        g = f.evaluate(x, 1)[1]
        for j in range(m.torus_dims, m.dim):
            # at the box wall, f still improving outward means the box cut it off
            outward = np.sign(x[j]) * sign * g[j]
            if abs(abs(x[j]) - half_width) < 1e-9 * half_width and outward > 1e-12:
                certified = False
                notes.append(f"{name} attained on the Euclidean search boundary (x{j})")
    value = vs - vi
    if value < 1e-14:
        value = 0.0
    return OscillationResult(value, vs, vi, np.asarray(xs), np.asarray(xi), certified, notes)


@dataclass
class SpectralGapResult:
    value: float                       # math.inf when no critical points off Z
    clusters: list[CriticalCluster]
    z_clusters: list[int]              # indices of clusters on Z
    n_seeds: int
    n_failed: int
    seed_spacing: float
    note: str = "enumeration-based: exact for catalog fields, an upper bound otherwise"

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def critical_clusters(f: ScalarFieldSpec, counts, tol: Tolerances):
    """Enumerate the critical set of ``f`` from a seed grid."""
    seeds, spacing = seed_grid(f.manifold, counts, tol.euclidean_half_width)
    nr = newton_critical(f, seeds, tol=tol.newton_tol, max_iter=tol.newton_max_iter)
    clusters = cluster_roots(f, nr.roots, tol.cluster_radius, 2.0 * spacing,
                             tol.degeneracy_tol)
    return clusters, nr, spacing


def spectral_gap(p: ProblemDef, seed_grid_counts=None) -> SpectralGapResult:
    """``inf |F|`` over critical points of ``F`` not on ``Z`` (``inf`` if none)."""
    tol = p.tolerances
    counts = seed_grid_counts or p.seed_grid
    clusters, nr, spacing = critical_clusters(p.F, counts, tol)
    on_z, gap = [], math.inf
    for i, c in enumerate(clusters):
        dz = distance_to_Z(p.manifold, p.Z, c.points)
        if np.min(dz) < tol.z_tol:
            on_z.append(i)
            if np.max(dz) > tol.z_tol:
                log.warning("critical cluster %d touches Z but extends off it", i)
            continue
        gap = min(gap, float(np.min(np.abs(c.values))))
    if nr.n_failed:
        log.info("spectral_gap: %d/%d seeds failed to converge", nr.n_failed, nr.n_seeds)
    return SpectralGapResult(gap, clusters, on_z, nr.n_seeds, nr.n_failed, spacing)


@dataclass
class MorseBottReport:
    passed: bool
    transverse_eigenvalues: np.ndarray    # (S, codim) sorted, per sampled z
    max_tangential: float                 # largest |entry| of tangent/mixed blocks
    min_transverse: float                 # smallest |transverse eigenvalue|
    samples: np.ndarray
    failure: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_transverse": self.min_transverse,
            "max_tangential": self.max_tangential,
            "transverse_spectrum": self.transverse_eigenvalues[0].tolist()
            if len(self.transverse_eigenvalues) else [],
            "samples": int(len(self.samples)),
            "failure": self.failure,
        }


def morse_bott_verify(p: ProblemDef, samples_per_axis: int = 16) -> MorseBottReport:
    """Check ``ker Hess_z F = T_z Z`` at grid samples of ``Z``."""
    tol = p.tolerances
    m = p.manifold
    zs = p.Z.grid(m, samples_per_axis, offset=0.25)
    _, _, H = p.F.evaluate(zs, 2)
    pinned = list(p.Z.pinned_indices)
    free = list(p.Z.free_indices(m))
    normal = H[:, pinned][:, :, pinned]
    tangential = H[:, free][:, :, free] if free else np.zeros((len(zs), 0, 0))
    mixed = H[:, free][:, :, pinned] if free else np.zeros((len(zs), 0, len(pinned)))
    eig = np.linalg.eigvalsh(normal) if pinned else np.zeros((len(zs), 0))
    max_tan = float(max(np.max(np.abs(tangential), initial=0.0),
                        np.max(np.abs(mixed), initial=0.0)))
    min_tr = float(np.min(np.abs(eig))) if eig.size else math.inf
    failure = ""
    if max_tan > tol.degeneracy_tol:
        k = int(np.argmax(np.max(np.abs(tangential.reshape(len(zs), -1)), axis=1, initial=0.0)))
        failure = f"Hessian not zero along Z at z = {zs[k].tolist()} (|entry| {max_tan:.3g})"
    elif eig.size and min_tr < tol.degeneracy_tol:
        k = int(np.argmin(np.min(np.abs(eig), axis=1)))
        failure = (f"degenerate transverse direction at z = {zs[k].tolist()}: "
                   f"eigenvalue {eig[k][np.argmin(np.abs(eig[k]))]:.3g}")
    return MorseBottReport(not failure, eig, max_tan, min_tr, zs, failure)

"""Multi-start damped Newton on the gradient and clustering of the roots."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..geometry import ManifoldModel, distance, normalize
from .field import ScalarFieldSpec

log = logging.getLogger(__name__)


def seed_grid(m: ManifoldModel, counts, half_width: float = 4.0,
              offset: float = 0.37) -> tuple[np.ndarray, float]:
    """Tensor grid of Newton seeds and its largest spacing.

    Circle axes get ``count`` points with a fractional offset (so that seeds
    avoid the symmetric points where catalog Hessians vanish); Euclidean axes
    get ``count`` points spanning ``[-half_width, half_width]``.
    """
    axes, spacing = [], 0.0
    for j, c in enumerate(counts):
        if m.is_toroidal(j):
            per = m.periods[j]
            axes.append((np.arange(c) + offset) * per / c)
            spacing = max(spacing, per / c)
        else:
            axes.append(np.linspace(-half_width, half_width, c))
            spacing = max(spacing, 2 * half_width / (c - 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1), spacing


@dataclass
class NewtonResult:
    roots: np.ndarray        # (K, n) normalized converged roots
    residuals: np.ndarray    # (K,) gradient norms at the roots
    n_seeds: int
    n_failed: int


def newton_critical(f: ScalarFieldSpec, seeds: np.ndarray, tol: float = 1e-12,
                    max_iter: int = 80, max_step: float = 1.0,
                    escape_radius: float = 1e3) -> NewtonResult:
    """Damped Newton on ``grad f = 0`` from every seed.

    The step solves ``H d = -g`` in the least-squares sense (pseudo-inverse),
    which keeps the iteration well defined along Morse-Bott kernels. Steps
    are capped at ``max_step`` and halved until ``|g|`` decreases.
    """
    X = np.array(seeds, dtype=float)
    N, n = X.shape
    active = np.ones(N, dtype=bool)
    _, g, H = f.evaluate(X, 2)
    res = np.linalg.norm(g, axis=1)
    for _ in range(max_iter):
        active &= res >= tol
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Hp = np.linalg.pinv(H[idx], rcond=1e-10, hermitian=True)
        d = -np.einsum("kij,kj->ki", Hp, g[idx])
        norm = np.linalg.norm(d, axis=1)
        scale = np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        d *= scale[:, None]
        alpha = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        newX, newg, newH, newres = X[idx].copy(), g[idx].copy(), H[idx].copy(), res[idx].copy()
        for _ in range(30):
            k = np.flatnonzero(pending)
            if k.size == 0:
                break
            trial = X[idx[k]] + alpha[k, None] * d[k]
            _, tg, tH = f.evaluate(trial, 2)
            tres = np.linalg.norm(tg, axis=1)
            ok = tres < res[idx[k]] * (1 - 1e-4 * alpha[k]) + 1e-300
            ok |= tres < tol
            acc = k[ok]
            newX[acc], newg[acc], newH[acc], newres[acc] = trial[ok], tg[ok], tH[ok], tres[ok]
            pending[acc] = False
            alpha[k[~ok]] *= 0.5
        # seeds where no decrease was found keep their point and stop
        stalled = idx[pending]
        X[idx], g[idx], H[idx], res[idx] = newX, newg, newH, newres
        active[stalled] = False
        active &= np.all(np.abs(X) < escape_radius, axis=1)
    conv = res < max(tol, 1e-300) * 100
    failed = int(np.count_nonzero(~conv))
    if failed:
        log.debug("Newton: %d of %d seeds did not converge", failed, N)
    return NewtonResult(normalize(f.manifold, X[conv]), res[conv], N, failed)


@dataclass
class CriticalCluster:
    """A connected piece of a critical set found by Newton.

    ``points`` are the distinct roots (after merging), ``representative`` the
    lexicographically smallest one. ``continuum`` marks clusters whose roots
    chain together at grid resolution and include a degenerate Hessian,
    i.e. numerically detected critical manifolds.
    """

    points: np.ndarray
    values: np.ndarray
    representative: np.ndarray
    value: float
    eigenvalues: np.ndarray
    degenerate: bool
    continuum: bool

    @property
    def morse_index(self) -> int | None:
        if self.degenerate:
            return None
        return int(np.count_nonzero(self.eigenvalues < 0))


def _periodic_tree(m: ManifoldModel, P: np.ndarray):
    Q = P.copy()
    box = np.empty(m.dim)
    for j in range(m.dim):
        if m.is_toroidal(j):
            box[j] = m.periods[j]
        else:
            lo = Q[:, j].min() if len(Q) else 0.0
            Q[:, j] -= lo - 1.0
            box[j] = 1e12
    Q = np.minimum(np.maximum(Q, 0.0), np.nextafter(box, 0))
    return cKDTree(Q, boxsize=box)


def _components(m: ManifoldModel, P: np.ndarray, radius: float) -> np.ndarray:
    if len(P) == 0:
        return np.zeros(0, dtype=int)
    tree = _periodic_tree(m, P)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    A = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(P), len(P)))
    _, labels = connected_components(A, directed=False)
    return labels


def cluster_roots(f: ScalarFieldSpec, roots: np.ndarray, merge_radius: float,
                  link_radius: float, degeneracy_tol: float) -> list[CriticalCluster]:
    """Merge roots within ``merge_radius``; link merged roots within ``link_radius``.

    Linked groups become one cluster only when the group has a degenerate
    Hessian somewhere; otherwise nearby nondegenerate roots stay separate
    critical points. Clusters come back sorted by representative.
    """
    m = f.manifold
    if len(roots) == 0:
        return []
    lab = _components(m, roots, merge_radius)
    reps = []
    for c in np.unique(lab):
        members = roots[lab == c]
        order = np.lexsort(members.T[::-1])
        reps.append(members[order[0]])
    reps = np.array(reps)
    vals, _, H = f.evaluate(reps, 2)
    eig = np.linalg.eigvalsh(H)
    degenerate = np.any(np.abs(eig) < degeneracy_tol, axis=1)
    link = _components(m, reps, link_radius)
    clusters = []
    for c in np.unique(link):
        sel = np.flatnonzero(link == c)
        if len(sel) > 1 and degenerate[sel].any():
            groups = [sel]
        else:
            groups = [[i] for i in sel]
        for grp in groups:
            pts = reps[grp]
            order = np.lexsort(pts.T[::-1])
            pts = pts[order]
            i0 = grp[order[0]]
            clusters.append(CriticalCluster(
                points=pts, values=vals[grp][order], representative=pts[0],
                value=float(vals[i0]), eigenvalues=eig[i0],
                degenerate=bool(degenerate[grp].any()), continuum=len(grp) > 1))
    clusters.sort(key=lambda c: tuple(np.round(c.representative, 9)))
    return clusters


def nearest_cluster_distance(m: ManifoldModel, cluster: CriticalCluster, x) -> float:
    return float(np.min(distance(m, cluster.points, np.asarray(x, dtype=float))))

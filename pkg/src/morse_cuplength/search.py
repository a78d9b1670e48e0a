"""Locating isolated zeros of a sign-vector map by cell bisection.

A map ``sigma: box -> {-1, 0, +1}^D`` is sampled at the corners of a coarse
grid. A cell is a candidate when every component takes both signs (or
vanishes) on its corners; candidates are split into ``2^m`` children until
their width drops below ``min_width``. Sign changes that are not genuine
zeros (seams of a lifted label, say) are removed afterwards by ``accept``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class NonTransverseError(RuntimeError):
    """Solutions are not isolated or sit on a coarse cell boundary."""


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    periodic: tuple[bool, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    def wrap(self, P: np.ndarray) -> np.ndarray:
        P = np.array(P, dtype=float)
        for j in range(self.dim):
            if self.periodic[j]:
                w = self.hi[j] - self.lo[j]
                P[:, j] = self.lo[j] + np.mod(P[:, j] - self.lo[j], w)
        return P

    def delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        for j in range(self.dim):
            if self.periodic[j]:
                w = self.hi[j] - self.lo[j]
                d[..., j] -= w * np.round(d[..., j] / w)
        return d


def _corners(m: int) -> np.ndarray:
    return np.array(np.meshgrid(*[[0.0, 1.0]] * m, indexing="ij")).reshape(m, -1).T


def _evaluate(box: Box, sigma, P: np.ndarray, cache: dict, key_scale: float):
    keys = [tuple(k) for k in np.round(box.wrap(P) / key_scale).astype(np.int64)]
    missing = sorted({k for k in keys if k not in cache})
    if missing:
        Q = np.array(missing, dtype=float) * key_scale
        S = np.asarray(sigma(Q))
        for k, s in zip(missing, S):
            cache[k] = s
    return np.array([cache[k] for k in keys])


def locate_zeros(box: Box, sigma: Callable[[np.ndarray], np.ndarray], grid: int,
                 min_width: float, accept: Callable[[np.ndarray], np.ndarray] | None = None,
                 boundary_tol: float | None = None, max_cells: int = 20_000) -> np.ndarray:
    """Isolated zeros of ``sigma`` inside ``box``, one row per solution.

    ``accept`` receives the refined candidate centers and returns a boolean
    mask of genuine solutions. Candidates within ``boundary_tol`` of a
    coarse grid line raise :class:`NonTransverseError`, as does a candidate
    count that keeps growing (a solution set of positive dimension).
    """
    m = box.dim
    lo, hi = np.array(box.lo), np.array(box.hi)
    width0 = (hi - lo) / grid
    boundary_tol = 10 * min_width if boundary_tol is None else boundary_tol
    key_scale = min_width / 64.0
    axes = [lo[j] + width0[j] * np.arange(grid) for j in range(m)]
    cells = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=-1)
    widths = width0.copy()
    corner = _corners(m)
    cache: dict = {}
    while True:
        P = (cells[:, None, :] + corner[None] * widths).reshape(-1, m)
        S = _evaluate(box, sigma, P, cache, key_scale).reshape(len(cells), len(corner), -1)
        if S.shape[-1] == 0:
            raise ValueError("sign map has no components: solution set is not isolated")
        pos = (S >= 0).any(axis=1)
        neg = (S <= 0).any(axis=1)
        cand = np.all(pos & neg, axis=1)
        cells = cells[cand]
        if len(cells) > max_cells:
            raise NonTransverseError(f"{len(cells)} candidate cells: zeros are not isolated")
        if len(cells) == 0 or widths.max() < min_width:
            break
        widths = widths / 2.0
        cells = (cells[:, None, :] + corner[None] * widths).reshape(-1, m)
    if len(cells) == 0:
        return np.zeros((0, m))
    centers = box.wrap(cells + widths / 2.0)
    if accept is not None:
        centers = centers[np.asarray(accept(centers), dtype=bool)]
    sols = _merge(box, centers, 4.0 * float(np.linalg.norm(widths)))
    for x in sols:
        off = (x - lo) / width0
        frac = np.abs(off - np.round(off)) * width0
        # a zero on a coarse grid line is seen from two cells at once
        if np.any(frac < boundary_tol):
            raise NonTransverseError(f"solution {x.tolist()} lies on a coarse cell boundary")
    return sols


def _merge(box: Box, P: np.ndarray, radius: float) -> np.ndarray:
    """Average candidate centers closer than ``radius`` (single linkage)."""
    if len(P) == 0:
        return P
    n = len(P)
    label = np.arange(n)
    for i in range(n):
        d = np.linalg.norm(box.delta(P, P[i]), axis=1)
        near = np.flatnonzero(d < radius)
        root = label[near].min()
        for j in near:
            label[label == label[j]] = root
    out = []
    for c in np.unique(label):
        grp = P[label == c]
        out.append(box.wrap((grp[0] + box.delta(grp, grp[0]).mean(axis=0))[None])[0])
    out = np.array(out)
    return out[np.lexsort(out.T[::-1])]

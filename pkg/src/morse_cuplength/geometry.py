"""Flat product manifolds T^p x R^q and coordinate subtori.

Points are plain float arrays of length ``p + q``; the first ``p`` entries are
toroidal and live in ``[0, period)`` once normalized. Most functions accept a
single point of shape ``(n,)`` or a batch of shape ``(N, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class DimensionError(ValueError):
    """Coordinate vector does not match the manifold dimension."""


@dataclass(frozen=True)
class ManifoldModel:
    """The product T^p x R^q with the flat metric.

    Attributes:
        torus_dims: number of circle factors ``p``.
        euclidean_dims: number of line factors ``q``.
        periods: length-``p`` tuple of circle periods; defaults to ``2*pi``.
    """

    torus_dims: int
    euclidean_dims: int = 0
    periods: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.torus_dims < 0 or self.euclidean_dims < 0:
            raise ValueError("dimension counts must be nonnegative")
        if self.torus_dims + self.euclidean_dims < 1:
            raise ValueError("manifold must have positive dimension")
        periods = tuple(float(t) for t in self.periods) or (TWO_PI,) * self.torus_dims
        if len(periods) != self.torus_dims:
            raise ValueError(
                f"expected {self.torus_dims} periods, got {len(periods)}")
        if any(not np.isfinite(t) or t <= 0 for t in periods):
            raise ValueError("all periods must be positive and finite")
        object.__setattr__(self, "periods", periods)

    @property
    def dim(self) -> int:
        return self.torus_dims + self.euclidean_dims

    @property
    def period_vector(self) -> np.ndarray:
        """Per-coordinate periods, ``inf`` on Euclidean axes."""
        return np.array(list(self.periods) + [np.inf] * self.euclidean_dims)

    def is_toroidal(self, index: int) -> bool:
        return 0 <= index < self.torus_dims

    def to_dict(self) -> dict:
        return {
            "torus_dims": self.torus_dims,
            "euclidean_dims": self.euclidean_dims,
            "periods": list(self.periods),
        }


def _as_coords(m: ManifoldModel, raw) -> np.ndarray:
    x = np.asarray(raw, dtype=float)
    if x.shape[-1:] != (m.dim,):
        raise DimensionError(f"expected {m.dim} coordinates, got shape {x.shape}")
    return x


def normalize(m: ManifoldModel, raw) -> np.ndarray:
    """Reduce toroidal coordinates into ``[0, period)``; Euclidean ones pass."""
    x = _as_coords(m, raw).copy()
    p = m.torus_dims
    if p:
        per = np.asarray(m.periods)
        t = np.mod(x[..., :p], per)
        # mod can round up to exactly the period for tiny negative inputs
        t = np.where(t >= per, 0.0, t)
        x[..., :p] = t
    return x


def wrapped_difference(m: ManifoldModel, a, b) -> np.ndarray:
    """Shortest coordinate displacement ``b - a`` (minimal image on circles)."""
    a = _as_coords(m, a)
    b = _as_coords(m, b)
    d = b - a
    p = m.torus_dims
    if p:
        per = np.asarray(m.periods)
        t = d[..., :p]
        d = d.copy()
        d[..., :p] = t - per * np.round(t / per)
    return d


def distance(m: ManifoldModel, a, b) -> np.ndarray | float:
    """Geodesic distance for the flat product metric."""
    d = np.sqrt(np.sum(wrapped_difference(m, a, b) ** 2, axis=-1))
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class SubmanifoldSpec:
    """Coordinate subtorus ``Z = {x : x_j = v_j for j in pinned}``.

    Every free index must be toroidal so that ``Z`` is closed. ``Z`` is then
    a torus of dimension ``dim M - len(pinned)`` and is connected.
    """

    pinned_indices: tuple[int, ...]
    pinned_values: tuple[float, ...] = ()

    def __post_init__(self):
        idx = tuple(int(j) for j in self.pinned_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("pinned indices must be distinct")
        vals = tuple(float(v) for v in self.pinned_values) or (0.0,) * len(idx)
        if len(vals) != len(idx):
            raise ValueError("one pinned value per pinned index")
        order = np.argsort(idx, kind="stable")
        object.__setattr__(self, "pinned_indices", tuple(idx[i] for i in order))
        object.__setattr__(self, "pinned_values", tuple(vals[i] for i in order))

    def validate(self, m: ManifoldModel) -> None:
        for j in self.pinned_indices:
            if not 0 <= j < m.dim:
                raise DimensionError(f"pinned index {j} outside 0..{m.dim - 1}")
        for j in self.free_indices(m):
            if not m.is_toroidal(j):
                raise ValueError(
                    f"free index {j} is Euclidean; Z would not be compact")

    def free_indices(self, m: ManifoldModel) -> tuple[int, ...]:
        return tuple(j for j in range(m.dim) if j not in self.pinned_indices)

    def dim(self, m: ManifoldModel) -> int:
        return m.dim - len(self.pinned_indices)

    def intrinsic_model(self, m: ManifoldModel) -> ManifoldModel:
        """``Z`` as a flat torus in its free coordinates."""
        free = self.free_indices(m)
        if not free:
            raise ValueError("Z is a point; it has no intrinsic torus model")
        return ManifoldModel(len(free), 0, tuple(m.periods[j] for j in free))

    def embed(self, m: ManifoldModel, w) -> np.ndarray:
        """Map intrinsic coordinates (free axes) to points of ``M``."""
        w = np.asarray(w, dtype=float)
        free = self.free_indices(m)
        out = np.zeros(w.shape[:-1] + (m.dim,))
        out[..., list(free)] = w
        for j, v in zip(self.pinned_indices, self.pinned_values):
            out[..., j] = v
        return out

    def project(self, m: ManifoldModel, x) -> np.ndarray:
        """Nearest-point projection onto ``Z`` (flat metric)."""
        x = _as_coords(m, x).copy()
        for j, v in zip(self.pinned_indices, self.pinned_values):
            x[..., j] = v
        return x

    def grid(self, m: ManifoldModel, n_per_axis: int, offset: float = 0.0) -> np.ndarray:
        """Uniform grid of points on ``Z`` (``n_per_axis`` samples per circle)."""
        free = self.free_indices(m)
        axes = [(np.arange(n_per_axis) + offset) * m.periods[j] / n_per_axis for j in free]
        if not axes:
            return self.embed(m, np.zeros((1, 0)))
        mesh = np.meshgrid(*axes, indexing="ij")
        w = np.stack([g.ravel() for g in mesh], axis=-1)
        return self.embed(m, w)

    def to_dict(self) -> dict:
        return {"pinned": [{"index": j, "value": v}
                           for j, v in zip(self.pinned_indices, self.pinned_values)]}


def distance_to_Z(m: ManifoldModel, z: SubmanifoldSpec, x) -> np.ndarray | float:
    """Distance from ``x`` to the subtorus ``Z``."""
    z.validate(m)
    x = _as_coords(m, x)
    return distance(m, x, z.project(m, x))

"""Mod-2 Morse complexes on ``Z``, cuplength and the cap-product count at R = 0.

Morse functions on the subtorus ``Z`` are ``f(w) = sum_j cos(w_j - phi_j)``
in the free coordinates. Their critical points are labelled by a boolean
*signature*: ``S[j]`` is true when coordinate ``j`` sits at the maximum
``phi_j`` and false when it sits at ``phi_j + pi``. The Morse index is the
number of true entries. On ``M`` the function is extended by a positive
quadratic in the normal directions (``1 - cos`` on circle factors).

Stable and unstable manifolds are never written down. Membership is read
off the gradient flow: a point lies on ``W^s(x)`` when its forward flow
comes to ``x``, and the side it falls off on is recorded as a sign vector
that changes across ``W^s(x)``. :mod:`morse_cuplength.search` turns those
sign changes into isolated intersection points.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fields.analysis import critical_clusters
from .fields.field import ScalarFieldSpec, bind
from .geometry import ManifoldModel, SubmanifoldSpec, distance, normalize, wrapped_difference
from .problem import ProblemDef, Tolerances
from .search import Box, NonTransverseError, locate_zeros

log = logging.getLogger(__name__)

BASIN_TOL = 1e-4        # a flow limit this close to x counts as converging to x
APPROACH_TOL = 1e-2     # closest approach that confirms a sign change is a real crossing


class NotMorseError(ValueError):
    pass


# linear algebra over GF(2) ------------------------------------------------------

def gf2_rank(A) -> int:
    """Rank over the two-element field by Gaussian elimination."""
    M = (np.asarray(A, dtype=np.int64) % 2).astype(np.uint8)
    if M.size == 0:
        return 0
    rows, cols = M.shape
    rank = 0
    for c in range(cols):
        piv = np.flatnonzero(M[rank:, c])
        if piv.size == 0:
            continue
        pr = rank + piv[0]
        M[[rank, pr]] = M[[pr, rank]]
        below = np.flatnonzero(M[:, c])
        below = below[below != rank]
        M[below] ^= M[rank]
        rank += 1
        if rank == rows:
            break
    return rank


# Morse functions on Z ----------------------------------------------------------

@dataclass(frozen=True)
class ZMorseFunction:
    manifold: ManifoldModel
    Z: SubmanifoldSpec
    phases: tuple[float, ...]

    def __post_init__(self):
        if len(self.phases) != self.dim:
            raise ValueError(f"need {self.dim} phases, got {len(self.phases)}")
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    @property
    def dim(self) -> int:
        return self.Z.dim(self.manifold)

    @property
    def free(self) -> list[int]:
        return list(self.Z.free_indices(self.manifold))

    @classmethod
    def of(cls, p: ProblemDef, phases) -> "ZMorseFunction":
        return cls(p.manifold, p.Z, tuple(phases))

    def signatures(self, index: int | None = None) -> list[tuple[bool, ...]]:
        out = list(itertools.product((False, True), repeat=self.dim))
        out.sort(key=lambda s: (sum(s), s))
        return [s for s in out if index is None or sum(s) == index]

    def critical_point(self, S) -> np.ndarray:
        S = tuple(bool(v) for v in S)
        if len(S) != self.dim:
            raise ValueError("signature length must equal dim Z")
        w = [ph if s else ph + np.pi for ph, s in zip(self.phases, S)]
        return normalize(self.manifold, self.Z.embed(self.manifold, np.array(w)))

    @cached_property
    def _layout(self):
        m = self.manifold
        pinned = np.array(self.Z.pinned_indices, dtype=int)
        circ = np.array([m.is_toroidal(j) for j in pinned], dtype=bool)
        return (np.array(self.free, dtype=int), np.array(self.phases),
                pinned[circ], np.array(self.Z.pinned_values)[circ],
                pinned[~circ], np.array(self.Z.pinned_values)[~circ])

    def _parts(self, X, want_value=True, want_hess=True):
        X = np.asarray(X, dtype=float)
        free, ph, pc, vc, pe, ve = self._layout
        grad = np.empty_like(X)
        u = X[..., free] - ph
        grad[..., free] = -np.sin(u)
        yc = X[..., pc] - vc
        grad[..., pc] = np.sin(yc)
        ye = X[..., pe] - ve
        grad[..., pe] = ye
        val = hess = None
        if want_value:
            val = (np.cos(u).sum(-1) + (1.0 - np.cos(yc)).sum(-1)
                   + 0.5 * (ye * ye).sum(-1))
        if want_hess:
            hess = np.empty_like(X)
            hess[..., free] = -np.cos(u)
            hess[..., pc] = np.cos(yc)
            hess[..., pe] = 1.0
        return val, grad, hess

    def value(self, X):
        return self._parts(X)[0]

    def gradient(self, X):
        return self._parts(X, False, False)[1]

    def hessian(self, x) -> np.ndarray:
        return np.diag(self._parts(np.asarray(x, dtype=float))[2])

    def expression(self) -> str:
        """Source text of ``f`` in the intrinsic coordinates of ``Z``."""
        return " + ".join(f"cos(x{i} - {ph!r})" for i, ph in enumerate(self.phases))

    def on_Z(self) -> ScalarFieldSpec:
        return bind(self.expression(), self.Z.intrinsic_model(self.manifold))

    def to_dict(self) -> dict:
        return {"phases": list(self.phases)}


def random_phases(rng: np.random.Generator, count: int, dim: int, grid: int = 16,
                  margin: float = 0.2, tries: int = 10_000) -> np.ndarray:
    """``count x dim`` phases that keep catalog counts transverse.

    Per axis the phases are pairwise at least ``margin`` apart modulo ``pi``
    (so no two functions share a critical coordinate) and stay away from the
    lines of a ``grid``-cell search mesh.
    """
    cell = 2 * np.pi / grid
    for _ in range(tries):
        P = rng.uniform(0.0, 2 * np.pi, (count, dim))
        ok = True
        for j in range(dim):
            a = np.mod(P[:, j], np.pi)
            d = np.abs(a[:, None] - a[None, :])
            d = np.minimum(d, np.pi - d)
            if count > 1 and np.min(d[np.triu_indices(count, 1)]) < margin:
                ok = False
            r = np.mod(P[:, j], cell)
            if np.any(np.minimum(r, cell - r) < 0.05 * cell):
                ok = False
        if ok:
            return P
    raise RuntimeError("could not draw transverse phases")


def random_morse_functions(p: ProblemDef, count: int, rng) -> list[ZMorseFunction]:
    d = p.Z.dim(p.manifold)
    P = random_phases(rng, count, d, p.tolerances.search_grid)
    return [ZMorseFunction.of(p, row) for row in P]


# flows and membership ----------------------------------------------------------

@dataclass
class FlowEnd:
    limit: np.ndarray        # lifted limit, started at the lift nearest the target
    closest: np.ndarray      # closest approach to the target along the path
    converged: np.ndarray


def flow_from(f: ZMorseFunction, X, target, ascend: bool = False, dt: float = 0.1,
              t_max: float = 80.0, conv: float = 1e-10) -> FlowEnd:
    """RK4 flow of ``-grad f`` (``+grad f`` when ``ascend``) from each row of ``X``.

    Rows start at the lift nearest ``target`` and are not wrapped afterwards,
    so ``limit - target`` records which way each point left the target.
    """
    m = f.manifold
    X = np.atleast_2d(np.asarray(X, dtype=float))
    target = np.asarray(target, dtype=float)
    Y = target + wrapped_difference(m, X, target)
    sgn = 1.0 if ascend else -1.0
    per = m.period_vector
    circ = np.isfinite(per)

    def gap(y):
        d = y - target
        d[:, circ] -= per[circ] * np.round(d[:, circ] / per[circ])
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    grad = lambda y: sgn * f.gradient(y)
    closest = gap(Y)
    active = np.arange(len(Y))
    y = Y.copy()
    for _ in range(int(np.ceil(t_max / dt))):
        if active.size == 0:
            break
        k1 = grad(y)
        keep = np.einsum("ij,ij->i", k1, k1) >= conv * conv
        if not keep.all():
            Y[active[~keep]] = y[~keep]
            active, y, k1 = active[keep], y[keep], k1[keep]
            if active.size == 0:
                break
        k2 = grad(y + 0.5 * dt * k1)
        k3 = grad(y + 0.5 * dt * k2)
        k4 = grad(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        closest[active] = np.minimum(closest[active], gap(y))
    converged = np.ones(len(Y), dtype=bool)
    if active.size:
        Y[active] = y
        converged[active] = False
    return FlowEnd(Y, closest, converged)


@dataclass(frozen=True)
class Constraint:
    """``x in W^s(target, f)`` (kind "stable") or ``x in W^u(target, f)``."""

    f: ZMorseFunction
    signature: tuple[bool, ...]
    kind: str = "stable"

    def __post_init__(self):
        if self.kind not in ("stable", "unstable"):
            raise ValueError("kind must be 'stable' or 'unstable'")
        object.__setattr__(self, "signature", tuple(bool(s) for s in self.signature))

    @property
    def target(self) -> np.ndarray:
        return self.f.critical_point(self.signature)

    @property
    def index(self) -> int:
        return sum(self.signature)

    @property
    def codim(self) -> int:
        """Codimension in ``Z`` of the invariant manifold."""
        return self.index if self.kind == "stable" else self.f.dim - self.index

    def _directions(self) -> np.ndarray:
        # directions in which the relevant flow leaves the target along Z
        free = self.f.free
        H = self.f.hessian(self.target)[np.ix_(free, free)]
        ev, vec = np.linalg.eigh(H)
        pick = ev < 0 if self.kind == "stable" else ev > 0
        U = np.zeros((self.f.manifold.dim, int(pick.sum())))
        U[free] = vec[:, pick]
        return U

    def evaluate(self, X):
        """``(signs, closest, converged, limit)`` for points ``X`` of ``M``."""
        tgt = self.target
        end = flow_from(self.f, X, tgt, ascend=self.kind == "unstable")
        U = self._directions()
        proj = (end.limit - tgt) @ U
        signs = np.where(np.abs(proj) < 1e-12, 0, np.sign(proj)).astype(np.int8)
        return signs, end.closest, end.converged, end.limit

    def member(self, X) -> np.ndarray:
        """Pointwise membership: the flow approaches the target (closed test)."""
        _, closest, conv, lim = self.evaluate(X)
        if self.codim == 0:
            d = distance(self.f.manifold, normalize(self.f.manifold, lim), self.target)
            return conv & (np.atleast_1d(d) < BASIN_TOL)
        return closest < APPROACH_TOL

    def to_dict(self) -> dict:
        return {"phases": list(self.f.phases), "signature": [int(s) for s in self.signature],
                "kind": self.kind}


def sign_vector(constraints, points_for) -> tuple:
    """Concatenate signs of the positive-codimension constraints.

    ``points_for(i)`` gives the points at which constraint ``i`` is tested.
    """
    parts = [c.evaluate(points_for(i))[0] for i, c in enumerate(constraints) if c.codim > 0]
    n = len(points_for(0))
    return np.concatenate(parts, axis=1) if parts else np.zeros((n, 0), dtype=np.int8)


def intrinsic_box(m: ManifoldModel, Z: SubmanifoldSpec) -> Box:
    free = Z.free_indices(m)
    return Box(tuple(0.0 for _ in free), tuple(m.periods[j] for j in free),
               tuple(True for _ in free))


# Morse complex -----------------------------------------------------------------

@dataclass
class Generator:
    point: np.ndarray
    index: int
    value: float
    signature: tuple


@dataclass
class MorseComplexZ2:
    """Generators sorted by (index, coordinates); ``differential[q, p]`` counts ``p -> q``."""

    generators: list[Generator]
    differential: np.ndarray
    dim: int
    f: ZMorseFunction | None = None
    orbit_counts: dict = field(default_factory=dict)

    def by_index(self, i: int) -> list[int]:
        return [a for a, g in enumerate(self.generators) if g.index == i]

    def boundary_block(self, i: int) -> np.ndarray:
        """``d_i : C_i -> C_{i-1}`` as a matrix (rows index ``C_{i-1}``)."""
        return self.differential[np.ix_(self.by_index(i - 1), self.by_index(i))]

    def squares_to_zero(self) -> bool:
        D = self.differential.astype(np.int64)
        return not np.any((D @ D) % 2)

    def dump(self) -> str:
        lines = ["# generators: id index value coords"]
        for a, g in enumerate(self.generators):
            coords = " ".join(format(float(v), ".17g") for v in g.point)
            lines.append(f"{a} {g.index} {g.value:.17g} {coords}")
        lines.append("# differential (row-major, entry [q][p] = #orbits p->q mod 2)")
        for row in self.differential:
            lines.append("".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def betti(c: MorseComplexZ2) -> list[int]:
    """Mod-2 Betti numbers ``b_i = n_i - rank d_i - rank d_{i+1}``."""
    if not c.squares_to_zero():
        raise ValueError("differential does not square to zero")
    out = []
    for i in range(c.dim + 1):
        n = len(c.by_index(i))
        r_i = gf2_rank(c.boundary_block(i)) if i > 0 else 0
        r_next = gf2_rank(c.boundary_block(i + 1)) if i < c.dim else 0
        out.append(n - r_i - r_next)
    return out


def _sphere(angles: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates on ``S^m``; the last angle is periodic."""
    A = np.atleast_2d(angles)
    N, m = A.shape
    out = np.ones((N, m + 1))
    for j in range(m):
        out[:, j] *= np.cos(A[:, j])
        out[:, j + 1:] *= np.sin(A[:, j])[:, None]
    return out


def _random_rotation(rng, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def count_orbits(f: ZMorseFunction, S_from, S_to, rho: float = 1e-3,
                 tol: Tolerances | None = None, rng=None) -> int:
    """Number of flow lines of ``-grad f`` from ``x(S_from)`` to ``x(S_to)``.

    Rays leave ``x(S_from)`` from a sphere of radius ``rho`` in its unstable
    directions; the directions that reach ``x(S_to)`` are isolated points of
    that sphere, found by bisection in angle coordinates.
    """
    tol = tol or Tolerances()
    rng = rng if rng is not None else np.random.default_rng(0)
    i = sum(S_from)
    if sum(S_to) != i - 1:
        raise ValueError("orbits are counted between adjacent indices only")
    p = f.critical_point(S_from)
    free = f.free
    H = f.hessian(p)[np.ix_(free, free)]
    ev, vec = np.linalg.eigh(H)
    U = np.zeros((f.manifold.dim, i))
    U[free] = vec[:, ev < 0]
    target = Constraint(f, S_to, "stable")
    if i == 1:
        X = p + rho * np.stack([U[:, 0], -U[:, 0]])
        return int(np.count_nonzero(target.member(X)))
    Q = _random_rotation(rng, i)
    m = i - 1
    box = Box(tuple([0.0] * m), tuple([np.pi] * (m - 1) + [2 * np.pi]),
              tuple([False] * (m - 1) + [True]))

    def points(angles):
        return p + rho * (_sphere(angles) @ Q.T) @ U.T

    sols = locate_zeros(box, lambda a: target.evaluate(points(a))[0], tol.search_grid,
                        tol.search_min_width, accept=lambda a: target.member(points(a)))
    return len(sols)


def build_complex(f: ZMorseFunction, p: ProblemDef, rng=None) -> MorseComplexZ2:
    """Mod-2 Morse complex of ``f`` on ``Z``.

    Critical points come from multi-start Newton on ``Z`` (intrinsic model);
    each must be nondegenerate. Differential entries are orbit counts mod 2.
    """
    tol = p.tolerances
    d = f.dim
    fz = f.on_Z()
    clusters, _, _ = critical_clusters(fz, (tol.search_grid,) * d, tol)
    gens = []
    for c in clusters:
        if c.degenerate or c.continuum:
            raise NotMorseError(f"degenerate critical point of f at {c.representative.tolist()}")
        w = c.representative
        S = tuple(bool(abs(np.cos(w[j] - f.phases[j]) - 1.0) < 1e-6) for j in range(d))
        x = f.critical_point(S)
        if distance(p.manifold, x, p.Z.embed(p.manifold, w)) > 1e-8:
            raise NotMorseError("Newton root is not a catalog critical point")
        gens.append(Generator(x, int(c.morse_index), float(c.value), S))
    if len(gens) != 2 ** d:
        raise NotMorseError(f"found {len(gens)} critical points, expected {2 ** d}")
    gens.sort(key=lambda g: (g.index, tuple(np.round(g.point, 12))))
    n = len(gens)
    D = np.zeros((n, n), dtype=np.uint8)
    counts = {}
    for a, g in enumerate(gens):
        for b, h in enumerate(gens):
            if h.index == g.index - 1:
                cnt = count_orbits(f, g.signature, h.signature, tol=tol, rng=rng)
                counts[(a, b)] = cnt
                D[b, a] = cnt % 2
    return MorseComplexZ2(gens, D, d, f, counts)


def cuplength(Z: SubmanifoldSpec, m: ManifoldModel) -> int:
    """Cuplength of the subtorus ``Z``: ``dim Z`` (exterior algebra on degree-1 classes)."""
    Z.validate(m)
    return Z.dim(m)


def catalog_betti(d: int) -> list[int]:
    from math import comb
    return [comb(d, i) for i in range(d + 1)]


# the R = 0 count ---------------------------------------------------------------

@dataclass
class PairingResult:
    parity: int
    solutions: np.ndarray          # points of M
    expected_dim: int

    def to_dict(self) -> dict:
        return {"parity": self.parity, "count": int(len(self.solutions)),
                "solutions": [[float(v) for v in s] for s in self.solutions],
                "expected_dim": self.expected_dim}


def pairing_constraints(f_list, selection, f_star, star) -> list[Constraint]:
    cons = [Constraint(f, S, "stable") for f, S in zip(f_list, selection)]
    cons.append(Constraint(f_star, star[0], "unstable"))
    cons.append(Constraint(f_star, star[1], "stable"))
    return cons


def expected_dimension(d: int, constraints) -> int:
    return d - sum(c.codim for c in constraints)


def theta0_pairing(p: ProblemDef, f_list, selection, f_star: ZMorseFunction,
                   star=None) -> PairingResult:
    """Parity of ``W^s(x_1, f_1) ∩ ... ∩ W^s(x_k, f_k) ∩ W^u(x*-, f*) ∩ W^s(x*+, f*)``.

    ``selection[i]`` is the signature of ``x_i``; ``star = (S-, S+)`` names
    ``x*-`` and ``x*+`` and defaults to (maximum, minimum), i.e. pairing with
    the fundamental class and reading off the point class.
    """
    m, Z = p.manifold, p.Z
    d = Z.dim(m)
    if len(f_list) != len(selection):
        raise ValueError("one signature per Morse function")
    star = star or ((True,) * d, (False,) * d)
    cons = pairing_constraints(f_list, selection, f_star, star)
    edim = expected_dimension(d, cons)
    if edim > 0:
        raise ValueError(f"intersection has expected dimension {edim}; nothing to count")
    tol = p.tolerances

    def embed(w):
        return Z.embed(m, w)

    def sigma(w):
        X = embed(w)
        return sign_vector(cons, lambda i: X)

    def accept(w):
        X = embed(w)
        ok = np.ones(len(X), dtype=bool)
        for c in cons:
            ok &= c.member(X)
        return ok

    w = locate_zeros(intrinsic_box(m, Z), sigma, tol.search_grid, tol.search_min_width, accept)
    X = normalize(m, embed(w)) if len(w) else np.zeros((0, m.dim))
    return PairingResult(len(X) % 2, X, edim)


def random_pairing(p: ProblemDef, selection, rng, star=None, attempts: int = 8) -> PairingResult:
    """:func:`theta0_pairing` with random phases, redrawn on non-transverse draws."""
    for _ in range(attempts):
        fs = random_morse_functions(p, len(selection) + 1, rng)
        try:
            return theta0_pairing(p, fs[:-1], selection, fs[-1], star)
        except NonTransverseError as exc:
            log.info("re-randomizing phases: %s", exc)
    raise NonTransverseError("no transverse phase draw found")

"""Scalar fields bound to a manifold model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import ManifoldModel
from . import expr as _expr
from .dual import Dual2, DomainError


class FieldBindError(ValueError):
    """Expression is not a well-defined function on the manifold."""


@dataclass(frozen=True)
class ScalarFieldSpec:
    """An expression tree bound to a manifold.

    Evaluation works on a single point ``(n,)`` or on a batch ``(N, n)``.
    Derivatives come from one forward pass with :class:`Dual2` numbers.
    """

    source: str
    ast: _expr.Node
    manifold: ManifoldModel
    _fn: object = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_fn", _expr.compile_node(self.ast))

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def _run(self, X: np.ndarray, order: int):
        n = self.dim
        if order == 0:
            env = [X[:, i] for i in range(n)]
            out = self._fn(env)
            if isinstance(out, Dual2):
                out = out.v
            v = np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()
            if not np.all(np.isfinite(v)):
                raise DomainError("non-finite field value")
            return v, None, None
        env = [Dual2.variable(X[:, i], i, n, order) for i in range(n)]
        out = self._fn(env)
        N = X.shape[0]
        if not isinstance(out, Dual2):
            v = np.broadcast_to(np.asarray(out, dtype=float), (N,)).copy()
            return v, np.zeros((N, n)), (np.zeros((N, n, n)) if order >= 2 else None)
        v = np.broadcast_to(out.v, (N,)).copy()
        g = np.broadcast_to(out.g, (N, n)).copy()
        H = None
        if order >= 2:
            H = np.broadcast_to(out.H, (N, n, n)).copy()
            H = 0.5 * (H + np.swapaxes(H, 1, 2))
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(g))):
            raise DomainError("non-finite field value or gradient")
        return v, g, H

    def evaluate(self, x, order: int = 0):
        """Value (and gradient, Hessian when ``order`` is 1 or 2).

        Returns ``v`` for order 0, ``(v, g)`` for order 1 and ``(v, g, H)``
        for order 2, with the batch axis dropped for a single point.
        """
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {X.shape[1]}")
        v, g, H = self._run(X, order)
        if single:
            v = float(v[0])
            g = None if g is None else g[0]
            H = None if H is None else H[0]
        if order == 0:
            return v
        if order == 1:
            return v, g
        return v, g, H

    def value(self, x):
        return self.evaluate(x, 0)

    def gradient(self, x):
        return self.evaluate(x, 1)[1]

    def hessian(self, x):
        return self.evaluate(x, 2)[2]

    def combine(self, op: str, other: "ScalarFieldSpec") -> "ScalarFieldSpec":
        """``self op other`` as a new field, e.g. ``h.combine('-', F)``."""
        if other.manifold != self.manifold:
            raise ValueError("fields live on different manifolds")
        ast = _expr.BinOp(op, self.ast, other.ast)
        return ScalarFieldSpec(f"({self.source}) {op} ({other.source})", ast, self.manifold)

    def shifted(self, c: float) -> "ScalarFieldSpec":
        ast = _expr.BinOp("+", self.ast, _expr.Num(float(c)))
        return ScalarFieldSpec(f"({self.source}) + {float(c)!r}", ast, self.manifold)


def parse_expression(src: str) -> _expr.Node:
    """Parse expression text into an AST (unbound)."""
    return _expr.parse(src)


def bind(src_or_ast, manifold: ManifoldModel, check_samples: int = 257,
         seed: int = 0) -> ScalarFieldSpec:
    """Bind an expression to ``manifold`` and sanity-check it by sampling.

    Checks: variables within the dimension, finite values at random points,
    and periodicity in every toroidal coordinate.
    """
    if isinstance(src_or_ast, str):
        src, ast = src_or_ast, _expr.parse(src_or_ast)
    else:
        ast = src_or_ast
        src = _expr.to_source(ast)
    top = _expr.max_variable(ast)
    if top >= manifold.dim:
        raise FieldBindError(
            f"expression uses x{top} but the manifold has dimension {manifold.dim}")
    f = ScalarFieldSpec(src, ast, manifold)
    if check_samples:
        rng = np.random.default_rng(seed)
        X = _sample_box(manifold, rng, check_samples)
        try:
            v = f.evaluate(X, 1)[0]
        except DomainError as exc:
            raise FieldBindError(f"expression not defined on the manifold: {exc}") from exc
        for j, per in enumerate(manifold.periods):
            Y = X.copy()
            Y[:, j] += per
            w = f.evaluate(Y, 0)
            if np.max(np.abs(w - v)) > 1e-9 * max(1.0, np.max(np.abs(v))):
                raise FieldBindError(f"expression is not periodic in x{j}")
    return f


def _sample_box(m: ManifoldModel, rng, n: int, half_width: float = 4.0) -> np.ndarray:
    lo = np.array([0.0] * m.torus_dims + [-half_width] * m.euclidean_dims)
    hi = np.array(list(m.periods) + [half_width] * m.euclidean_dims)
    return lo + (hi - lo) * rng.random((n, m.dim))


def fd_check(f: ScalarFieldSpec, samples: int, seed: int = 0, step: float = 1e-5,
             half_width: float = 4.0) -> dict:
    """Worst relative error of AD derivatives against central differences.

    The gradient is compared with central differences of values and the
    Hessian with central differences of the AD gradient. Errors are
    ``|ad - fd|_inf / max(1, |fd|_inf)`` per point.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = _sample_box(f.manifold, rng, samples, half_width)
    _, g, H = f.evaluate(X, 2)
    n = f.dim
    g_fd = np.empty_like(g)
    H_fd = np.empty_like(H)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        vp, gp = f.evaluate(X + e, 1)
        vm, gm = f.evaluate(X - e, 1)
        g_fd[:, i] = (vp - vm) / (2 * step)
        H_fd[:, :, i] = (gp - gm) / (2 * step)
    ge = np.max(np.abs(g - g_fd), axis=1) / np.maximum(1.0, np.max(np.abs(g_fd), axis=1))
    He = (np.max(np.abs(H - H_fd), axis=(1, 2))
          / np.maximum(1.0, np.max(np.abs(H_fd), axis=(1, 2))))
    return {"gradient": float(ge.max()), "hessian": float(He.max()), "samples": samples}

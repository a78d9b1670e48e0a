"""Second-order forward-mode dual numbers over batches of points.

A :class:`Dual2` carries a value ``v`` of shape ``(N,)``, a gradient ``g`` of
shape ``(N, n)`` and optionally a Hessian ``H`` of shape ``(N, n, n)``.
Arithmetic propagates all three exactly (truncated Taylor arithmetic), so a
single pass over an expression tree yields value, gradient and Hessian.
"""

from __future__ import annotations

import numpy as np


class DomainError(ArithmeticError):
    """Expression evaluated outside its domain (e.g. division by zero)."""


class Dual2:
    __slots__ = ("v", "g", "H")
    # make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, v, g, H=None):
        self.v = v
        self.g = g
        self.H = H

    @classmethod
    def variable(cls, values: np.ndarray, index: int, n: int, order: int) -> "Dual2":
        N = values.shape[0]
        g = np.zeros((N, n))
        g[:, index] = 1.0
        H = np.zeros((N, n, n)) if order >= 2 else None
        return cls(values, g, H)

    def _lift(self, c) -> "Dual2":
        v = np.broadcast_to(np.asarray(c, dtype=float), self.v.shape)
        H = None if self.H is None else np.zeros_like(self.H)
        return Dual2(v, np.zeros_like(self.g), H)

    def _coerce(self, other) -> "Dual2":
        return other if isinstance(other, Dual2) else self._lift(other)

    def __add__(self, other):
        o = self._coerce(other)
        H = None if self.H is None else self.H + o.H
        return Dual2(self.v + o.v, self.g + o.g, H)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.v, -self.g, None if self.H is None else -self.H)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        a, b = self.v[:, None], o.v[:, None]
        g = a * o.g + b * self.g
        H = None
        if self.H is not None:
            outer = self.g[:, :, None] * o.g[:, None, :]
            H = (a[:, :, None] * o.H + b[:, :, None] * self.H
                 + outer + np.swapaxes(outer, 1, 2))
        return Dual2(self.v * o.v, g, H)

    __rmul__ = __mul__

    def reciprocal(self) -> "Dual2":
        if np.any(self.v == 0.0):
            raise DomainError("division by zero")
        inv = 1.0 / self.v
        return self._chain(inv, -inv * inv, 2.0 * inv ** 3)

    def __truediv__(self, other):
        return self * self._coerce(other).reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, n: int):
        n = int(n)
        if n == 0:
            return self._lift(1.0)
        if n < 0:
            return (self ** (-n)).reciprocal()
        v = self.v
        return self._chain(v ** n, n * v ** (n - 1),
                           n * (n - 1) * v ** (n - 2) if n >= 2 else np.zeros_like(v))

    def _chain(self, f0, f1, f2) -> "Dual2":
        """Compose with a scalar function given its value and derivatives."""
        g = f1[:, None] * self.g
        H = None
        if self.H is not None:
            H = (f1[:, None, None] * self.H
                 + f2[:, None, None] * self.g[:, :, None] * self.g[:, None, :])
        return Dual2(f0, g, H)


def sin(a):
    if isinstance(a, Dual2):
        s, c = np.sin(a.v), np.cos(a.v)
        return a._chain(s, c, -s)
    return np.sin(a)


def cos(a):
    if isinstance(a, Dual2):
        s, c = np.sin(a.v), np.cos(a.v)
        return a._chain(c, -s, -c)
    return np.cos(a)


def exp(a):
    if isinstance(a, Dual2):
        e = np.exp(a.v)
        return a._chain(e, e, e)
    return np.exp(a)

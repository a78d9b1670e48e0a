"""Bump family, homotopy functional and the continuation flow.

The flow is ``x' = -grad G(s, x)`` with ``G(s, x) = beta(s) h(x) + (1 - beta(s)) F(x)``.
Trajectories are integrated in batches with a Dormand-Prince 5(4) pair; every
row has its own step size, so a batch gives exactly the results of separate
runs. Two integrals ride along with the state::

    E(s) = int |grad G|^2        (energy)
    W(s) = int beta'(t) (h - F)  (work done by the homotopy)

so that ``E + G - W`` is constant along an exact solution. Its spread along a
computed trajectory is the energy-identity residual.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ManifoldModel, distance, distance_to_Z, normalize
from .problem import ProblemDef

log = logging.getLogger(__name__)

SMOOTHSTEP_MAX_SLOPE = 15.0 / 8.0


class IntegrationError(RuntimeError):
    """Step size underflow or runaway solution."""


class ActionEnergyError(ValueError):
    """The tube around ``Z`` contains another critical point of ``F``."""


class NoDecayError(ValueError):
    """A trajectory tail shows nothing to fit a decay rate to."""


# bump family -------------------------------------------------------------------

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    return np.minimum(v, 1.0), 30.0 * t * t * (1.0 - t) ** 2


@dataclass(frozen=True)
class BumpFamily:
    """``beta_r`` with ``k`` evaluation slots.

    Quintic smoothstep ramps rise on ``[-1, 0]`` and fall on
    ``[(k+1)r, (k+1)r + 1]``; the plateau height is ``min(r, 1)``. The ramps are
    C^2, which is all the integrator needs, and their slope never exceeds 15/8.
    """

    k: int
    r: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if not (self.r >= 0.0 and math.isfinite(self.r)):
            raise ValueError("r must be a finite nonnegative number")

    @property
    def height(self) -> float:
        return min(float(self.r), 1.0)

    @property
    def plateau_end(self) -> float:
        return (self.k + 1) * float(self.r)

    @property
    def window_end(self) -> float:
        """Past this time ``G = F`` and the flow is autonomous."""
        return self.plateau_end + 1.0

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({-1.0, 0.0, self.plateau_end, self.window_end}))

    def evaluation_times(self) -> tuple[float, ...]:
        return tuple(j * float(self.r) for j in range(1, self.k + 1))

    def __call__(self, s):
        """``(beta, beta')`` at ``s`` (scalar or array)."""
        s = np.asarray(s, dtype=float)
        up, dup = _smoothstep(s + 1.0)
        down, ddown = _smoothstep(self.window_end - s)
        a = self.height
        rising = s < 0.0
        value = a * np.where(rising, up, down)
        slope = a * np.where(rising, dup, -ddown)
        if value.ndim == 0:
            return float(value), float(slope)
        return value, slope

    def to_dict(self) -> dict:
        return {"k": int(self.k), "r": float(self.r)}


def beta(b: BumpFamily, s):
    return b(s)


def homotopy_field(p: ProblemDef, b: BumpFamily, s, x):
    """``G_{r,s}(x)`` and its spatial gradient.

    ``s`` may be a scalar or one time per row of a batch ``x``. The time
    derivative is ``beta'(s) * (h - F)(x)`` and is not returned.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    bv, _ = b(np.broadcast_to(np.asarray(s, dtype=float), (X.shape[0],)))
    hv, hg = p.h.evaluate(X, 1)
    fv, fg = p.F.evaluate(X, 1)
    G = bv * hv + (1.0 - bv) * fv
    dG = bv[:, None] * hg + (1.0 - bv)[:, None] * fg
    if single:
        return float(G[0]), dG[0]
    return G, dG


# trajectories ------------------------------------------------------------------

@dataclass
class Trajectory:
    """A sampled solution of the continuation flow.

    ``x`` holds the continuous lift (toroidal coordinates are not wrapped,
    so the path has no jumps); :attr:`points` gives normalized coordinates.
    ``energy_cum`` and ``work_cum`` are the running integrals of
    ``|grad G|^2`` and ``beta'(h - F)`` from the first sample.
    """

    manifold: ManifoldModel
    bump: BumpFamily
    s: np.ndarray
    x: np.ndarray
    F: np.ndarray
    G: np.ndarray
    grad_norm2: np.ndarray
    velocity: np.ndarray
    energy_cum: np.ndarray
    work_cum: np.ndarray
    converged: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.s)

    @property
    def points(self) -> np.ndarray:
        return normalize(self.manifold, self.x)

    @property
    def start(self) -> np.ndarray:
        return normalize(self.manifold, self.x[0])

    @property
    def end(self) -> np.ndarray:
        return normalize(self.manifold, self.x[-1])

    def at(self, t) -> np.ndarray:
        """Cubic Hermite interpolation of the lift at time(s) ``t``, normalized."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.s[0] - 1e-12) or np.any(t > self.s[-1] + 1e-12):
            raise ValueError(f"time outside trajectory domain [{self.s[0]}, {self.s[-1]}]")
        tt = np.atleast_1d(t)
        i = np.clip(np.searchsorted(self.s, tt, side="right") - 1, 0, len(self.s) - 2)
        h = self.s[i + 1] - self.s[i]
        u = ((tt - self.s[i]) / h)[:, None]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        out = (h00 * self.x[i] + h10 * h[:, None] * self.velocity[i]
               + h01 * self.x[i + 1] + h11 * h[:, None] * self.velocity[i + 1])
        out = normalize(self.manifold, out)
        return out[0] if t.ndim == 0 else out

    def window(self, a: float, b: float) -> np.ndarray:
        """Indices of samples with ``a <= s <= b``."""
        return np.flatnonzero((self.s >= a) & (self.s <= b))

    def with_constant_prefix(self, s_start: float) -> "Trajectory":
        """Prepend a sample at ``s_start`` equal to the first one.

        Only valid when the solution is stationary before the first sample,
        e.g. a trajectory resting on ``Z`` before the homotopy switches on.
        """
        if s_start >= self.s[0]:
            return self
        cat = lambda a: np.concatenate([a[:1], a])
        return replace(self, s=np.concatenate([[s_start], self.s]), x=cat(self.x),
                       F=cat(self.F), G=cat(self.G), grad_norm2=cat(self.grad_norm2),
                       velocity=cat(self.velocity), energy_cum=cat(self.energy_cum),
                       work_cum=cat(self.work_cum))


# Dormand-Prince 5(4) -------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_EC = _B5 - _B4


def _rhs(p: ProblemDef, b: BumpFamily, s: np.ndarray, Y: np.ndarray):
    n = p.manifold.dim
    X = Y[:, :n]
    bv, bd = b(s)
    hv, hg = p.h.evaluate(X, 1)
    fv, fg = p.F.evaluate(X, 1)
    grad = bv[:, None] * hg + (1.0 - bv)[:, None] * fg
    gn2 = np.einsum("ij,ij->i", grad, grad)
    dY = np.empty_like(Y)
    dY[:, :n] = -grad
    dY[:, n] = gn2
    dY[:, n + 1] = bd * (hv - fv)
    G = bv * hv + (1.0 - bv) * fv
    return dY, fv, G, gn2


def tail_horizon(p: ProblemDef) -> float:
    """``T = 40 / lambda_min`` with ``lambda_min`` the smallest transverse eigenvalue."""
    from .fields.analysis import morse_bott_verify
    lam = morse_bott_verify(p).min_transverse
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError("no positive transverse Hessian eigenvalue along Z")
    return 40.0 / lam


def integrate_batch(p: ProblemDef, b: BumpFamily, X0, s0: float, s1: float, *,
                    rtol: float | None = None, atol: float | None = None,
                    max_step: float = 0.5, stop_on_converge: bool = True,
                    extra_breakpoints=(), max_steps: int = 200_000) -> list[Trajectory]:
    """Integrate the continuation flow from every row of ``X0`` over ``[s0, s1]``.

    Steps never straddle the kinks of ``beta`` nor the times in
    ``extra_breakpoints`` (samples land on them exactly). Past the end of the
    homotopy window a row stops early, flagged converged, once
    ``|grad G| < converge_grad`` has held for ``converge_steps`` accepted steps.
    """
    if not s1 > s0:
        raise ValueError("need s0 < s1")
    tol = p.tolerances
    rtol = tol.integrator_rtol if rtol is None else rtol
    atol = rtol if atol is None else atol
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    N, n = X0.shape
    bps = np.array(sorted({float(t) for t in (*b.breakpoints, *extra_breakpoints, s1)
                           if s0 < t <= s1}))
    Y = np.zeros((N, n + 2))
    Y[:, :n] = X0
    s = np.full(N, float(s0))
    K1, Fv, Gv, gn2 = _rhs(p, b, s, Y)
    h = np.full(N, min(max_step, 1e-2))
    active = np.ones(N, dtype=bool)
    converged = np.zeros(N, dtype=bool)
    streak = np.zeros(N, dtype=int)
    conv2 = tol.converge_grad ** 2
    rec = [(np.arange(N), s.copy(), Y.copy(), K1.copy(), Fv, Gv, gn2)]
    steps = 0
    while active.any():
        steps += 1
        if steps > max_steps:
            raise IntegrationError("step budget exhausted")
        idx = np.flatnonzero(active)
        si, yi, k1 = s[idx], Y[idx], K1[idx]
        nxt = bps[np.minimum(np.searchsorted(bps, si + 1e-13 * (1 + np.abs(si)), side="right"),
                             len(bps) - 1)]
        hh = np.minimum(np.minimum(h[idx], max_step), nxt - si)
        if np.any(hh <= 1e-13 * (1.0 + np.abs(si))):
            raise IntegrationError(f"step size underflow near s = {si[np.argmin(hh)]:.6g}")
        K = [k1]
        for st in range(1, 7):
            inc = sum(a * K[j] for j, a in enumerate(_A[st]) if a != 0.0)
            dY, f_, g_, n2 = _rhs(p, b, si + _C[st] * hh, yi + hh[:, None] * inc)
            K.append(dY)
        ynew = yi + hh[:, None] * sum(c * K[j] for j, c in enumerate(_B5) if c != 0.0)
        errv = hh[:, None] * sum(c * K[j] for j, c in enumerate(_EC) if c != 0.0)
        scale = atol + rtol * np.maximum(np.abs(yi), np.abs(ynew))
        err = np.sqrt(np.mean((errv / scale) ** 2, axis=1))
        if not np.all(np.isfinite(ynew)):
            raise IntegrationError("non-finite state")
        ok = err <= 1.0
        fac = np.where(err == 0.0, 5.0, np.clip(0.9 * np.maximum(err, 1e-300) ** -0.2, 0.2, 5.0))
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        # a step shortened to hit a breakpoint says nothing about the natural step
        h[idx] = np.where(ok & (hh < h[idx]), np.maximum(h[idx], hh * fac), hh * fac)
        acc = idx[ok]
        if acc.size:
            s[acc] = si[ok] + hh[ok]
            hit = np.abs(s[acc] - nxt[ok]) <= 1e-12 * (1 + np.abs(nxt[ok]))
            s[acc[hit]] = nxt[ok][hit]
            Y[acc] = ynew[ok]
            K1[acc] = K[6][ok]
            rec.append((acc, s[acc].copy(), Y[acc].copy(), K1[acc].copy(),
                        f_[ok], g_[ok], n2[ok]))
            calm = (s[acc] >= b.window_end) & (n2[ok] < conv2)
            streak[acc] = np.where(calm, streak[acc] + 1, 0)
            if stop_on_converge:
                done_c = streak[acc] >= tol.converge_steps
                converged[acc[done_c]] = True
                active[acc[done_c]] = False
            active[acc[s[acc] >= s1]] = False
    ids = np.concatenate([r[0] for r in rec])
    order = np.argsort(ids, kind="stable")
    cols = [np.concatenate([r[c] for r in rec])[order] for c in range(1, 7)]
    ids = ids[order]
    bounds = np.searchsorted(ids, np.arange(N + 1))
    out = []
    for i in range(N):
        sl = slice(bounds[i], bounds[i + 1])
        S, YY, KK, FF, GG, NN = (c[sl] for c in cols)
        out.append(Trajectory(p.manifold, b, S, YY[:, :n], FF, GG, NN, KK[:, :n],
                              YY[:, n] - YY[0, n], YY[:, n + 1] - YY[0, n + 1],
                              converged=bool(converged[i])))
    return out


def integrate(p: ProblemDef, b: BumpFamily, x0, s0: float, s1: float, **kw) -> Trajectory:
    """Single-trajectory form of :func:`integrate_batch`."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.manifold.dim,):
        raise ValueError(f"x0 must have {p.manifold.dim} coordinates")
    return integrate_batch(p, b, x0[None], s0, s1, **kw)[0]


def pure_F_flow(p: ProblemDef):
    """A bump family that is identically zero: the flow of ``F`` alone."""
    return BumpFamily(1, 0.0)


# diagnostics -------------------------------------------------------------------

def energy(t: Trajectory) -> float:
    """``int |gamma'|^2 ds``, using ``gamma' = -grad G``."""
    if len(t) < 2:
        raise ValueError("trajectory needs at least two samples")
    return float(t.energy_cum[-1] - t.energy_cum[0])


def energy_identity_residual(t: Trajectory) -> float:
    """Worst violation of ``E[a,b] = G_a - G_b + W[a,b]`` over sample pairs.

    With ``R = E + G - W`` at each sample the violation on ``[a, b]`` is
    ``R_b - R_a``, so the worst over all pairs is the spread of ``R``.
    """
    R = t.energy_cum + t.G - t.work_cum
    return float(R.max() - R.min())


@dataclass
class WindowReport:
    max_abs_G: float
    max_abs_F: float
    energy: float
    bound: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"max_abs_G": self.max_abs_G, "max_abs_F": self.max_abs_F,
                "energy": self.energy, "bound": self.bound,
                "violations": [list(v) for v in self.violations]}


def window_diagnostics(p: ProblemDef, t: Trajectory, norm: float | None = None,
                       tol: float | None = None) -> WindowReport:
    """Compare ``|G|``, ``|F|`` and ``E`` along ``t`` with ``||h - F||``.

    Violations are ``(s, quantity, excess)`` triples; the energy entry uses
    the final sample time.
    """
    from .fields.analysis import oscillation
    if norm is None:
        norm = oscillation(p.difference, p.tolerances.oscillation_grid,
                           p.tolerances.euclidean_half_width).value
    tol = p.tolerances.diagnostic_tol if tol is None else tol
    aG, aF = np.abs(t.G), np.abs(t.F)
    E = energy(t) if len(t) > 1 else 0.0
    viol = []
    for name, arr in (("G", aG), ("F", aF)):
        for i in np.flatnonzero(arr > norm + tol):
            viol.append((float(t.s[i]), name, float(arr[i] - norm)))
    if E > norm + tol:
        viol.append((float(t.s[-1]), "E", float(E - norm)))
    return WindowReport(float(aG.max()), float(aF.max()), float(E), float(norm), viol)


def action_energy_constant(p: ProblemDef, tube_radius: float, radial: int = 2001,
                           along: int = 16, directions: int = 64) -> float:
    """Largest ``|F| / |grad F|^2`` over a dense sample of the tube around ``Z``.

    Points closer than ``1e-6`` to ``Z`` are skipped (the ratio is 0/0 there).
    """
    if not tube_radius > 0:
        raise ValueError("tube_radius must be positive")
    m, Z = p.manifold, p.Z
    base = Z.grid(m, along, offset=0.25)
    pinned = list(Z.pinned_indices)
    c = len(pinned)
    radii = np.linspace(0.0, tube_radius, radial)[1:]
    if c == 1:
        normals = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(0)
        normals = rng.standard_normal((directions, c))
        normals = np.vstack([np.eye(c), -np.eye(c), normals])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offs = (radii[:, None, None] * normals[None]).reshape(-1, c)
    X = np.repeat(base, len(offs), axis=0)
    X[:, pinned] += np.tile(offs, (len(base), 1))
    X = X[distance_to_Z(m, Z, X) >= 1e-6]
    v, g = p.F.evaluate(X, 1)
    e = np.einsum("ij,ij->i", g, g)
    bad = e < 1e-12 * np.maximum(1.0, np.abs(v))
    if np.any(bad & (np.abs(v) > 1e-12)):
        i = int(np.flatnonzero(bad)[0])
        raise ActionEnergyError(
            f"critical point of F inside the tube near x = {normalize(m, X[i]).tolist()}")
    return float(np.max(np.abs(v[~bad]) / e[~bad]))


@dataclass
class RateFit:
    rate: float
    predicted: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {"rate": self.rate, "predicted": self.predicted,
                "samples": self.samples, "passed": self.passed}


def exponential_rate(p: ProblemDef, t: Trajectory, tube_radius: float,
                     C: float | None = None, floor: float = 1e-8,
                     slack: float = 1e-3) -> RateFit:
    """Fit ``d(gamma(s), z+) ~ A exp(-B s)`` on the tail inside the tube.

    The tail is the autonomous part of ``t`` within ``tube_radius`` of ``Z``;
    distances under ``floor`` are dropped since the last sample only
    approximates the limit ``z+``. ``predicted`` is ``1 / (2 sqrt(C))``.
    """
    if C is None:
        C = action_energy_constant(p, tube_radius)
    lim = t.x[-1]
    tail = t.s >= t.bump.window_end
    X = t.x[tail]
    d_lim = distance(p.manifold, X, lim)
    inside = distance_to_Z(p.manifold, p.Z, X) <= tube_radius
    use = inside & (d_lim > floor)
    if np.max(d_lim, initial=0.0) <= floor:
        raise NoDecayError("no decay: trajectory tail is constant")
    if np.count_nonzero(use) < 4:
        raise NoDecayError("tail too short to fit a decay rate")
    S = t.s[tail][use]
    slope, _ = np.polyfit(S, np.log(d_lim[use]), 1)
    B = float(-slope)
    pred = 1.0 / (2.0 * math.sqrt(C))
    return RateFit(B, pred, int(np.count_nonzero(use)), B >= pred - slack)


# output ------------------------------------------------------------------------

def write_csv(t: Trajectory, fh) -> None:
    """One row per accepted step: ``s, x0..xn, F, G, grad_norm2``."""
    n = t.manifold.dim
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["s", *[f"x{i}" for i in range(n)], "F", "G", "grad_norm2"])
    P = t.points
    for i in range(len(t)):
        row = [t.s[i], *P[i], t.F[i], t.G[i], t.grad_norm2[i]]
        w.writerow([format(float(v), ".17g") for v in row])

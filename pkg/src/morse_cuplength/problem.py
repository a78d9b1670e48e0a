"""Problem definitions: the manifold, ``Z``, ``F``, ``h`` and tolerances.

Problems are usually loaded from JSON documents of the form::

    {"manifold": {"torus_dims": 2, "euclidean_dims": 0, "periods": [6.283, 6.283]},
     "Z": {"pinned": [{"index": 1, "value": 0.0}]},
     "F": "1 - cos(x1)",
     "h": "1 - cos(x1) + eps*cos(x0)",
     "params": {"eps": 0.1},
     "tolerances": {"integrator_rtol": 1e-10},
     "seed_grid": [64, 64]}

``params`` are literal constants substituted into ``F`` and ``h`` before
parsing; they exist so that a command line override such as ``eps=1.5`` can
change the perturbation size without editing expressions.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .geometry import ManifoldModel, SubmanifoldSpec
from .fields.field import ScalarFieldSpec, bind


class ProblemError(ValueError):
    """Malformed problem document (schema or expression problem)."""


class ProblemInvariantError(ProblemError):
    """``F`` does not vanish on ``Z`` or ``Z`` is not critical for ``F``."""


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by all computations."""

    value_tol: float = 1e-9           # |F| on Z
    gradient_tol: float = 1e-9        # |grad| accepted as critical
    newton_tol: float = 1e-12         # Newton stopping residual
    newton_max_iter: int = 80
    cluster_radius: float = 1e-4      # merge radius for Newton roots
    degeneracy_tol: float = 1e-6      # |eigenvalue| below this is kernel
    z_tol: float = 1e-6               # distance_to_Z counted as "on Z"
    window_slack: float = 1e-9        # closed critical-value window slack
    diagnostic_tol: float = 1e-6      # lemma bound violations
    integrator_rtol: float = 1e-10
    converge_grad: float = 1e-10      # flow convergence threshold
    converge_steps: int = 5
    label_rtol: float = 1e-9          # integrator tolerance for basin labels
    euclidean_half_width: float = 4.0  # seed/search box on Euclidean axes
    oscillation_grid: int = 64
    search_grid: int = 16             # coarse grid per axis for intersection search
    search_min_width: float = 1e-7    # bisection stops at this cell width

    @classmethod
    def from_dict(cls, d: dict) -> "Tolerances":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, val in d.items():
            if key not in known:
                raise ProblemError(f"unknown tolerance key {key!r}")
            default = getattr(cls, key)
            try:
                kwargs[key] = int(val) if isinstance(default, int) else float(val)
            except (TypeError, ValueError) as exc:
                raise ProblemError(f"tolerance {key!r} must be numeric") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ProblemDef:
    """The data ``(M, Z, F, h)`` of a perturbation problem."""

    manifold: ManifoldModel
    Z: SubmanifoldSpec
    F: ScalarFieldSpec
    h: ScalarFieldSpec
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed_grid: tuple[int, ...] = ()
    name: str = ""
    params: dict = field(default_factory=dict, compare=False)
    sources: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = self.manifold
        grid = tuple(int(c) for c in self.seed_grid) or tuple(
            64 if m.dim <= 2 else 16 for _ in range(m.dim))
        if len(grid) != m.dim or any(c < 2 for c in grid):
            raise ProblemError("seed_grid needs one count >= 2 per coordinate")
        object.__setattr__(self, "seed_grid", grid)
        self.Z.validate(m)

    @property
    def difference(self) -> ScalarFieldSpec:
        """``h - F`` as a field."""
        return self.h.combine("-", self.F)

    def check_invariants(self, samples_per_axis: int = 16) -> None:
        """Raise :class:`ProblemInvariantError` unless ``F|_Z = 0`` and ``dF|_Z = 0``."""
        tol = self.tolerances
        zs = self.Z.grid(self.manifold, samples_per_axis, offset=0.25)
        v, g = self.F.evaluate(zs, 1)
        i = int(np.argmax(np.abs(v)))
        if abs(v[i]) > tol.value_tol:
            raise ProblemInvariantError(
                f"F|_Z = {v[i]:.6g} != 0 at sample z = {zs[i].tolist()}")
        gn = np.linalg.norm(g, axis=1)
        i = int(np.argmax(gn))
        if gn[i] > tol.gradient_tol:
            raise ProblemInvariantError(
                f"Z not critical for F: |grad F| = {gn[i]:.3g} at z = {zs[i].tolist()}")

    def with_h(self, h_src: str) -> "ProblemDef":
        return replace(self, h=bind(h_src, self.manifold),
                       sources={**self.sources, "h": h_src})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "manifold": self.manifold.to_dict(),
            "Z": self.Z.to_dict(),
            "F": self.sources.get("F", self.F.source),
            "h": self.sources.get("h", self.h.source),
            "params": dict(self.params),
            "tolerances": self.tolerances.to_dict(),
            "seed_grid": list(self.seed_grid),
        }


_PARAM = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")


def substitute_params(src: str, params: dict) -> str:
    """Replace whole-word parameter names by parenthesized literals."""
    for name, val in params.items():
        src = re.sub(rf"\b{re.escape(name)}\b", f"({float(val)!r})", src)
    return src


def _require(d: dict, key: str, kind, where: str):
    if key not in d:
        raise ProblemError(f"missing key {key!r} in {where}")
    val = d[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise ProblemError(f"{where}.{key} must be {kind.__name__}")
    return val


def problem_from_dict(doc: dict, overrides: dict | None = None,
                      check: bool = True) -> ProblemDef:
    """Validate a decoded problem document and build a :class:`ProblemDef`.

    ``overrides`` maps keys to strings or numbers: ``F``/``h`` replace the
    expressions, ``seed_grid`` a comma list, tolerance names their value,
    anything else is treated as an expression parameter.
    """
    if not isinstance(doc, dict):
        raise ProblemError("problem document must be a JSON object")
    overrides = dict(overrides or {})
    man = _require(doc, "manifold", dict, "problem")
    p = _require(man, "torus_dims", int, "manifold")
    q = man.get("euclidean_dims", 0)
    if not isinstance(q, int) or isinstance(q, bool):
        raise ProblemError("manifold.euclidean_dims must be int")
    periods = man.get("periods", [2 * np.pi] * p)
    if not isinstance(periods, list) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) for t in periods):
        raise ProblemError("manifold.periods must be a list of numbers")
    try:
        manifold = ManifoldModel(p, q, tuple(float(t) for t in periods))
    except ValueError as exc:
        raise ProblemError(f"invalid manifold: {exc}") from exc

    zdoc = _require(doc, "Z", dict, "problem")
    pinned = _require(zdoc, "pinned", list, "Z")
    idx, vals = [], []
    for k, entry in enumerate(pinned):
        if not isinstance(entry, dict):
            raise ProblemError(f"Z.pinned[{k}] must be an object")
        idx.append(_require(entry, "index", int, f"Z.pinned[{k}]"))
        v = entry.get("value", 0.0)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ProblemError(f"Z.pinned[{k}].value must be a number")
        vals.append(float(v))
    try:
        Z = SubmanifoldSpec(tuple(idx), tuple(vals))
        Z.validate(manifold)
    except ValueError as exc:
        raise ProblemError(f"invalid Z: {exc}") from exc

    tol_doc = dict(doc.get("tolerances", {}) or {})
    if not isinstance(tol_doc, dict):
        raise ProblemError("tolerances must be an object")
    params = dict(doc.get("params", {}) or {})
    for name, val in params.items():
        if not _PARAM.match(name) or not isinstance(val, (int, float)):
            raise ProblemError(f"invalid parameter {name!r}")
    seed_grid = doc.get("seed_grid", [])
    F_src = _require(doc, "F", str, "problem")
    h_src = _require(doc, "h", str, "problem")

    tol_names = {f.name for f in fields(Tolerances)}
    for key, val in overrides.items():
        if key == "F":
            F_src = str(val)
        elif key == "h":
            h_src = str(val)
        elif key == "seed_grid":
            seed_grid = [int(c) for c in str(val).split(",")]
        elif key in tol_names:
            tol_doc[key] = val
        else:
            try:
                params[key] = float(val)
            except ValueError as exc:
                raise ProblemError(f"override {key}={val!r} is not numeric") from exc
    if not isinstance(seed_grid, list) or not all(isinstance(c, int) for c in seed_grid):
        raise ProblemError("seed_grid must be a list of integers")

    tolerances = Tolerances.from_dict(tol_doc)
    F_text, h_text = substitute_params(F_src, params), substitute_params(h_src, params)
    try:
        F = bind(F_text, manifold)
        h = bind(h_text, manifold)
    except ValueError as exc:
        raise ProblemError(f"invalid expression: {exc}") from exc
    prob = ProblemDef(manifold, Z, F, h, tolerances, tuple(seed_grid),
                      name=str(doc.get("name", "")), params=params,
                      sources={"F": F_src, "h": h_src})
    if check:
        prob.check_invariants()
    return prob


def parse_problem(text: str, overrides: dict | None = None) -> ProblemDef:
    """Parse a JSON problem document, checking ``F|_Z = 0`` and ``Z ⊂ Crit F``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"not valid JSON: {exc}") from exc
    return problem_from_dict(doc, overrides)

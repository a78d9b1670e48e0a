"""Catalog problems P1 (T^2, Z = S^1), P2 (T^3, Z = T^2) and P3 (T^1 x R, Z = S^1)."""

from __future__ import annotations

from importlib import resources

from ..problem import ProblemDef, parse_problem

NAMES = ("P1", "P2", "P3")


def document(name: str) -> str:
    """Raw JSON text of a catalog problem."""
    if name not in NAMES:
        raise KeyError(f"unknown catalog problem {name!r}; choose from {NAMES}")
    return resources.files(__package__).joinpath(f"{name}.json").read_text()


def load(name: str, **overrides) -> ProblemDef:
    """Load a catalog problem, e.g. ``load("P1", eps=1.5)``."""
    return parse_problem(document(name), overrides)

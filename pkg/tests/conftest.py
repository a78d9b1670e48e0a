import functools
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from morse_cuplength import catalog
from morse_cuplength.problem import parse_problem

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def P1():
    return catalog.load("P1")


@pytest.fixture(scope="session")
def P2():
    return catalog.load("P2")


@pytest.fixture(scope="session")
def P3():
    return catalog.load("P3")


def torus_problem(d):
    """Z = T^d inside T^(d+1), used for the topology of S^1, T^2, T^3."""
    doc = {"manifold": {"torus_dims": d + 1, "euclidean_dims": 0},
           "Z": {"pinned": [{"index": d, "value": 0.0}]},
           "F": f"1 - cos(x{d})", "h": f"1 - cos(x{d})", "seed_grid": [8] * (d + 1)}
    return parse_problem(json.dumps(doc))


@pytest.fixture(scope="session")
def S1():
    return torus_problem(1)


@pytest.fixture(scope="session")
def T2():
    return torus_problem(2)


@pytest.fixture(scope="session")
def T3():
    return torus_problem(3)


@functools.lru_cache(maxsize=None)
def p1_breaking_chain():
    """One breaking chain on P1 (k = 1, r = 4, 8, 16, 32), computed once per session."""
    from morse_cuplength.moduli import breaking_analysis
    from morse_cuplength.topology import Constraint, random_morse_functions

    p = catalog.load("P1")
    f1, fstar = random_morse_functions(p, 2, np.random.default_rng(7))
    return breaking_analysis(p, 1, [4, 8, 16, 32], [Constraint(f1, (True,))], fstar)


@pytest.fixture(scope="session")
def p1_chain():
    return p1_breaking_chain()

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

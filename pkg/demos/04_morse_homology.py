# Mod-2 Morse homology of tori and the product that gives the cuplength.

import itertools
import json

import numpy as np

from morse_cuplength.problem import parse_problem
from morse_cuplength.topology import (betti, build_complex, random_morse_functions,
                                      theta0_pairing)


def torus(d):
    doc = {"manifold": {"torus_dims": d + 1}, "Z": {"pinned": [{"index": d}]},
           "F": f"1 - cos(x{d})", "h": f"1 - cos(x{d})", "seed_grid": [8] * (d + 1)}
    return parse_problem(json.dumps(doc))


rng = np.random.default_rng(0)

# %% complexes and Betti numbers
for d in (1, 2, 3):
    p = torus(d)
    f = random_morse_functions(p, 1, rng)[0]
    cx = build_complex(f, p, rng=rng)
    print(f"T^{d}: {len(cx.generators)} generators, d^2 = 0: {cx.squares_to_zero()}, "
          f"Betti {betti(cx)}")
    if d == 2:
        print(cx.dump())

# %% pairings on T^2: products of degree-one classes
p = torus(2)
e0, e1 = (True, False), (False, True)
for sel in itertools.product([e0, e1], repeat=2):
    fs = random_morse_functions(p, 3, rng)
    par = theta0_pairing(p, fs[:2], list(sel), fs[2]).parity
    print([("a", "b")[s[1]] for s in sel], "->", par)

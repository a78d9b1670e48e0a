# Constrained counts and the breaking chain on P1.
#
# Fix a random Morse function f1 on Z = S^1 and ask gamma(r) to lie on the
# stable manifold of its maximum. The count of such solutions is odd for
# every r. As r grows the witness splits into pieces of h-flow lines whose
# ends approach critical points of h.

import numpy as np

from morse_cuplength import catalog
from morse_cuplength.flow import BumpFamily
from morse_cuplength.moduli import breaking_analysis, constrained_count
from morse_cuplength.topology import Constraint, random_morse_functions

p = catalog.load("P1")
rng = np.random.default_rng(7)
f1, fstar = random_morse_functions(p, 2, rng)
cons = [Constraint(f1, (True,))]
print("f1 phase", f1.phases, " f* phase", fstar.phases)

# %% parity at a few radii
for r in (0.5, 1.0, 4.0):
    res = constrained_count(p, BumpFamily(1, r), cons, fstar)
    print(f"r = {r:4}: {len(res.witnesses)} solution(s), parity {res.parity}, "
          f"z0 = {np.round(res.witnesses[:, 0], 6)}")

# %% two constraints on a circle: the count is even
two = random_morse_functions(p, 2, rng)
res = constrained_count(p, BumpFamily(2, 1.0), [Constraint(f, (True,)) for f in two], fstar)
print("k = 2:", res.parity)

# %% the chain
chain = breaking_analysis(p, 1, [4, 8, 16, 32], cons, fstar)
print("\n    r    h(y0+)   h(y1-)   h(y1+)   h(y2-)   dist(y0+)  dist(y2-)")
for c in chain.chains:
    h = [q.h_value for q in c.points]
    print(f"{c.r:5g} " + " ".join(f"{v:+.4f} " for v in h)
          + f"  {c.points[0].critical_distance:.2e}   {c.points[-1].critical_distance:.2e}")

# The distances shrink by about exp(-0.1 * 16) from r = 16 to r = 32: the
# eigenvalue of h along Z is 0.1, so the pieces approach the critical points
# slowly. The inner points y1- and y1+ are read off next to gamma(r), which the
# constraint holds at the phase of f1, so they lag further behind.
d = [c.points[0].critical_distance for c in chain.chains]
print("\nratio r=16 -> 32:", d[-1] / d[-2], " exp(-1.6) =", np.exp(-1.6))

# Counting critical points of a perturbed Morse-Bott function.
#
# F = 1 - cos(x1) on the 2-torus vanishes on the circle Z = {x1 = 0}. Adding
# eps*cos(x0) breaks the circle into isolated critical points, and as long as
# the perturbation is small compared with the spectral gap at least
# cuplength(Z) + 1 = 2 of them have values in [-|h-F|, |h-F|].

import numpy as np

from morse_cuplength import catalog
from morse_cuplength.critical import verify_cuplength_bound

# %% the basic check on the three catalog problems
for name in catalog.NAMES:
    rep = verify_cuplength_bound(catalog.load(name))
    print(f"{name}: |h-F| = {rep.norm_hF:.3g}  gap = {rep.gap}  "
          f"need {rep.required}, found {rep.found_in_window} -> {rep.verdict}")

# %% where are the points?
rep = verify_cuplength_bound(catalog.load("P1"))
for i, c in enumerate(rep.critical_points):
    mark = "*" if i in rep.in_window else " "
    print(f" {mark} x = {np.round(c.location, 6)}  h = {c.value:+.3f}  index {c.morse_index}")

# %% sweep eps: the theorem only speaks while 2*eps < 2
print("\n eps   |h-F|  verdict              in window")
for eps in (0.05, 0.3, 0.9, 0.99, 1.0, 1.5):
    rep = verify_cuplength_bound(catalog.load("P1", eps=eps))
    print(f"{eps:5.2f} {rep.norm_hF:6.2f}  {rep.verdict:20s} {rep.found_in_window}")

# %% P3 attains the bound exactly: two points, both needed
rep = verify_cuplength_bound(catalog.load("P3"))
print("\nP3 tightness:", rep.found_in_window, "found,", rep.required, "required")

"""
Percolation on the lattice and in the continuum
===============================================

theta is estimated by a finite-box proxy: the chance that the centre of an
L x L box is joined to the box surface.  With shared uniforms the open
subgraph only grows with p, so the estimate is monotone trial by trial.
"""

import math

import numpy as np

from gibbsperc import Boolean, Window, estimate_theta_continuum, estimate_theta_lattice

rng = np.random.default_rng(3)
for p in (0.3, 0.5, 0.6, 0.7, 0.95):
    est = estimate_theta_lattice(p, p, 32, 2000, rng)
    print(f"site-bond p_s = p_b = {p:4.2f}: theta ~ {est.estimate:.3f} +- {est.stderr:.3f}")

# Boolean model: discs of radius r joined when they overlap; z * int p = z pi (2r)^2
w = Window.box(24)
sub = Window((8, 8), (16, 16))
for mean_degree in (0.1, 2.0, 6.0):
    r = math.sqrt(mean_degree / math.pi) / 2
    est = estimate_theta_continuum(w, 1.0, Boolean(r), sub, 50, rng)
    print(f"Boolean, mean degree {mean_degree}: theta ~ {est.estimate:.3f} +- {est.stderr:.3f}")

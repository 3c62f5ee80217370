"""
Perfect samples of the continuum Ising model
============================================

Two species repel each other through J(x) = 3 (1 - |x|)^2 for |x| <= 1.  The
random map F thins a fresh Poisson draw by the opposite species, and running
it from the past between the empty and the full configuration gives exact
samples once the two chains meet.  A plus crowd just outside the window acts
as the boundary condition; near z = 4.5 it takes over the whole window.

This takes a few minutes.
"""

from gibbsperc import BoundaryCondition, Potential, Window, cftp_sample

pot = Potential.soft(3.0, 1.0, 2)
w = Window.box(20, boundary_mode="plus_poisson", collar_width=1.0)
centre = Window((5, 5), (15, 15))

for z in (3.0, 4.0, 4.5, 5.0):
    res = cftp_sample(w, z, pot, BoundaryCondition.plus_poisson(), seed=7, check_order=False)
    p, m = res.plus.count_in(centre), res.minus.count_in(centre)
    print(f"z = {z}: coalesced from N_K = {res.N_K}, centre counts + {p} / - {m}, "
          f"imbalance {(p - m) / max(p + m, 1):+.2f}")

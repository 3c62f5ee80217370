"""
Continuum Swendsen-Wang
=======================

Each step joins same-species neighbours with probability 1 - exp(-J),
recolours whole clusters by fair coins, then refreshes positions with the
random map.  Starting from an all-minus crowd under a plus boundary the chain
flips large regions at once.
"""

import numpy as np

from gibbsperc import BoundaryCondition, PointSet, Potential, State, Window
from gibbsperc.samplers import swendsen_wang_step

pot = Potential.soft()
w = Window.box(8, boundary_mode="plus_poisson", collar_width=1.0)
boundary = BoundaryCondition.plus_poisson().plus_points(w, pot, seed=5, z_default=4.5)

rng = np.random.default_rng(0)
state = State(PointSet.empty(2), PointSet.from_coords(rng.random((200, 2)) * 8, 2))
for step in range(30):
    state = swendsen_wang_step(state, w, 4.5, pot, boundary, seed=5, step=step)
    if step % 5 == 0:
        print(f"step {step:2d}: + {len(state.plus):3d}   - {len(state.minus):3d}")

"""
Magnetization as a connection probability
=========================================

Under the plus boundary condition the mean spin at a site equals the
probability, under the wired random-cluster law, that the site is linked to
the exterior.  Both sides are computed here by exact enumeration on small
boxes, first for the lattice Ising model and then for the Widom-Rowlinson
lattice gas, where spins take values -1, 0, +1.
"""

import math

from gibbsperc import LatticeRegion, check_identity_magnetization

# Ising: edges open with probability 1 - exp(-J)
for shape in [(1, 1), (2, 2), (3, 1)]:
    for J in (0.5, 1.0):
        lhs, rhs = check_identity_magnetization(LatticeRegion(shape), "ising", J=J)
        print(f"Ising {shape} J={J}: <spin> = {lhs:.12f}   P(0 <-> exterior) = {rhs:.12f}")

# a single site has four edges to the exterior, hence the closed form below
J = 1.0
print("closed form for one site:", (1 - math.exp(-4 * J)) / (1 + math.exp(-4 * J)))

# Widom-Rowlinson: sites occupied with probability z / (1 + z) in the site model
for z in (0.5, 1.0, 2.0):
    lhs, rhs = check_identity_magnetization(LatticeRegion((2, 2)), "wr", z=z)
    print(f"WR 2x2 z={z}: <spin> = {lhs:.12f}   P(0 <-> exterior) = {rhs:.12f}")

# the identity needs the right edge probability; a wrong one breaks it
lhs, rhs = check_identity_magnetization(LatticeRegion((2, 2)), "ising", J=1.0, p_override=0.3)
print(f"wrong p: {lhs:.4f} vs {rhs:.4f}")

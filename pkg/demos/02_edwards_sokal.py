"""
Going back and forth between spins and clusters
===============================================

Given spins, keep each equal-spin edge with probability 1 - exp(-J).  Given
edges, paint each cluster with a fair coin, the one touching the exterior
plus.  Each map sends the exact Gibbs law to the exact random-cluster law and
back, which we check with chi-square tests against enumerated tables.
"""

import numpy as np

from gibbsperc import LatticeRegion, couple_edges_to_spins, couple_spins_to_edges
from gibbsperc.random_cluster import es_coupling_chisquare

region = LatticeRegion((3, 3))
rng = np.random.default_rng(1)

spins = np.where(rng.random(region.n_sites) < 0.7, 1, -1)
edges = couple_spins_to_edges(spins, region, J=0.8, rng=rng)
print("spins\n", spins.reshape(3, 3))
print("open edges:", int(edges.sum()), "of", region.n_edges)
print("recoloured\n", couple_edges_to_spins(region, rng, open_edges=edges).reshape(3, 3))

p_edges, p_spins = es_coupling_chisquare(LatticeRegion((2, 2)), 0.5, 100_000, rng)
print(f"chi-square p-values: spins->edges {p_edges:.3f}, edges->spins {p_spins:.3f}")

"""Gibbsian lattice and continuum particle models, their random-cluster
representations, percolation estimators and exact samplers."""

from .geometry import (CellGrid, InvalidInputError, LatticeRegion, RngStream, StreamKey, Window,
                       build_cell_grid, derive_stream, distance)
from .model import (ActivityParams, LatticeSpinConfig, Potential, SpinPointConfig,
                    area_hamiltonian, edge_prob, eval_potential, hamiltonian_continuum,
                    hamiltonian_lattice_ising, hamiltonian_lattice_wr, papangelou_intensity,
                    plus_log_weight)
from .percolation import (Boolean, Graph, PercolationEstimate, UnionFind, clusters,
                          estimate_theta_continuum, estimate_theta_lattice,
                          sample_bernoulli_site_bond, sample_poisson_random_edge)
from .random_cluster import (CapacityError, ExactDistribution, RCWeighting,
                             check_identity_magnetization, couple_edges_to_spins,
                             couple_spins_to_edges, enumerate_gibbs_plus_lattice,
                             enumerate_rc_lattice, rc_weight, site_rc_conditional)
from .samplers import (BoundaryCondition, CftpSchedule, NonCoalescenceError, PointSet, RandomMap,
                       State, apply_F, cftp_sample, mcmc_run, swendsen_wang_step)

__version__ = "0.1.0"

import math

import numpy as np
import pytest

from gibbsperc.geometry import InvalidInputError, LatticeRegion, Window
from gibbsperc.percolation import Graph
from gibbsperc.model import LatticeSpinConfig, Potential, SpinPointConfig
from gibbsperc.random_cluster import (CapacityError, RCWeighting, check_identity_magnetization,
                                      cluster_count, couple_continuum_graph_to_spins,
                                      couple_continuum_spins_to_graph, couple_edges_to_spins,
                                      couple_spins_to_edges, enumerate_es_joint,
                                      enumerate_gibbs_plus_lattice, enumerate_rc_lattice,
                                      es_coupling_chisquare, rc_weight, site_rc_conditional)


class TestWeights:
    def test_bond_all_closed_single_site(self):
        r = LatticeRegion((1, 1))
        w = rc_weight(RCWeighting("lattice_bond", 0.3, r), np.zeros(4, bool))
        # the site and the exterior are two clusters
        assert w == pytest.approx(4 * 0.7 ** 4)

    def test_bond_one_open(self):
        r = LatticeRegion((1, 1))
        mask = np.array([1, 0, 0, 0], bool)
        assert rc_weight(RCWeighting("lattice_bond", 0.3, r), mask) == pytest.approx(2 * 0.3 * 0.7 ** 3)

    def test_site_variant(self):
        r = LatticeRegion((2, 1))
        assert cluster_count(r, occupied=[True, True]) == 1
        assert cluster_count(r, occupied=[False, False]) == 1
        w = rc_weight(RCWeighting("lattice_site", 0.4, r), [True, False])
        assert w == pytest.approx(2 * 0.4 * 0.6)

    def test_continuum_tuple(self):
        assert rc_weight(RCWeighting("continuum", 0.5), (3, 1, 2)) == pytest.approx(8 / 8)

    def test_shape_checked(self):
        with pytest.raises(InvalidInputError):
            rc_weight(RCWeighting("lattice_bond", 0.5, LatticeRegion((2, 2))), np.zeros(3, bool))

    def test_bad_p(self):
        with pytest.raises(InvalidInputError):
            RCWeighting("lattice_bond", 1.2)


class TestSiteConditional:
    def test_isolated_site(self):
        # interior site of a 3x3 box with no occupied neighbours: kappa = 0
        r = LatticeRegion((3, 3))
        p = 0.4
        val = site_rc_conditional(r, 4, np.zeros(9, bool), p)
        assert val == pytest.approx(p / (p + (1 - p) / 2))

    def test_four_separate_neighbours(self):
        r = LatticeRegion((3, 3))
        occ = np.zeros(9, bool)
        occ[[1, 3, 5, 7]] = True
        p = 0.4
        # every neighbour also touches the wired exterior: one cluster
        assert site_rc_conditional(r, 4, occ, p) == pytest.approx(p)
        big = LatticeRegion((5, 5))
        occ = np.zeros(25, bool)
        occ[[7, 11, 13, 17]] = True
        assert site_rc_conditional(big, 12, occ, p) == pytest.approx(p / (p + (1 - p) * 8))

    def test_p_one(self):
        assert site_rc_conditional(LatticeRegion((2, 2)), 0, np.zeros(4, bool), 1.0) == 1.0

    def test_matches_enumeration(self):
        r = LatticeRegion((3, 2))
        p = 0.35
        dist = enumerate_rc_lattice("lattice_site", r, p)
        table = {tuple(c): q for c, q in zip(dist.configs.tolist(), dist.probs)}
        for c in dist.configs.tolist():
            for i in range(r.n_sites):
                on, off = list(c), list(c)
                on[i], off[i] = 1, 0
                ref = table[tuple(on)] / (table[tuple(on)] + table[tuple(off)])
                assert site_rc_conditional(r, i, np.array(c, bool), p) == pytest.approx(ref)


class TestEnumeration:
    def test_single_site_ising(self):
        J = 0.8
        d = enumerate_gibbs_plus_lattice("ising", LatticeRegion((1, 1)), J=J)
        plus = d.probs[d.configs[:, 0] == 1][0]
        assert plus == pytest.approx(1 / (1 + math.exp(-4 * J)))

    def test_single_site_wr(self):
        d = enumerate_gibbs_plus_lattice("wr", LatticeRegion((1, 1)), z=2.0)
        probs = dict(zip(d.configs[:, 0].tolist(), d.probs))
        assert probs[-1] == 0.0
        assert probs[1] == pytest.approx(2 / 3)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_gibbs_plus_lattice("ising", LatticeRegion((5, 5)))

    def test_dump_format(self):
        d = enumerate_gibbs_plus_lattice("ising", LatticeRegion((2, 1)), J=1.0)
        lines = d.dump().splitlines()
        assert len(lines) == 4
        bits, prob = lines[0].split()
        assert set(bits) <= {"+", "-"} and len(bits) == 2
        assert sum(float(ln.split()[1]) for ln in lines) == pytest.approx(1.0)

    @pytest.mark.parametrize("J", [0.3, 1.0])
    @pytest.mark.parametrize("shape", [(1, 1), (2, 2), (3, 1)])
    def test_ising_identity(self, J, shape):
        lhs, rhs = check_identity_magnetization(LatticeRegion(shape), "ising", J=J)
        assert abs(lhs - rhs) <= 1e-12

    @pytest.mark.parametrize("z", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("shape", [(1, 1), (2, 2), (3, 2)])
    def test_wr_identity(self, z, shape):
        lhs, rhs = check_identity_magnetization(LatticeRegion(shape), "wr", z=z)
        assert abs(lhs - rhs) <= 1e-12

    def test_wrong_p_breaks_identity(self):
        lhs, rhs = check_identity_magnetization(LatticeRegion((2, 2)), "ising", J=1.0,
                                                p_override=0.3)
        assert abs(lhs - rhs) > 0.1

    def test_joint_single_site(self):
        # one site, four edges to the exterior; spin - forces every edge closed
        J = 0.6
        p = 1 - math.exp(-J)
        d = enumerate_es_joint(LatticeRegion((1, 1)), J)
        minus = d.probs[d.configs[:, 0] == -1].sum()
        plus = d.probs[d.configs[:, 0] == 1].sum()
        assert minus / plus == pytest.approx((1 - p) ** 4)

    def test_joint_marginal_is_gibbs(self):
        r = LatticeRegion((2, 1))
        J = 0.9
        joint = enumerate_es_joint(r, J)
        gibbs = enumerate_gibbs_plus_lattice("ising", r, J=J)
        for cfg, q in zip(gibbs.configs, gibbs.probs):
            rows = np.all(joint.configs[:, :r.n_sites] == cfg, axis=1)
            assert joint.probs[rows].sum() == pytest.approx(q)


class TestLatticeCoupling:
    def test_zero_coupling_all_closed(self):
        r = LatticeRegion((3, 3))
        e = couple_spins_to_edges(np.ones(9), r, 0.0, np.random.default_rng(0))
        assert not e.any()

    def test_opposite_spins_never_open(self):
        r = LatticeRegion((4, 4))
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = np.where(rng.random(16) < 0.5, 1, -1)
            e = couple_spins_to_edges(LatticeSpinConfig.from_interior(r, s), r, 3.0, rng)
            full = np.append(s, 1)
            assert np.all(full[r.edges[e, 0]] == full[r.edges[e, 1]])

    def test_open_frequency(self):
        r = LatticeRegion((1, 1))
        rng = np.random.default_rng(2)
        n = 20_000
        opened = sum(couple_spins_to_edges([1], r, 1.0, rng).sum() for _ in range(n))
        p = 1 - math.exp(-1.0)
        assert abs(opened / (4 * n) - p) < 4 * math.sqrt(p * (1 - p) / (4 * n))

    def test_all_wired_is_plus(self):
        r = LatticeRegion((3, 3))
        s = couple_edges_to_spins(r, np.random.default_rng(3), open_edges=np.ones(r.n_edges, bool))
        assert np.all(s == 1)

    def test_free_clusters_are_fair(self):
        # a 3x1 strip fully cut from the exterior: one interior cluster of 3 sites
        r = LatticeRegion((3, 1))
        open_edges = np.array([b != r.wired for _, b in r.edges])
        rng = np.random.default_rng(4)
        spins = np.array([couple_edges_to_spins(r, rng, open_edges=open_edges) for _ in range(4000)])
        assert np.all(spins == spins[:, :1])
        assert abs((spins[:, 0] == 1).mean() - 0.5) < 4 * 0.5 / math.sqrt(4000)

    def test_isolated_sites_uniform(self):
        # with all edges closed, 3 sites take 2^3 equally likely colourings
        r = LatticeRegion((3, 1))
        rng = np.random.default_rng(5)
        n = 8000
        codes = [int("".join("1" if v > 0 else "0" for v in
                             couple_edges_to_spins(r, rng, open_edges=np.zeros(r.n_edges, bool))), 2)
                 for _ in range(n)]
        from scipy import stats
        assert stats.chisquare(np.bincount(codes, minlength=8)).pvalue > 0.001

    def test_wr_occupied_mask(self):
        r = LatticeRegion((2, 1))
        occ = couple_spins_to_edges([1, 0], r, 0.0, None, model="wr")
        assert occ.tolist() == [True, False]
        s = couple_edges_to_spins(r, np.random.default_rng(0), occupied=occ)
        assert s.tolist() == [1, 0]

    def test_chisquare_both_directions(self):
        p1, p2 = es_coupling_chisquare(LatticeRegion((2, 1)), 0.7, 20_000,
                                       np.random.default_rng(6))
        assert p1 > 0.001 and p2 > 0.001

    def test_chisquare_detects_wrong_p(self):
        p1, _ = es_coupling_chisquare(LatticeRegion((2, 1)), 0.7, 20_000,
                                      np.random.default_rng(7), p_override=0.8)
        assert p1 < 0.001


class TestContinuumCoupling:
    W = Window.box(3, collar_width=1.0)
    POT = Potential.soft()

    def test_empty(self):
        cfg = SpinPointConfig(np.empty((0, 2)), np.empty((0, 2)), self.W)
        g, species = couple_continuum_spins_to_graph(cfg, self.POT, np.random.default_rng(0))
        assert g.n == 0
        assert couple_continuum_graph_to_spins(g, np.zeros(0, bool), np.random.default_rng()).size == 0

    def test_no_interspecies_edges(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            cfg = SpinPointConfig(rng.random((30, 2)) * 3, rng.random((30, 2)) * 3, self.W)
            g, species = couple_continuum_spins_to_graph(cfg, self.POT, rng)
            e = g.edges
            assert np.all(species[e[:, 0]] == species[e[:, 1]])

    def test_boundary_points_joined(self):
        cfg = SpinPointConfig([[-0.5, 1.0], [-0.5, 2.5], [1.0, 1.0]], np.empty((0, 2)), self.W)
        g, _ = couple_continuum_spins_to_graph(cfg, self.POT, np.random.default_rng(2))
        assert g.uf.connected(0, 1)

    def test_boundary_cluster_plus(self):
        g = Graph(np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 2.0]]), [(0, 1)])
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = couple_continuum_graph_to_spins(g, [True, False, False], rng)
            assert s[0] == 1 and s[1] == 1


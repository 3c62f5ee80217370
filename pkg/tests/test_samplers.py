import json
import math

import numpy as np
import pytest

from gibbsperc.geometry import InvalidInputError, Window
from gibbsperc.model import Potential
from gibbsperc.samplers import (BoundaryCondition, CftpSchedule, MapFamily, NonCoalescenceError,
                                PointSet, RandomMap, State, cftp_sample, decode_id,
                                encode_ids, mcmc_run, points_csv, run_metadata, sweep,
                                swendsen_wang_step)

from conftest import chisquare_against

SOFT = Potential.soft()
UNIT = Window.box(1.0)


def random_pointset(rng, w, n, tag="init", t=0):
    return PointSet.from_coords(w.lower + rng.random((n, w.d)) * w.sides, w.d, tag, t)


class TestIds:
    @pytest.mark.parametrize("n", [0, 5, -7, 123456])
    @pytest.mark.parametrize("species", ["+", "-", "boundary"])
    def test_roundtrip(self, n, species):
        ids = encode_ids(n, species, 3)
        assert [decode_id(i) for i in ids] == [(n, species, k) for k in range(3)]


class TestRandomMap:
    def test_empty_input_returns_draw(self):
        F = RandomMap(Window.box(3), 2.0, SOFT, seed=1, n=0, species="+")
        assert F(PointSet.empty(2)).same_as(F.Y)

    def test_output_within_draw(self):
        rng = np.random.default_rng(0)
        w = Window.box(4)
        for n in range(20):
            F = RandomMap(w, 3.0, SOFT, seed=2, n=n, species="-")
            out = F(random_pointset(rng, w, 30))
            assert out.issubset(F.Y)

    def test_hard_core_exclusion(self):
        rng = np.random.default_rng(1)
        w = Window.box(4)
        pot = Potential.hard_core(0.3)
        for n in range(20):
            X = random_pointset(rng, w, 15)
            out = RandomMap(w, 5.0, pot, seed=3, n=n, species="+")(X)
            if len(out):
                d = np.linalg.norm(out.coords[:, None] - X.coords[None], axis=2)
                assert d.min() > 0.6

    def test_anti_monotone(self):
        rng = np.random.default_rng(2)
        w = Window.box(5)
        for n in range(200):
            big = random_pointset(rng, w, int(rng.integers(0, 40)), t=n)
            keep = rng.random(len(big)) < 0.5
            small = PointSet(big.coords[keep], big.ids[keep])
            F = RandomMap(w, 2.0, SOFT, seed=4, n=n, species="+")
            assert F(big).issubset(F(small))

    def test_replay(self):
        rng = np.random.default_rng(3)
        X = random_pointset(rng, Window.box(3), 10)
        a = RandomMap(Window.box(3), 2.0, SOFT, 9, -4, "+")(X)
        b = RandomMap(Window.box(3), 2.0, SOFT, 9, -4, "+")(X)
        assert np.array_equal(a.ids, b.ids) and np.array_equal(a.coords, b.coords)

    def test_empty_probability(self):
        # z |window| = 1, so an empty output from an empty input has probability e^-1
        n = 20_000
        empty = sum(len(RandomMap(UNIT, 1.0, SOFT, 5, t, "+").Y) == 0 for t in range(n))
        p = math.exp(-1)
        assert abs(empty / n - p) < 3 * math.sqrt(p * (1 - p) / n)

    def test_sweep_preserves_anti_order(self):
        rng = np.random.default_rng(4)
        w = Window.box(4)
        family = MapFamily(w, 2.0, SOFT, seed=6)
        for n in range(50):
            hi = random_pointset(rng, w, 30, t=n)
            keep = rng.random(len(hi)) < 0.4
            lo = PointSet(hi.coords[keep], hi.ids[keep])
            s_lo = sweep(lo, family, n, PointSet.empty(2))
            s_hi = sweep(hi, family, n, PointSet.empty(2))
            assert s_hi.minus.issubset(s_lo.minus)
            assert s_lo.plus.issubset(s_hi.plus)


class TestBoundary:
    def test_collar_too_narrow(self):
        with pytest.raises(InvalidInputError):
            BoundaryCondition.plus_poisson().plus_points(Window.box(4, collar_width=0.5), SOFT, 0, 1.0)

    def test_points_in_collar(self):
        w = Window.box(4, collar_width=1.0)
        pts = BoundaryCondition.plus_poisson().plus_points(w, SOFT, 0, 3.0)
        assert len(pts) > 0
        assert not np.any(w.contains(pts.coords)) and np.all(w.in_outer(pts.coords))

    def test_fixed_rejects_inside(self):
        w = Window.box(4, collar_width=1.0)
        with pytest.raises(InvalidInputError):
            BoundaryCondition.fixed([[2.0, 2.0]]).plus_points(w, SOFT, 0, 1.0)

    def test_unknown_mode(self):
        with pytest.raises(InvalidInputError):
            BoundaryCondition("reflecting")


class TestMcmc:
    def test_deterministic(self):
        w = Window.box(3)
        a = mcmc_run(np.empty((0, 2)), 20, w, 1.5, SOFT, seed=11)
        b = mcmc_run(np.empty((0, 2)), 20, w, 1.5, SOFT, seed=11)
        assert all(x.plus.same_as(y.plus) and x.minus.same_as(y.minus) for x, y in zip(a, b))

    def test_tiny_activity_mostly_empty(self):
        out = mcmc_run(np.empty((0, 2)), 500, UNIT, 1e-4, SOFT, seed=1)
        assert sum(len(s.plus) + len(s.minus) for s in out) <= 3

    def test_burn_in_and_thinning(self):
        out = mcmc_run(np.empty((0, 2)), 100, UNIT, 1.0, SOFT, seed=1, burn_in=10, thin=10)
        assert len(out) == 10

    def test_matches_exact_law(self, unit_square_law):
        out = mcmc_run(np.empty((0, 2)), 6000, UNIT, 1.0, SOFT, seed=3, burn_in=100, thin=2)
        assert chisquare_against(unit_square_law, [s.counts() for s in out]) > 0.001


class TestCftp:
    def test_schedule_validation(self):
        with pytest.raises(InvalidInputError):
            CftpSchedule([-2, -1])
        with pytest.raises(InvalidInputError):
            CftpSchedule([3])
        assert list(zip(range(4), CftpSchedule.doubling())) == [(0, -2), (1, -4), (2, -8), (3, -16)]

    def test_schedule_invariance(self):
        w = Window.box(3)
        for seed in range(10):
            a = cftp_sample(w, 1.0, SOFT, seed=seed)
            b = cftp_sample(w, 1.0, SOFT, seed=seed, schedule=CftpSchedule([-3, -7, -50, -400]))
            assert a.plus.same_as(b.plus) and a.minus.same_as(b.minus)

    def test_non_coalescence(self):
        with pytest.raises(NonCoalescenceError):
            cftp_sample(Window.box(6), 6.0, SOFT, seed=0, max_steps=4)

    def test_tiny_window_fast(self):
        res = cftp_sample(UNIT, 0.1, SOFT, seed=0)
        assert res.K <= 3

    def test_matches_exact_law(self, unit_square_law):
        res = [cftp_sample(UNIT, 1.0, SOFT, seed=s, check_order=False) for s in range(3000)]
        counts = [(len(r.plus), len(r.minus)) for r in res]
        assert chisquare_against(unit_square_law, counts) > 0.001

    def test_plus_boundary_favours_plus(self):
        w = Window.box(3, collar_width=1.0)
        bc = BoundaryCondition.plus_poisson()
        plus = minus = 0
        for s in range(40):
            r = cftp_sample(w, 2.0, SOFT, bc, seed=s, check_order=False)
            plus += len(r.plus)
            minus += len(r.minus)
        assert plus > minus


class TestSwendsenWang:
    def test_no_interaction_gives_poisson_counts(self):
        w = Window.box(2)
        pot = Potential.soft(0.0)
        state = State(PointSet.empty(2), PointSet.empty(2))
        counts = []
        for t in range(2000):
            state = swendsen_wang_step(state, w, 1.5, pot, PointSet.empty(2), seed=1, step=t)
            counts.append(state.counts())
        c = np.array(counts)
        assert np.all(np.abs(c.mean(axis=0) - 6.0) < 4 * math.sqrt(6.0 / 2000))

    def test_matches_exact_law(self, unit_square_law):
        state = State(PointSet.empty(2), PointSet.empty(2))
        counts = []
        for t in range(6000):
            state = swendsen_wang_step(state, UNIT, 1.0, SOFT, PointSet.empty(2), seed=2, step=t)
            if t >= 100 and t % 2 == 0:
                counts.append(state.counts())
        assert chisquare_against(unit_square_law, counts) > 0.001

    def test_boundary_cluster_stays_plus(self):
        # a minus point sitting on top of the plus collar can never join the wired plus cluster
        w = Window.box(2, collar_width=1.0)
        boundary = PointSet.from_coords([[-0.1, 1.0]], 2, "boundary")
        state = State(PointSet.from_coords([[0.1, 1.0]], 2), PointSet.empty(2))
        nxt = swendsen_wang_step(state, w, 0.5, Potential.hard_core(0.5), boundary, seed=0, step=0)
        if len(nxt.minus):
            d = np.linalg.norm(nxt.minus.coords - boundary.coords, axis=1)
            assert d.min() > 1.0


class TestOutput:
    def test_csv(self):
        s = State(PointSet.from_coords([[0.5, 0.25]], 2), PointSet.from_coords([[1.0, 2.0]], 2))
        assert points_csv(s) == "species,x1,x2\n+,0.5,0.25\n-,1.0,2.0\n"

    def test_metadata(self):
        meta = json.loads(run_metadata(7, 4.0, SOFT, BoundaryCondition.plus_poisson(), N_K=-256))
        assert meta["seed"] == 7 and meta["z"] == 4.0 and meta["N_K"] == -256
        assert meta["potential"]["kind"] == "soft" and meta["bc"]["mode"] == "plus_poisson"

"""Random thinning map, Gibbs-sampler MCMC, dominated CFTP and continuum Swendsen-Wang.

Every point that ever exists in a run is a point of some Poisson draw ``Y``
and carries a 64-bit id ``(time index, species, index in Y)``.  Edge
decisions between an input point and a ``Y`` point are a pure function of the
seed, the realization key and the two ids, so a realization of the map can be
replayed exactly in any later CFTP run without storing its edges.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .geometry import (InvalidInputError, StreamKey, Window, build_cell_grid, brute_force_pairs,
                       cross_pairs, derive_stream, hash_key, keyed_uniforms)
from .model import ActivityParams, Potential, edge_prob_from_J, sample_poisson
from .percolation import component_labels
from .random_cluster import color_clusters

_SPECIES_CODE = {"+": 0, "-": 1, "boundary": 2, "init": 3}


def encode_ids(n: int, species: str, count: int) -> np.ndarray:
    """Ids of the ``count`` points of the draw at time ``n`` for ``species``."""
    zz = 2 * n if n >= 0 else -2 * n - 1
    base = (zz << 34) | (_SPECIES_CODE[species] << 32)
    return base + np.arange(count, dtype=np.int64)


def decode_id(pid: int):
    pid = int(pid)
    zz = pid >> 34
    n = zz // 2 if zz % 2 == 0 else -(zz + 1) // 2
    code = (pid >> 32) & 0x3
    species = {v: k for k, v in _SPECIES_CODE.items()}[code]
    return n, species, pid & 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Point sets with identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointSet:
    """Coordinates plus stable integer ids; set relations are decided on ids."""

    coords: np.ndarray
    ids: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "PointSet":
        return cls(np.empty((0, d)), np.empty(0, dtype=np.int64))

    @classmethod
    def from_coords(cls, coords, d: int, species: str = "init", n: int = 0) -> "PointSet":
        coords = np.asarray(coords, dtype=float).reshape(-1, d)
        return cls(coords, encode_ids(n, species, len(coords)))

    def __len__(self):
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __or__(self, other: "PointSet") -> "PointSet":
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return PointSet(np.vstack([self.coords, other.coords]),
                        np.concatenate([self.ids, other.ids]))

    def issubset(self, other: "PointSet") -> bool:
        return bool(np.all(np.isin(self.ids, other.ids)))

    def same_as(self, other: "PointSet") -> bool:
        return len(self) == len(other) and np.array_equal(np.sort(self.ids), np.sort(other.ids))

    def count_in(self, region: Window) -> int:
        return int(np.count_nonzero(region.contains(self.coords))) if len(self) else 0


# ---------------------------------------------------------------------------
# The random map F
# ---------------------------------------------------------------------------


class RandomMap:
    """One realization of the thinning map for one species at one time index.

    ``Y`` is a Poisson(z) draw in the window.  For an input configuration
    ``X`` the map keeps the points of ``Y`` that receive no edge from ``X``;
    the pair ``(x, y)`` carries an edge with probability ``1 - exp(-J(x - y))``.
    """

    def __init__(self, window: Window, z: float, pot: Potential, seed: int, n: int,
                 species: str, purpose: str = "F", replica: int = 0):
        self.window = window
        self.z = float(z)
        self.pot = pot
        self.n = int(n)
        self.species = species
        rng = derive_stream(seed, StreamKey(f"{purpose}{species}:Y", self.n, replica))
        coords = sample_poisson(window, self.z, rng)
        self.Y = PointSet(coords, encode_ids(self.n, species, len(coords)))
        self.key_hash = hash_key(seed, StreamKey(f"{purpose}{species}:E", self.n, replica))

    def __repr__(self):
        return f"RandomMap(n={self.n}, species={self.species!r}, |Y|={len(self.Y)})"

    def edges(self, X: PointSet):
        """Drawn edges ``(index into X, index into Y)``."""
        Y = self.Y
        if len(X) == 0 or len(Y) == 0:
            e = np.empty(0, dtype=np.int64)
            return e, e
        i, j = cross_pairs(self.window, X.coords, Y.coords, self.pot.range)
        if len(i) == 0:
            return i, j
        p = edge_prob_from_J(self.pot.of_distance(self.window.distances(X.coords[i], Y.coords[j])))
        u = keyed_uniforms(self.key_hash, X.ids[i], Y.ids[j])
        hit = u < p
        return i[hit], j[hit]

    def __call__(self, X: PointSet) -> PointSet:
        _, j = self.edges(X)
        if len(j) == 0:
            return self.Y
        keep = np.ones(len(self.Y), dtype=bool)
        keep[j] = False
        return PointSet(self.Y.coords[keep], self.Y.ids[keep])


def apply_F(X: PointSet, realization: RandomMap, boundary: PointSet | None = None) -> PointSet:
    """Thin the realization's Poisson draw by ``X`` together with any boundary points."""
    if boundary is not None and len(boundary):
        X = X | boundary
    return realization(X)


class MapFamily:
    """Lazily built, cached realizations ``F^s_n`` indexed by (time, species)."""

    def __init__(self, window: Window, z, pot: Potential, seed: int, purpose: str = "F",
                 replica: int = 0, cache: bool = True):
        self.window = window
        self.z = ActivityParams.of(z)
        self.pot = pot
        self.seed = int(seed)
        self.purpose = purpose
        self.replica = int(replica)
        self._cache = {} if cache else None

    def __call__(self, n: int, species: str) -> RandomMap:
        key = (int(n), species)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        F = RandomMap(self.window, self.z[species], self.pot, self.seed, n, species,
                      self.purpose, self.replica)
        if self._cache is not None:
            self._cache[key] = F
        return F


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryCondition:
    """Plus-particle boundary condition outside the window.

    ``free``: nothing outside.  ``plus_poisson``: a Poisson(z) plus crowd in the
    window's collar, drawn once per replica.  ``fixed``: the given collar points.
    """

    mode: str = "free"
    z: float | None = None
    points: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("free", "plus_poisson", "fixed"):
            raise InvalidInputError(f"unknown boundary mode {self.mode!r}")

    @classmethod
    def free(cls):
        return cls("free")

    @classmethod
    def plus_poisson(cls, z: float | None = None):
        return cls("plus_poisson", z)

    @classmethod
    def fixed(cls, points):
        return cls("fixed", None, tuple(map(tuple, np.asarray(points, dtype=float))))

    def plus_points(self, window: Window, pot: Potential, seed: int, z_default: float,
                    replica: int = 0) -> PointSet:
        if self.mode == "free":
            return PointSet.empty(window.d)
        if window.periodic:
            raise InvalidInputError("boundary points make no sense on a periodic window")
        if window.collar_width < pot.range:
            raise InvalidInputError("collar width must be at least the potential range")
        if self.mode == "fixed":
            pts = np.asarray(self.points, dtype=float).reshape(-1, window.d)
            if len(pts) and (np.any(window.contains(pts)) or not np.all(window.in_outer(pts))):
                raise InvalidInputError("fixed boundary points must lie in the collar")
            return PointSet(pts, encode_ids(0, "boundary", len(pts)))
        z = self.z if self.z is not None else z_default
        rng = derive_stream(seed, StreamKey("boundary", 0, replica))
        pts = sample_poisson(window, z, rng, region="collar")
        return PointSet(pts, encode_ids(0, "boundary", len(pts)))

    def to_spec(self) -> dict:
        out = {"mode": self.mode}
        if self.z is not None:
            out["z"] = self.z
        if self.points is not None:
            out["points"] = [list(p) for p in self.points]
        return out


# ---------------------------------------------------------------------------
# MCMC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    plus: PointSet
    minus: PointSet

    def counts(self, region: Window | None = None) -> tuple[int, int]:
        if region is None:
            return len(self.plus), len(self.minus)
        return self.plus.count_in(region), self.minus.count_in(region)


def sweep(plus: PointSet, family: MapFamily, n: int, boundary: PointSet) -> State:
    """One Gibbs-sampler sweep at time ``n``: minus from plus, then plus from minus at ``n + 1``.

    Returns the new state (plus at ``n + 1``, minus at ``n``).
    """
    minus = apply_F(plus, family(n, "-"), boundary)
    return State(family(n + 1, "+")(minus), minus)


def mcmc_run(x_plus0, sweeps: int, window: Window, z, pot: Potential,
             bc: BoundaryCondition | None = None, seed: int = 0, replica: int = 0,
             burn_in: int = 0, thin: int = 1) -> list[State]:
    """Run the alternating chain and return the recorded states.

    ``X-_0 = F-_0(X+_0)``, then ``X+_n = F+_n(X-_{n-1})``, ``X-_n = F-_n(X+_n)``
    for ``n = 1..sweeps``.  State ``n`` is kept when ``n >= burn_in`` and
    ``(n - burn_in) % thin == 0``.  Boundary plus points, if any, join every
    minus update.
    """
    if sweeps < 1:
        raise InvalidInputError("sweeps must be >= 1")
    bc = bc or BoundaryCondition.free()
    zz = ActivityParams.of(z)
    family = MapFamily(window, zz, pot, seed, purpose="mcmc", replica=replica, cache=False)
    boundary = bc.plus_points(window, pot, seed, zz.z_plus, replica)
    if not isinstance(x_plus0, PointSet):
        x_plus0 = PointSet.from_coords(x_plus0, window.d)
    plus = x_plus0
    minus = apply_F(plus, family(0, "-"), boundary)
    out = []
    if burn_in == 0:
        out.append(State(plus, minus))
    for n in range(1, sweeps + 1):
        plus = family(n, "+")(minus)
        minus = apply_F(plus, family(n, "-"), boundary)
        if n >= burn_in and (n - burn_in) % thin == 0:
            out.append(State(plus, minus))
    return out


# ---------------------------------------------------------------------------
# Coupling from the past
# ---------------------------------------------------------------------------


class CftpSchedule:
    """Strictly decreasing negative start times ``N_1 > N_2 > ...``."""

    def __init__(self, starts: Iterable[int] | None = None, first: int = 2):
        self._starts = None if starts is None else [int(s) for s in starts]
        self.first = int(first)
        if self._starts is not None:
            s = self._starts
            if not s or s[0] > -1 or any(b >= a for a, b in zip(s, s[1:])):
                raise InvalidInputError("start times must be negative and strictly decreasing")
        elif self.first < 1:
            raise InvalidInputError("first start must be >= 1 step back")

    @classmethod
    def doubling(cls, first: int = 2) -> "CftpSchedule":
        """``-first, -2 first, -4 first, ...``; the default ``first = 2`` gives ``N_k = -2^k``."""
        return cls(None, first)

    def __iter__(self) -> Iterator[int]:
        if self._starts is not None:
            yield from self._starts
            return
        n = self.first
        while True:
            yield -n
            n *= 2


class NonCoalescenceError(RuntimeError):
    def __init__(self, K: int, N: int):
        super().__init__(f"no coalescence after {K} runs (earliest start {N})")
        self.K = K
        self.N = N


@dataclass
class CftpResult:
    plus: PointSet
    minus: PointSet
    K: int
    N_K: int
    boundary: PointSet
    history: list = field(default_factory=list, repr=False)


def cftp_sample(window: Window, z, pot: Potential, bc: BoundaryCondition | None = None,
                schedule: CftpSchedule | None = None, seed: int = 0, replica: int = 0,
                max_steps: int = 1 << 16, check_order: bool = True,
                record_history: bool = False) -> CftpResult:
    """Perfect sample of the continuum Ising model by dominated coupling from the past.

    Run ``k`` starts at ``N_k`` from the minimal plus configuration (empty) and
    the maximal one (the whole plus draw at time ``N_k``) and applies the same
    time-indexed realizations down to time 0.  The first run whose two plus
    configurations agree yields ``(X+, F-_0(X+))``.  With ``check_order`` the
    anti-order of the two chains is asserted after every half-step.
    """
    bc = bc or BoundaryCondition.free()
    if window.periodic:
        raise InvalidInputError("CFTP is not supported on periodic windows")
    schedule = schedule or CftpSchedule.doubling()
    zz = ActivityParams.of(z)
    family = MapFamily(window, zz, pot, seed, purpose="cftp", replica=replica)
    boundary = bc.plus_points(window, pot, seed, zz.z_plus, replica)
    history = []
    K = 0
    N = 0
    for K, N in enumerate(schedule, start=1):
        if -N > max_steps:
            raise NonCoalescenceError(K - 1, N)
        hi = family(N, "+").Y
        lo = PointSet.empty(window.d)
        merged = False
        for t in range(N, 0):
            if merged:
                lo = sweep(lo, family, t, boundary).plus
                continue
            m_lo = apply_F(lo, family(t, "-"), boundary)
            m_hi = apply_F(hi, family(t, "-"), boundary)
            if check_order:
                assert lo.issubset(hi), "plus chains lost their order"
                assert m_hi.issubset(m_lo), "minus chains lost their order"
            lo = family(t + 1, "+")(m_lo)
            hi = family(t + 1, "+")(m_hi)
            if check_order:
                assert lo.issubset(hi), "plus chains lost their order"
            if lo.same_as(hi):
                merged = True
        if record_history:
            history.append((N, len(lo), len(hi)))
        if merged or lo.same_as(hi):
            minus = apply_F(lo, family(0, "-"), boundary)
            return CftpResult(lo, minus, K, N, boundary, history)
    raise NonCoalescenceError(K, N)


# ---------------------------------------------------------------------------
# Continuum Swendsen-Wang
# ---------------------------------------------------------------------------


def same_species_edges(window: Window, points, species, boundary, pot: Potential, rng):
    """Random-cluster edges among same-species points.

    Pairs of boundary points are always joined; other same-species pairs within
    range are joined with probability ``1 - exp(-J)``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, window.d)
    if len(points) < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e
    if len(points) <= 64:
        i, j = brute_force_pairs(window, points, pot.range)
    else:
        i, j = build_cell_grid(window, points, pot.range).neighbor_pairs()
    species = np.asarray(species)
    boundary = np.asarray(boundary, dtype=bool)
    same = species[i] == species[j]
    i, j = i[same], j[same]
    p = edge_prob_from_J(pot.of_distance(window.distances(points[i], points[j])))
    p = np.where(boundary[i] & boundary[j], 1.0, p)
    keep = rng.random(len(i)) < p
    # boundary points have to be pre-wired even when farther apart than the range
    bidx = np.flatnonzero(boundary)
    if len(bidx) > 1:
        i = np.concatenate([i[keep], bidx[:-1]])
        j = np.concatenate([j[keep], bidx[1:]])
        return i, j
    return i[keep], j[keep]


def swendsen_wang_step(state: State, window: Window, z, pot: Potential, boundary: PointSet,
                       seed: int, step: int, replica: int = 0) -> State:
    """One continuum Swendsen-Wang update.

    1. join same-species pairs with probability ``1 - exp(-J)`` (boundary wired);
    2. recolour every cluster by a fair coin, the boundary cluster plus;
    3. refresh positions with one sweep of the random map (plus, then minus).
    """
    d = window.d
    rng = derive_stream(seed, StreamKey("sw", step, replica))
    pts = np.vstack([state.plus.coords, state.minus.coords, boundary.coords]).reshape(-1, d)
    ids = np.concatenate([state.plus.ids, state.minus.ids, boundary.ids])
    n_p, n_m = len(state.plus), len(state.minus)
    species = np.concatenate([np.ones(n_p, int), -np.ones(n_m, int), np.ones(len(boundary), int)])
    is_bd = np.zeros(len(pts), dtype=bool)
    is_bd[n_p + n_m:] = True
    i, j = same_species_edges(window, pts, species, is_bd, pot, rng)
    labels = component_labels(len(pts), i, j)
    colour = color_clusters(labels, np.flatnonzero(is_bd), rng) if len(pts) else species
    inner = slice(0, n_p + n_m)
    c = colour[inner]
    plus = PointSet(pts[inner][c == 1], ids[inner][c == 1])
    minus = PointSet(pts[inner][c == -1], ids[inner][c == -1])
    family = MapFamily(window, z, pot, seed, purpose="sw", replica=replica, cache=False)
    plus = family(step, "+")(minus)
    minus = apply_F(plus, family(step, "-"), boundary)
    return State(plus, minus)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def points_csv(state: State, d: int | None = None) -> str:
    """``species,x1,...,xd`` rows; floats in shortest round-trip form."""
    d = d or (state.plus.d if len(state.plus) else state.minus.d)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["species"] + [f"x{k + 1}" for k in range(d)])
    for sign, ps in (("+", state.plus), ("-", state.minus)):
        for row in ps.coords:
            writer.writerow([sign] + [repr(float(v)) for v in row])
    return buf.getvalue()


def run_metadata(seed: int, z, pot: Potential, bc: BoundaryCondition, **extra) -> str:
    zz = ActivityParams.of(z)
    meta = {"seed": int(seed), "z": [zz.z_plus, zz.z_minus] if zz.z_plus != zz.z_minus
            else zz.z_plus, "potential": pot.to_spec(), "bc": bc.to_spec()}
    meta.update(extra)
    return json.dumps(meta, sort_keys=True, indent=2)

"""Random graphs (Bernoulli site-bond, Poisson random-edge, Boolean), clusters and θ estimators."""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import gamma

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import InvalidInputError, LatticeRegion, Window, brute_force_pairs, build_cell_grid
from .model import Potential, edge_prob_from_J, sample_poisson


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path compression and union by rank.

    ``k`` is the current number of sets and is maintained on every union.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.k = n

    def __len__(self):
        return len(self.parent)

    def add(self) -> int:
        self.parent.append(len(self.parent))
        self.rank.append(0)
        self.k += 1
        return len(self.parent) - 1

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        """Merge the sets of ``x`` and ``y``; return True if they were distinct."""
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        self.k -= 1
        return True

    def connected(self, x: int, y: int) -> bool:
        return self.find(x) == self.find(y)

    def labels(self) -> np.ndarray:
        """Canonical labels: each vertex gets the smallest index in its set."""
        n = len(self.parent)
        roots = np.fromiter((self.find(i) for i in range(n)), dtype=np.int64, count=n)
        smallest = np.full(n, n, dtype=np.int64)
        np.minimum.at(smallest, roots, np.arange(n))
        return smallest[roots]


class Graph:
    """Vertices with coordinates plus an undirected edge list and its union-find.

    ``site_index`` maps vertices back to lattice sites when the graph was cut
    out of a lattice box.
    """

    def __init__(self, points, edges=(), site_index=None):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)
        self.site_index = None if site_index is None else np.asarray(site_index, dtype=np.int64)
        self.uf = UnionFind(len(self.points))
        self._edges = []
        for i, j in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            self.add_edge(int(i), int(j))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def edges(self) -> np.ndarray:
        return np.array(self._edges, dtype=np.int64).reshape(-1, 2)

    @property
    def k(self) -> int:
        return self.uf.k

    def add_edge(self, i: int, j: int) -> bool:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise InvalidInputError(f"edge ({i}, {j}) references a missing vertex")
        self._edges.append((i, j))
        return self.uf.union(i, j)

    def dump(self) -> str:
        """Text dump: ``"d n m"``, then vertex coordinates, then ``"i j"`` edge lines."""
        buf = io.StringIO()
        edges = self.edges
        buf.write(f"{self.d} {self.n} {len(edges)}\n")
        for p in self.points:
            buf.write(" ".join(repr(float(c)) for c in p) + "\n")
        for i, j in edges:
            buf.write(f"{i} {j}\n")
        return buf.getvalue()

    @classmethod
    def load(cls, text: str) -> "Graph":
        lines = text.strip().splitlines()
        d, n, m = (int(v) for v in lines[0].split())
        pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + n]]).reshape(n, d)
        edges = [tuple(int(v) for v in ln.split()) for ln in lines[1 + n:1 + n + m]]
        return cls(pts, edges)


def clusters(g: Graph):
    """Canonical component labels (minimum vertex index) and the component count."""
    return g.uf.labels(), g.k


def component_labels(n: int, i, j) -> np.ndarray:
    """Canonical labels for a large edge list, computed with a sparse-graph sweep."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    adj = coo_matrix((np.ones(len(i), dtype=np.int8), (i, j)), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    smallest = np.full(lab.max() + 1, n, dtype=np.int64)
    np.minimum.at(smallest, lab, np.arange(n))
    return smallest[lab]


# ---------------------------------------------------------------------------
# Bernoulli site-bond percolation
# ---------------------------------------------------------------------------


def lattice_uniforms(region: LatticeRegion, rng):
    """One uniform per site and one per interior edge, for threshold coupling."""
    interior = region.edges[region.edges[:, 1] < region.n_sites]
    return rng.random(region.n_sites), rng.random(len(interior))


def threshold_site_bond(region: LatticeRegion, site_u, bond_u, p_s: float, p_b: float) -> Graph:
    """Graph of open sites/bonds obtained by comparing fixed uniforms with ``p_s``, ``p_b``.

    With the uniforms held fixed the result is monotone in both parameters.
    """
    if not (0 <= p_s <= 1 and 0 <= p_b <= 1):
        raise InvalidInputError("p_s and p_b must lie in [0, 1]")
    interior = region.edges[region.edges[:, 1] < region.n_sites]
    site_open = np.asarray(site_u) < p_s
    bond_open = (np.asarray(bond_u) < p_b) & site_open[interior[:, 0]] & site_open[interior[:, 1]]
    sites = np.flatnonzero(site_open)
    relabel = np.full(region.n_sites, -1, dtype=np.int64)
    relabel[sites] = np.arange(len(sites))
    coords = np.array([region.coords(s) for s in sites], dtype=float).reshape(-1, region.d)
    return Graph(coords, relabel[interior[bond_open]], site_index=sites)


def sample_bernoulli_site_bond(region: LatticeRegion, p_s: float, p_b: float, rng) -> Graph:
    """Bernoulli mixed site-bond percolation restricted to ``region``."""
    su, bu = lattice_uniforms(region, rng)
    return threshold_site_bond(region, su, bu, p_s, p_b)


# ---------------------------------------------------------------------------
# Connection functions and the Poisson random-edge model
# ---------------------------------------------------------------------------


class Connection:
    """Even, finite-range connection probability ``p(x - y)`` of a random-edge model."""

    range: float

    def prob(self, dist) -> np.ndarray:
        raise NotImplementedError

    def integral(self, d: int = 2) -> float:
        """``∫ p(x) dx`` over ``R^d`` (radial quadrature)."""
        surface = 2 * np.pi ** (d / 2) / gamma(d / 2)
        val, _ = integrate.quad(lambda r: float(self.prob(r)) * r ** (d - 1), 0.0, self.range,
                                limit=200)
        return surface * val


class Boolean(Connection):
    """Boolean model: ``p = 1{|x - y| <= 2r}``."""

    def __init__(self, r: float):
        if not r > 0:
            raise InvalidInputError("radius must be positive")
        self.r = float(r)
        self.range = 2 * self.r

    def prob(self, dist):
        return (np.asarray(dist) <= self.range).astype(float)

    def integral(self, d: int = 2) -> float:
        return np.pi ** (d / 2) / gamma(d / 2 + 1) * self.range ** d


class FromPotential(Connection):
    """``p = 1 - exp(-J)`` for an interaction potential ``J``."""

    def __init__(self, pot: Potential):
        self.pot = pot
        self.range = pot.range

    def prob(self, dist):
        return edge_prob_from_J(self.pot.of_distance(dist))


class Constant(Connection):
    """``p = c`` inside ``range`` (``c = 0`` gives the edgeless graph)."""

    def __init__(self, c: float, range_: float):
        self.c = float(c)
        self.range = float(range_)

    def prob(self, dist):
        return np.where(np.asarray(dist) <= self.range, self.c, 0.0)


def as_connection(p) -> Connection:
    if isinstance(p, Connection):
        return p
    if isinstance(p, Potential):
        return FromPotential(p)
    raise InvalidInputError("expected a Connection or a Potential")


def random_edges(w: Window, points, conn: Connection, rng):
    """Independent edges between points within range, each kept w.p. ``p(x - y)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, w.d)
    if len(pts) < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e
    if len(pts) <= 64:
        i, j = brute_force_pairs(w, pts, conn.range)
    else:
        i, j = build_cell_grid(w, pts, conn.range).neighbor_pairs()
    p = conn.prob(w.distances(pts[i], pts[j]))
    keep = rng.random(len(i)) < p
    return i[keep], j[keep]


def sample_poisson_random_edge(w: Window, z: float, p, rng, include_collar: bool = False) -> Graph:
    """Poisson(z) points in ``w`` joined by independent random edges."""
    if not z > 0:
        raise InvalidInputError("intensity z must be positive")
    conn = as_connection(p)
    pts = sample_poisson(w, z, rng)
    if include_collar and w.collar_width > 0:
        pts = np.vstack([pts, sample_poisson(w, z, rng, region="collar")])
    i, j = random_edges(w, pts, conn, rng)
    return Graph(pts, np.column_stack([i, j]))


# ---------------------------------------------------------------------------
# Percolation estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PercolationEstimate:
    estimate: float
    stderr: float
    trials: int
    L: float


def _box_boundary_mask(L: int, d: int) -> np.ndarray:
    grid = np.indices((L,) * d).reshape(d, -1)
    return np.any((grid == 0) | (grid == L - 1), axis=0)


def theta_lattice_trials(site_u, bond_u, region: LatticeRegion, p_s, p_b) -> np.ndarray:
    """Per-trial indicator of ``{origin <-> box boundary}`` from stacked uniforms.

    ``site_u`` has shape ``(trials, n_sites)``, ``bond_u`` ``(trials, n_edges)``.
    The origin is the central site of the box.
    """
    L = region.extents[0]
    d = region.d
    n = region.n_sites
    interior = region.edges[region.edges[:, 1] < n]
    origin = region.index((L // 2,) * d)
    on_boundary = _box_boundary_mask(L, d)
    T = site_u.shape[0]
    site_open = site_u < p_s
    bond_open = (bond_u < p_b) & site_open[:, interior[:, 0]] & site_open[:, interior[:, 1]]
    t, e = np.nonzero(bond_open)
    a = t * n + interior[e, 0]
    b = t * n + interior[e, 1]
    labels = component_labels(T * n, a, b).reshape(T, n)
    hit = np.zeros(T, dtype=bool)
    boundary_open = site_open & on_boundary[None, :]
    for r in range(T):
        if site_open[r, origin]:
            lab = labels[r, origin]
            hit[r] = bool(np.any(labels[r, boundary_open[r]] == lab))
    return hit


def estimate_theta_lattice(p_s: float, p_b: float, L: int, trials: int, rng, d: int = 2,
                           batch: int = 500) -> PercolationEstimate:
    """Fraction of trials in which the centre of an ``L^d`` box connects to the box surface."""
    if L < 2 or trials < 1:
        raise InvalidInputError("need L >= 2 and trials >= 1")
    if not (0 <= p_s <= 1 and 0 <= p_b <= 1):
        raise InvalidInputError("p_s and p_b must lie in [0, 1]")
    region = LatticeRegion((L,) * d)
    n_bonds = int(np.count_nonzero(region.edges[:, 1] < region.n_sites))
    hits = 0
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        su = rng.random((m, region.n_sites))
        bu = rng.random((m, n_bonds))
        hits += int(theta_lattice_trials(su, bu, region, p_s, p_b).sum())
        done += m
    th = hits / trials
    return PercolationEstimate(th, float(np.sqrt(th * (1 - th) / trials)), trials, L)


def boundary_connected_count(w: Window, points, i, j, sub: Window, reach: float) -> int:
    """Number of points in ``sub`` connected to a point within ``reach`` of the window surface."""
    pts = np.asarray(points).reshape(-1, w.d)
    if len(pts) == 0:
        return 0
    labels = component_labels(len(pts), i, j)
    near = w.distance_to_boundary(pts) <= reach
    good = np.zeros(len(pts), dtype=bool)
    good[np.unique(labels[near])] = True
    return int(np.count_nonzero(good[labels] & sub.contains(pts)))


def estimate_theta_continuum(w: Window, z: float, p, sub: Window, trials: int, rng
                             ) -> PercolationEstimate:
    """Average share of the expected ``z|sub|`` points of ``sub`` linked to the window surface."""
    conn = as_connection(p)
    if w.margin_inside(sub) < 2 * conn.range:
        raise InvalidInputError("sub-box must sit inside the window with margin >= 2R")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    vals = np.empty(trials)
    for t in range(trials):
        pts = sample_poisson(w, z, rng)
        i, j = random_edges(w, pts, conn, rng)
        vals[t] = boundary_connected_count(w, pts, i, j, sub, conn.range) / (z * sub.volume)
    est = float(np.clip(vals.mean(), 0.0, 1.0))
    se = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return PercolationEstimate(est, se, trials, float(w.sides.max()))

"""Windows, lattice boxes, cell-grid neighbour search and replayable random streams."""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

BOUNDARY_MODES = ("free", "plus_poisson", "periodic")


class InvalidInputError(ValueError):
    """Raised when geometric input violates a precondition."""


# ---------------------------------------------------------------------------
# Continuum windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lower, upper)`` with an optional boundary collar.

    Parameters
    ----------
    lower, upper : sequence of float
        Box corners, one entry per axis.
    boundary_mode : {"free", "plus_poisson", "periodic"}
        ``periodic`` switches distances to the minimum-image convention.
    collar_width : float
        Width of the shell around the box that may hold boundary points.
    """

    lower: tuple
    upper: tuple
    boundary_mode: str = "free"
    collar_width: float = 0.0

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or len(lo) < 1:
            raise InvalidInputError("lower and upper must have the same positive length")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidInputError("upper must exceed lower on every axis")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise InvalidInputError(f"unknown boundary_mode {self.boundary_mode!r}")
        if self.collar_width < 0:
            raise InvalidInputError("collar_width must be >= 0")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, side, d=2, **kw) -> "Window":
        """Cube ``[0, side)^d``."""
        return cls((0.0,) * d, (float(side),) * d, **kw)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def periodic(self) -> bool:
        return self.boundary_mode == "periodic"

    @property
    def outer_lower(self) -> np.ndarray:
        return self.lo - self.collar_width

    @property
    def outer_upper(self) -> np.ndarray:
        return self.hi + self.collar_width

    @property
    def collar_volume(self) -> float:
        return float(np.prod(self.outer_upper - self.outer_lower)) - self.volume

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside the box proper (collar excluded)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lo) & (pts < self.hi), axis=1)

    def in_outer(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.outer_lower) & (pts <= self.outer_upper), axis=1)

    def displacement(self, x, y) -> np.ndarray:
        """Row-wise ``y - x``, wrapped to the minimum image when periodic."""
        delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periodic:
            L = self.sides
            delta = delta - L * np.round(delta / L)
        return delta

    def distances(self, x, y) -> np.ndarray:
        return np.sqrt(np.sum(self.displacement(x, y) ** 2, axis=-1))

    def sub(self, lower, upper) -> "Window":
        """Sub-box sharing this window's metric conventions (no collar)."""
        return Window(tuple(lower), tuple(upper), "free", 0.0)

    def margin_inside(self, other: "Window") -> float:
        """Smallest gap between the faces of ``other`` and of this window."""
        return float(min(np.min(other.lo - self.lo), np.min(self.hi - other.hi)))

    def distance_to_boundary(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.min(np.minimum(pts - self.lo, self.hi - pts), axis=1)


def distance(w: Window, x, y) -> float:
    """Euclidean distance between two points of ``w`` (minimum image if periodic)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (w.d,) or y.shape != (w.d,):
        raise InvalidInputError(f"points must have dimension {w.d}")
    return float(w.distances(x, y))


# ---------------------------------------------------------------------------
# Lattice boxes
# ---------------------------------------------------------------------------


class LatticeRegion:
    """Finite box of ``Z^d`` sites with its norm-1 boundary.

    Sites are numbered in C order.  Edges meeting the box are exposed as an
    ``(m, 2)`` integer array in which the exterior endpoint of a boundary
    edge is encoded as ``n_sites`` (the single wired exterior vertex).
    """

    def __init__(self, extents: Sequence[int]):
        extents = tuple(int(e) for e in np.atleast_1d(extents))
        if not extents or any(e < 1 for e in extents):
            raise InvalidInputError("extents must be >= 1")
        self.extents = extents
        self.d = len(extents)
        self.n_sites = int(np.prod(extents))
        self._edges, self._boundary_sites = self._build_edges()

    def __repr__(self):
        return f"LatticeRegion({self.extents})"

    @property
    def wired(self) -> int:
        return self.n_sites

    def coords(self, i) -> tuple:
        return tuple(int(c) for c in np.unravel_index(i, self.extents))

    def index(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.extents))

    def _build_edges(self):
        edges = []
        outside = []
        for i in range(self.n_sites):
            c = np.array(self.coords(i))
            for axis in range(self.d):
                for step in (-1, 1):
                    nb = c.copy()
                    nb[axis] += step
                    if 0 <= nb[axis] < self.extents[axis]:
                        j = self.index(nb)
                        if i < j:
                            edges.append((i, j))
                    else:
                        edges.append((i, self.n_sites))
                        outside.append(tuple(nb))
        return np.array(edges, dtype=np.int64).reshape(-1, 2), outside

    @property
    def edges(self) -> np.ndarray:
        """Edges with at least one endpoint in the box (exterior end = ``n_sites``)."""
        return self._edges

    @property
    def boundary(self) -> list:
        """Coordinates of the exterior endpoints of the boundary edges (with repetition)."""
        return list(self._boundary_sites)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def neighbors(self, i) -> list:
        """Neighbours of site ``i``; exterior neighbours appear as ``n_sites``."""
        out = []
        for a, b in self._edges:
            if a == i:
                out.append(int(b))
            elif b == i:
                out.append(int(a))
        return out


# ---------------------------------------------------------------------------
# Cell grid
# ---------------------------------------------------------------------------


@dataclass
class CellGrid:
    """Bucketing of points into cubic cells of side at least ``R``.

    ``order`` lists point indices sorted by flat cell index; cell ``c`` owns
    ``order[starts[c]:starts[c] + counts[c]]``.
    """

    window: Window
    R: float
    origin: np.ndarray
    side: np.ndarray
    shape: tuple
    points: np.ndarray
    cells: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def cell_of(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor((pts - self.origin) / self.side).astype(np.int64)
        if self.window.periodic:
            return np.mod(idx, self.shape)
        return np.clip(idx, 0, np.asarray(self.shape) - 1)

    def members(self, flat_cell) -> np.ndarray:
        s = self.starts[flat_cell]
        return self.order[s:s + self.counts[flat_cell]]

    def candidates(self, query) -> tuple[np.ndarray, np.ndarray]:
        """All (query index, grid point index) pairs in the same or adjacent cells."""
        query = np.atleast_2d(np.asarray(query, dtype=float))
        if len(query) == 0 or len(self.points) == 0:
            e = np.empty(0, dtype=np.int64)
            return e, e
        qcells = self.cell_of(query)
        qidx = np.arange(len(query))
        shape = np.asarray(self.shape)
        qs, gs = [], []
        for off in self.offsets:
            nc = qcells + off
            if self.window.periodic:
                nc = np.mod(nc, shape)
                ok = qidx
            else:
                valid = np.all((nc >= 0) & (nc < shape), axis=1)
                ok = qidx[valid]
                nc = nc[valid]
            if len(ok) == 0:
                continue
            flat = np.ravel_multi_index(nc.T, self.shape)
            cnt = self.counts[flat]
            total = int(cnt.sum())
            if total == 0:
                continue
            st = self.starts[flat]
            pos = np.repeat(st - np.cumsum(cnt) + cnt, cnt) + np.arange(total)
            qs.append(np.repeat(ok, cnt))
            gs.append(self.order[pos])
        if not qs:
            e = np.empty(0, dtype=np.int64)
            return e, e
        return np.concatenate(qs), np.concatenate(gs)

    def neighbor_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Every unordered pair ``i < j`` of grid points at distance ``<= R``, once."""
        a, b = self.candidates(self.points)
        keep = a < b
        a, b = a[keep], b[keep]
        close = self.window.distances(self.points[a], self.points[b]) <= self.R
        a, b = a[close], b[close]
        o = np.lexsort((b, a))
        return a[o], b[o]


def _offsets(shape, periodic) -> np.ndarray:
    per_axis = []
    for n in shape:
        steps = (-1, 0, 1)
        if periodic:
            steps = sorted({s % n for s in steps})
        per_axis.append(steps)
    return np.array(list(itertools.product(*per_axis)), dtype=np.int64)


def build_cell_grid(w: Window, points, R: float) -> CellGrid:
    """Index ``points`` (inside ``w`` or its collar) into cells of side ``>= R``.

    Free windows use cells of side exactly ``R`` anchored at the collar's lower
    corner; periodic windows stretch the side so an integer number of cells
    tiles each period.
    """
    if not R > 0:
        raise InvalidInputError("range R must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, w.d)
    if w.periodic:
        origin = w.lo
        counts_axis = np.maximum(1, np.floor(w.sides / R).astype(np.int64))
        side = w.sides / counts_axis
    else:
        origin = w.outer_lower
        extent = w.outer_upper - w.outer_lower
        counts_axis = np.maximum(1, np.ceil(extent / R).astype(np.int64))
        side = np.full(w.d, float(R))
    shape = tuple(int(c) for c in counts_axis)
    grid = CellGrid(w, float(R), origin, side, shape, pts,
                    np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                    np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                    _offsets(shape, w.periodic))
    n_cells = grid.n_cells
    if len(pts):
        flat = np.ravel_multi_index(grid.cell_of(pts).T, shape)
    else:
        flat = np.empty(0, dtype=np.int64)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n_cells).astype(np.int64)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    grid.cells = flat
    grid.order = order.astype(np.int64)
    grid.counts = counts
    grid.starts = starts
    return grid


def cross_pairs(w: Window, a, b, R: float, brute_force_below: int = 4096):
    """Index pairs ``(i, j)`` with ``|a[i] - b[j]| <= R``.

    Small inputs use a dense distance matrix; both paths return the same set,
    sorted lexicographically.
    """
    a = np.asarray(a, dtype=float).reshape(-1, w.d)
    b = np.asarray(b, dtype=float).reshape(-1, w.d)
    if len(a) == 0 or len(b) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e
    if len(a) * len(b) <= brute_force_below:
        dist = w.distances(a[:, None, :], b[None, :, :])
        i, j = np.nonzero(dist <= R)
        return i.astype(np.int64), j.astype(np.int64)
    grid = build_cell_grid(w, b, R)
    i, j = grid.candidates(a)
    close = w.distances(a[i], b[j]) <= R
    i, j = i[close], j[close]
    o = np.lexsort((j, i))
    return i[o], j[o]


def brute_force_pairs(w: Window, points, R: float):
    """O(n^2) reference enumeration of pairs ``i < j`` within distance ``R``."""
    pts = np.asarray(points, dtype=float).reshape(-1, w.d)
    n = len(pts)
    if n < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e
    dist = w.distances(pts[:, None, :], pts[None, :, :])
    i, j = np.nonzero(np.triu(dist <= R, k=1))
    return i.astype(np.int64), j.astype(np.int64)


# ---------------------------------------------------------------------------
# Replayable randomness
# ---------------------------------------------------------------------------


class StreamKey(NamedTuple):
    """Structured stream identity: what the draws are for, at which step, for which replica."""

    purpose: str
    n: int = 0
    replica: int = 0


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class RngStream:
    """A numpy ``Generator`` bound to ``(master_seed, key)``.

    Backed by the Philox counter-based bit generator; two streams with the same
    seed and key produce identical sequences in any process.
    """

    def __init__(self, master_seed: int, key: StreamKey):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.key = StreamKey(*key)
        ss = np.random.SeedSequence(
            self.master_seed,
            spawn_key=(_purpose_code(self.key.purpose), _zigzag(int(self.key.n)),
                       int(self.key.replica)),
        )
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.master_seed}, key={tuple(self.key)})"

    def __getattr__(self, name):
        # uniform, random, poisson, integers, ... come straight from the Generator
        return getattr(self.generator, name)


def derive_stream(master_seed: int, key) -> RngStream:
    """Return the stream for ``(master_seed, key)``; ``key`` may be a tuple or a purpose string."""
    if isinstance(key, str):
        key = StreamKey(key)
    return RngStream(master_seed, StreamKey(*key))


# splitmix64 finaliser; wrapping uint64 arithmetic on arrays
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _as_u64(v) -> np.ndarray:
    return np.asarray(v).astype(np.int64).view(np.uint64) if np.asarray(v).dtype != np.uint64 \
        else np.asarray(v)


def hash_key(master_seed: int, key) -> int:
    """Fold a seed and a structured key into one 64-bit integer."""
    key = StreamKey(*key) if not isinstance(key, StreamKey) else key
    parts = (int(master_seed) & 0xFFFFFFFFFFFFFFFF, _purpose_code(key.purpose),
             _zigzag(int(key.n)), int(key.replica))
    h = np.zeros(1, dtype=np.uint64)
    for p in parts:
        h = _mix64(h ^ np.array([p], dtype=np.uint64) + _GOLDEN)
    return int(h[0])


def keyed_uniforms(key_hash: int, a, b) -> np.ndarray:
    """Uniforms in ``[0, 1)`` determined only by ``(key_hash, a[k], b[k])``.

    This is a stateless counter-based generator: the draw for a given pair of
    integer labels never depends on which other pairs are queried or in what
    order.
    """
    a = _as_u64(a)
    b = _as_u64(b)
    h = _mix64(np.full(a.shape, key_hash, dtype=np.uint64) ^ _mix64(a + _GOLDEN))
    h = _mix64(h ^ _mix64(b * _GOLDEN + np.uint64(1)))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

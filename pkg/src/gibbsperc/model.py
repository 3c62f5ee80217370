"""Interspecies potentials, lattice and continuum Hamiltonians, Papangelou intensities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import InvalidInputError, LatticeRegion, Window, cross_pairs

SPECIES = ("+", "-")


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Even, nonnegative, finite-range interspecies pair potential.

    Use the constructors :meth:`hard_core`, :meth:`soft` and :meth:`tabulated`.
    Hard-core values are ``inf`` (an exact extended value, never a large float).
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def hard_core(cls, r: float) -> "Potential":
        """Widom-Rowlinson exclusion: ``J = inf`` for ``|x| <= 2r``."""
        if not r > 0:
            raise InvalidInputError("hard-core radius must be positive")
        return cls("hard_core", {"r": float(r)})

    @classmethod
    def soft(cls, c: float = 3.0, r_max: float = 1.0, exponent: float = 2.0) -> "Potential":
        """``J(x) = c (1 - |x|/r_max)^exponent`` inside ``r_max``, zero outside."""
        if c < 0 or not r_max > 0 or exponent < 0:
            raise InvalidInputError("soft potential needs c >= 0, r_max > 0, exponent >= 0")
        return cls("soft", {"c": float(c), "r_max": float(r_max), "exponent": float(exponent)})

    @classmethod
    def tabulated(cls, radii, values) -> "Potential":
        """Linear interpolation of ``values`` at increasing ``radii``; zero beyond the last radius."""
        radii = tuple(float(r) for r in radii)
        values = tuple(float(v) for v in values)
        if len(radii) != len(values) or len(radii) < 2:
            raise InvalidInputError("tabulated potential needs >= 2 matching radii/values")
        if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] < 0:
            raise InvalidInputError("radii must be nonnegative and strictly increasing")
        if any(v < 0 for v in values):
            raise InvalidInputError("potential values must be nonnegative")
        return cls("tabulated", {"radii": radii, "values": values})

    @classmethod
    def from_spec(cls, spec: dict) -> "Potential":
        """Build from a config mapping such as ``{"kind": "soft", "c": 3.0, ...}``."""
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind == "hard_core":
            return cls.hard_core(**spec)
        if kind == "soft":
            return cls.soft(**spec)
        if kind == "tabulated":
            return cls.tabulated(spec["radii"], spec["values"])
        raise InvalidInputError(f"unknown potential kind {kind!r}")

    def to_spec(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def __hash__(self):
        return hash((self.kind, tuple(sorted((k, v) for k, v in self.params.items()))))

    @property
    def range(self) -> float:
        if self.kind == "hard_core":
            return 2 * self.params["r"]
        if self.kind == "soft":
            return self.params["r_max"]
        return self.params["radii"][-1]

    @property
    def hard_core_flag(self) -> bool:
        return self.kind == "hard_core"

    def of_distance(self, r) -> np.ndarray:
        """``J`` as a function of the (nonnegative) distance."""
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.kind == "hard_core":
            return np.where(r <= 2 * p["r"], np.inf, 0.0)
        if self.kind == "soft":
            inside = r <= p["r_max"]
            base = np.clip(1.0 - r / p["r_max"], 0.0, None)
            return np.where(inside, p["c"] * base ** p["exponent"], 0.0)
        radii = np.asarray(p["radii"])
        vals = np.interp(r, radii, np.asarray(p["values"]))
        return np.where(r <= radii[-1], vals, 0.0)

    def __call__(self, displacement) -> np.ndarray:
        disp = np.asarray(displacement, dtype=float)
        return self.of_distance(np.sqrt(np.sum(np.atleast_1d(disp) ** 2, axis=-1)))

    def positivity(self):
        """Return ``(delta, r)`` with ``J >= delta`` on ``|x| <= 2r``, or ``None`` if none exists."""
        R = self.range
        r = R / 4
        delta = float(np.min(self.of_distance(np.linspace(0.0, 2 * r, 257))))
        return (delta, r) if delta > 0 else None


def eval_potential(pot: Potential, displacement) -> float:
    """``J(displacement)``; ``inf`` only inside a hard core."""
    return float(pot(displacement))


def edge_prob_from_J(J) -> np.ndarray:
    """``1 - exp(-J)`` with ``J = inf`` mapping to exactly 1."""
    return -np.expm1(-np.asarray(J, dtype=float))


def edge_prob(pot: Potential, displacement) -> float:
    """Connection probability ``1 - exp(-J(x - y))`` of the random-cluster edges."""
    return float(edge_prob_from_J(pot(displacement)))


# ---------------------------------------------------------------------------
# Configurations and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActivityParams:
    z_plus: float
    z_minus: float

    def __post_init__(self):
        if not (self.z_plus > 0 and self.z_minus > 0):
            raise InvalidInputError("activities must be strictly positive")

    @classmethod
    def of(cls, z) -> "ActivityParams":
        """Accept a single activity, a pair, or an existing instance."""
        if isinstance(z, ActivityParams):
            return z
        if np.ndim(z) == 0:
            return cls(float(z), float(z))
        zp, zm = z
        return cls(float(zp), float(zm))

    def __getitem__(self, species: str) -> float:
        return self.z_plus if species == "+" else self.z_minus


@dataclass
class SpinPointConfig:
    """Two-species point configuration ``(X+, X-)`` attached to a window."""

    plus: np.ndarray
    minus: np.ndarray
    window: Window

    def __post_init__(self):
        d = self.window.d
        self.plus = np.asarray(self.plus, dtype=float).reshape(-1, d)
        self.minus = np.asarray(self.minus, dtype=float).reshape(-1, d)

    def swapped(self) -> "SpinPointConfig":
        return SpinPointConfig(self.minus, self.plus, self.window)

    def species(self, s: str) -> np.ndarray:
        return self.plus if s == "+" else self.minus


class LatticeSpinConfig:
    """Spins on a lattice box together with its boundary layer.

    ``values`` has shape ``extents + 2`` on every axis; the outer layer holds
    the boundary condition (corners are never read).
    """

    def __init__(self, region: LatticeRegion, values):
        self.region = region
        values = np.asarray(values, dtype=np.int64)
        want = tuple(e + 2 for e in region.extents)
        if values.shape != want:
            raise InvalidInputError(f"values must have shape {want}")
        self.values = values

    @classmethod
    def from_interior(cls, region: LatticeRegion, interior, boundary: int = 1):
        values = np.full(tuple(e + 2 for e in region.extents), int(boundary), dtype=np.int64)
        inner = tuple(slice(1, -1) for _ in region.extents)
        values[inner] = np.asarray(interior, dtype=np.int64).reshape(region.extents)
        return cls(region, values)

    @property
    def interior(self) -> np.ndarray:
        return self.values[tuple(slice(1, -1) for _ in self.region.extents)]

    def edge_value_pairs(self):
        """Yield ``(a, b)`` arrays of spin values across every edge meeting the box."""
        d = self.region.d
        for axis in range(d):
            idx_a = [slice(1, -1)] * d
            idx_b = [slice(1, -1)] * d
            idx_a[axis] = slice(0, -1)
            idx_b[axis] = slice(1, None)
            yield self.values[tuple(idx_a)], self.values[tuple(idx_b)]


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


def hamiltonian_lattice_ising(cfg: LatticeSpinConfig, J: float) -> float:
    """``J`` times the number of dealigned nearest-neighbour pairs meeting the box."""
    if J < 0:
        raise InvalidInputError("coupling J must be >= 0")
    unequal = sum(int(np.count_nonzero(a != b)) for a, b in cfg.edge_value_pairs())
    return J * unequal


def hamiltonian_lattice_wr(cfg: LatticeSpinConfig, z: float) -> float:
    """Widom-Rowlinson lattice energy: ``inf`` on an adjacent +/- pair, else ``-log z * #occupied``."""
    if not z > 0:
        raise InvalidInputError("activity z must be positive")
    for a, b in cfg.edge_value_pairs():
        if np.any(a * b == -1):
            return math.inf
    occupied = int(np.count_nonzero(cfg.interior))
    return -math.log(z) * occupied if occupied else 0.0


def interspecies_pairs(cfg: SpinPointConfig, pot: Potential):
    """Index pairs ``(i, j)`` of (plus, minus) points within the potential range."""
    return cross_pairs(cfg.window, cfg.plus, cfg.minus, pot.range)


def hamiltonian_continuum(cfg: SpinPointConfig, pot: Potential) -> float:
    """Sum of ``J(x - y)`` over plus/minus pairs with at least one point in the window."""
    w = cfg.window
    i, j = interspecies_pairs(cfg, pot)
    if len(i) == 0:
        return 0.0
    touches = w.contains(cfg.plus[i]) | w.contains(cfg.minus[j])
    i, j = i[touches], j[touches]
    J = pot.of_distance(w.distances(cfg.plus[i], cfg.minus[j]))
    return float(np.sum(J))


def area_hamiltonian(plus, region: Window, pot: Potential, resolution: float = 1000.0,
                     window: Window | None = None) -> float:
    """Integral over ``region`` of ``1 - exp(-sum_x J(x - y))`` by midpoint quadrature.

    ``resolution`` is the number of quadrature nodes per unit volume.  For a
    hard-core potential this is the area of ``region`` covered by the balls of
    radius ``2r`` around the plus points.
    """
    if not resolution > 0:
        raise InvalidInputError("quadrature resolution must be positive")
    plus = np.asarray(plus, dtype=float).reshape(-1, region.d)
    if len(plus) == 0:
        return 0.0
    metric = window if window is not None else region
    h = resolution ** (-1.0 / region.d)
    n_axis = np.maximum(1, np.ceil(region.sides / h).astype(int))
    axes = [region.lo[k] + (np.arange(n_axis[k]) + 0.5) * region.sides[k] / n_axis[k]
            for k in range(region.d)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.d)
    cell = region.volume / len(nodes)
    total = np.zeros(len(nodes))
    qi, pj = cross_pairs(metric, nodes, plus, pot.range, brute_force_below=0)
    if len(qi):
        J = pot.of_distance(metric.distances(nodes[qi], plus[pj]))
        np.add.at(total, qi, J)
    return float(np.sum(edge_prob_from_J(total)) * cell)


def plus_log_weight(plus, region: Window, pot: Potential, z, resolution: float = 1000.0) -> float:
    """Log density of the plus marginal relative to the unit-rate Poisson process.

    Integrating out a Poisson(``z-``) minus process in ``region`` leaves
    ``|X+| log z+ - z- * H(X+)`` with ``H`` the area Hamiltonian, up to the
    constant ``|region| (1 - z+)``, which is dropped.
    """
    zz = ActivityParams.of(z)
    n = len(np.asarray(plus, dtype=float).reshape(-1, region.d))
    return n * math.log(zz.z_plus) - zz.z_minus * area_hamiltonian(plus, region, pot, resolution)


def papangelou_intensity(x, species: str, cfg: SpinPointConfig, pot: Potential, z: float) -> float:
    """Conditional intensity ``z * exp(-sum_{y opposite} J(x - y))`` for adding ``x`` to ``species``."""
    if species not in SPECIES:
        raise InvalidInputError("species must be '+' or '-'")
    other = cfg.minus if species == "+" else cfg.plus
    if len(other) == 0:
        return float(z)
    J = pot.of_distance(cfg.window.distances(np.asarray(x, dtype=float)[None, :], other))
    return float(z * np.exp(-np.sum(J)))


# ---------------------------------------------------------------------------
# Poisson process and the Mecke identity
# ---------------------------------------------------------------------------


def sample_poisson(window: Window, z: float, rng, region: str = "window") -> np.ndarray:
    """Homogeneous Poisson(z) points in the window (``region="window"``) or its collar shell."""
    if region == "window":
        n = rng.poisson(z * window.volume)
        return window.lo + rng.random((n, window.d)) * window.sides
    if region == "collar":
        lo, hi = window.outer_lower, window.outer_upper
        n = rng.poisson(z * float(np.prod(hi - lo)))
        pts = lo + rng.random((n, window.d)) * (hi - lo)
        return pts[~window.contains(pts)]
    raise InvalidInputError(f"unknown region {region!r}")


def mecke_identity_check(window: Window, z: float, s: float, k: int, n_samples: int, rng,
                         chunk: int = 4000):
    """Estimate both sides of the Mecke identity for Poisson(z) with ``f = 1{#X∩B_s(x) = k}``.

    Returns ``(lhs, lhs_se, rhs, rhs_se)``.  The left side sums ``f(x, X\\{x})``
    over the points of each sample; the right side integrates ``z f(u, X)``
    over the window by one uniform probe ``u`` per sample.
    """
    d = window.d
    lhs_vals = np.empty(n_samples)
    rhs_vals = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        counts = rng.poisson(z * window.volume, size=m)
        width = max(1, int(counts.max()))
        pts = window.lo + rng.random((m, width, d)) * window.sides
        valid = np.arange(width)[None, :] < counts[:, None]
        dist = window.distances(pts[:, :, None, :], pts[:, None, :, :])
        close = (dist <= s) & valid[:, :, None] & valid[:, None, :]
        # exclude the point itself
        others = close.sum(axis=2) - 1
        lhs_vals[done:done + m] = np.sum((others == k) & valid, axis=1)
        probe = window.lo + rng.random((m, 1, d)) * window.sides
        near = (window.distances(probe, pts) <= s) & valid
        rhs_vals[done:done + m] = z * window.volume * (near.sum(axis=1) == k)
        done += m
    se = lambda v: float(np.std(v, ddof=1) / np.sqrt(len(v)))
    return float(lhs_vals.mean()), se(lhs_vals), float(rhs_vals.mean()), se(rhs_vals)

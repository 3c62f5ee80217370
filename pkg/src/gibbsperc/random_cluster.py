"""Random-cluster weights, Edwards-Sokal couplings and exact small-box enumerations.

Boundary conditions are wired: every exterior site (or every boundary point
in the continuum) belongs to a single pre-merged cluster represented by one
virtual vertex.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .geometry import InvalidInputError, LatticeRegion, Window
from .model import LatticeSpinConfig, Potential, SpinPointConfig, edge_prob_from_J
from .percolation import Graph, UnionFind, component_labels

MAX_OUTCOMES = 20_000
VARIANTS = ("lattice_bond", "lattice_site", "continuum")


class CapacityError(ValueError):
    """Raised when an exact enumeration would exceed :data:`MAX_OUTCOMES`."""


@dataclass
class RCWeighting:
    variant: str
    p: float
    region: LatticeRegion | None = None
    boundary: str = "wired"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        if not 0 <= self.p <= 1:
            raise InvalidInputError("p must lie in [0, 1]")
        if self.boundary not in ("wired", "free"):
            raise InvalidInputError("boundary must be 'wired' or 'free'")


@dataclass
class ExactDistribution:
    """Enumerated outcomes (one row per configuration) with normalised probabilities."""

    configs: np.ndarray
    probs: np.ndarray
    alphabet: dict

    def __post_init__(self):
        if abs(float(self.probs.sum()) - 1.0) > 1e-12 or np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative and sum to 1")

    def __len__(self):
        return len(self.probs)

    def expect(self, f) -> float:
        """Expectation of a function of the config matrix (vectorised over rows)."""
        return float(np.sum(self.probs * np.asarray(f(self.configs), dtype=float)))

    def code(self, configs=None) -> np.ndarray:
        """Mixed-radix integer code of each configuration (row)."""
        configs = self.configs if configs is None else np.atleast_2d(configs)
        symbols = sorted(self.alphabet)
        lut = {s: k for k, s in enumerate(symbols)}
        digits = np.vectorize(lut.get)(configs)
        base = len(symbols)
        weights = base ** np.arange(configs.shape[1] - 1, -1, -1)
        return (digits * weights).sum(axis=1)

    def dump(self) -> str:
        """Lines ``"<config_bits> <probability>"`` with one character per coordinate."""
        lines = []
        for row, p in zip(self.configs, self.probs):
            lines.append("".join(self.alphabet[int(v)] for v in row) + " " + repr(float(p)))
        return "\n".join(lines) + "\n"


SPIN_ALPHABET = {-1: "-", 0: "0", 1: "+"}
BIT_ALPHABET = {0: "0", 1: "1"}


def _all_configs(values, n: int) -> np.ndarray:
    if len(values) ** n > MAX_OUTCOMES:
        raise CapacityError(f"{len(values)}^{n} outcomes exceed the cap of {MAX_OUTCOMES}")
    return np.array(list(itertools.product(values, repeat=n)), dtype=np.int64).reshape(-1, n)


def _normalise(weights: np.ndarray) -> np.ndarray:
    total = math.fsum(weights)
    return np.asarray(weights, dtype=float) / total


# ---------------------------------------------------------------------------
# Cluster counting with the wired exterior vertex
# ---------------------------------------------------------------------------


def wired_union_find(region: LatticeRegion, open_edges=None, occupied=None) -> UnionFind:
    """Union-find on sites plus the exterior vertex ``region.wired``.

    ``open_edges`` (bond variant) marks open edges of ``region.edges``;
    ``occupied`` (site variant) marks occupied sites, in which case every edge
    between occupied sites, or between an occupied site and the exterior, is
    used.  Unoccupied sites are left as singletons; callers discount them.
    """
    uf = UnionFind(region.n_sites + 1)
    edges = region.edges
    if open_edges is not None:
        for (a, b) in edges[np.asarray(open_edges, dtype=bool)]:
            uf.union(int(a), int(b))
    else:
        occ = np.append(np.asarray(occupied, dtype=bool), True)
        for a, b in edges:
            if occ[a] and occ[b]:
                uf.union(int(a), int(b))
    return uf


def cluster_count(region: LatticeRegion, open_edges=None, occupied=None) -> int:
    """``k``: clusters of the configuration, the wired exterior counted as one."""
    uf = wired_union_find(region, open_edges=open_edges, occupied=occupied)
    if occupied is None:
        return uf.k
    return uf.k - int(np.count_nonzero(~np.asarray(occupied, dtype=bool)))


def rc_weight(weighting: RCWeighting, configuration) -> float:
    """Unnormalised weight ``2^k p^#included (1-p)^#excluded``.

    ``configuration`` is a boolean mask over ``region.edges`` (bond variant),
    over sites (site variant), or, for the continuum variant, a tuple
    ``(k, n_open, n_closed)`` of cluster count, open pairs and closed
    candidate pairs.
    """
    p = weighting.p
    if weighting.variant == "continuum":
        k, n_open, n_closed = configuration
        return 2.0 ** k * p ** n_open * (1 - p) ** n_closed
    region = weighting.region
    mask = np.asarray(configuration, dtype=bool)
    if weighting.variant == "lattice_bond":
        if mask.shape != (region.n_edges,):
            raise InvalidInputError("bond configuration must cover region.edges")
        k = cluster_count(region, open_edges=mask)
    else:
        if mask.shape != (region.n_sites,):
            raise InvalidInputError("site configuration must cover the region's sites")
        k = cluster_count(region, occupied=mask)
    inc = int(mask.sum())
    return 2.0 ** k * p ** inc * (1 - p) ** (len(mask) - inc)


def site_rc_conditional(region: LatticeRegion, i: int, occupied, p: float) -> float:
    """``P(i in Y | Y \\ {i})`` for the wired site random-cluster measure.

    ``kappa`` counts the clusters of ``Y \\ {i}`` (exterior included) that
    contain a neighbour of ``i``.
    """
    occ = np.array(occupied, dtype=bool)
    occ[i] = False
    uf = wired_union_find(region, occupied=occ)
    roots = set()
    for j in region.neighbors(i):
        if j == region.wired or occ[j]:
            roots.add(uf.find(j))
    kappa = len(roots)
    if p == 1:
        return 1.0
    return p / (p + (1 - p) * 2.0 ** (kappa - 1))


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


def _full_spins(configs: np.ndarray, boundary: int = 1) -> np.ndarray:
    return np.hstack([configs, np.full((len(configs), 1), boundary, dtype=np.int64)])


def enumerate_gibbs_plus_lattice(model: str, region: LatticeRegion, J: float = 1.0,
                                 z: float = 1.0) -> ExactDistribution:
    """Exact Gibbs distribution in ``region`` under the all-plus boundary condition.

    ``model`` is ``"ising"`` (coupling ``J``) or ``"wr"`` (activity ``z``).
    """
    edges = region.edges
    if model == "ising":
        configs = _all_configs((-1, 1), region.n_sites)
        s = _full_spins(configs)
        H = J * np.sum(s[:, edges[:, 0]] != s[:, edges[:, 1]], axis=1)
        w = np.exp(-(H - H.min()))
    elif model == "wr":
        if not z > 0:
            raise InvalidInputError("activity z must be positive")
        configs = _all_configs((-1, 0, 1), region.n_sites)
        s = _full_spins(configs)
        clash = np.any(s[:, edges[:, 0]] * s[:, edges[:, 1]] == -1, axis=1)
        occ = np.count_nonzero(configs, axis=1)
        w = np.where(clash, 0.0, float(z) ** occ)
    else:
        raise InvalidInputError(f"unknown lattice model {model!r}")
    return ExactDistribution(configs, _normalise(w), SPIN_ALPHABET)


def enumerate_rc_lattice(variant: str, region: LatticeRegion, p: float) -> ExactDistribution:
    """Exact wired random-cluster distribution (bond or site variant) in ``region``."""
    weighting = RCWeighting(variant, p, region)
    n = region.n_edges if variant == "lattice_bond" else region.n_sites
    configs = _all_configs((0, 1), n)
    w = np.array([rc_weight(weighting, c) for c in configs])
    return ExactDistribution(configs, _normalise(w), BIT_ALPHABET)


def connected_to_boundary(region: LatticeRegion, site: int, open_edges=None,
                          occupied=None) -> bool:
    if occupied is not None and not occupied[site]:
        return False
    uf = wired_union_find(region, open_edges=open_edges, occupied=occupied)
    return uf.connected(site, region.wired)


def enumerate_es_joint(region: LatticeRegion, J: float) -> ExactDistribution:
    """Joint law of (spins, edges) under the product measure conditioned on compatibility.

    Spins are fair coins in the box and ``+`` outside; edges meeting the box
    are open with probability ``1 - exp(-J)``.  Only outcomes in which no open
    edge joins opposite spins are kept.  Each row is ``spins || edges``.
    """
    n, m = region.n_sites, region.n_edges
    if 2 ** (n + m) > 4 * MAX_OUTCOMES ** 2:
        raise CapacityError("joint enumeration too large")
    p = float(edge_prob_from_J(J))
    spins = _all_configs((-1, 1), n)
    bonds = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64)
    s = _full_spins(spins)
    unequal = s[:, region.edges[:, 0]] != s[:, region.edges[:, 1]]
    compatible = ~np.any(unequal[:, None, :] & (bonds[None, :, :] == 1), axis=2)
    n_open = bonds.sum(axis=1)
    w_edges = p ** n_open * (1 - p) ** (m - n_open)
    w = compatible * w_edges[None, :] * 0.5 ** n
    si, bi = np.nonzero(w > 0)
    rows = np.hstack([spins[si], bonds[bi]])
    return ExactDistribution(rows, _normalise(w[si, bi]), {**SPIN_ALPHABET, **BIT_ALPHABET})


def check_identity_magnetization(region: LatticeRegion, model: str, J: float = 1.0,
                                 z: float = 1.0, site: int = 0, p_override: float | None = None):
    """Return ``(E[spin at site], P(site <-> exterior))`` by two exact enumerations.

    The first is taken under the plus-boundary Gibbs law, the second under the
    matching wired random-cluster law (bond variant for Ising with
    ``p = 1 - exp(-J)``, site variant for Widom-Rowlinson with ``p = z/(1+z)``).
    ``p_override`` replaces that ``p`` for negative-control runs.
    """
    gibbs = enumerate_gibbs_plus_lattice(model, region, J=J, z=z)
    lhs = math.fsum(gibbs.probs * gibbs.configs[:, site])
    if model == "ising":
        p = float(edge_prob_from_J(J)) if p_override is None else p_override
        rc = enumerate_rc_lattice("lattice_bond", region, p)
        hits = [connected_to_boundary(region, site, open_edges=c) for c in rc.configs]
    else:
        p = z / (1 + z) if p_override is None else p_override
        rc = enumerate_rc_lattice("lattice_site", region, p)
        hits = [connected_to_boundary(region, site, occupied=c.astype(bool)) for c in rc.configs]
    rhs = math.fsum(rc.probs[np.asarray(hits, dtype=bool)])
    return lhs, rhs


# ---------------------------------------------------------------------------
# Couplings on the lattice
# ---------------------------------------------------------------------------


def couple_spins_to_edges(cfg, region: LatticeRegion, J: float, rng, model: str = "ising"):
    """Edwards-Sokal step spins -> random-cluster configuration on the lattice.

    ``cfg`` holds the interior spins (a :class:`LatticeSpinConfig` or a flat
    array; the exterior is plus).  Ising: returns the open-edge mask over
    ``region.edges`` -- equal-spin edges open with probability ``1 - exp(-J)``,
    others closed.  Widom-Rowlinson: returns the occupied-site mask.
    """
    spins = cfg.interior.ravel() if isinstance(cfg, LatticeSpinConfig) else np.ravel(cfg)
    if model == "wr":
        return spins != 0
    full = np.append(spins, 1)
    e = region.edges
    equal = full[e[:, 0]] == full[e[:, 1]]
    return equal & (rng.random(region.n_edges) < edge_prob_from_J(J))


def color_clusters(labels: np.ndarray, forced_plus, rng) -> np.ndarray:
    """Assign +/-1 per vertex: clusters containing a forced vertex are +, others fair coins.

    Coins are drawn one per free cluster in increasing order of canonical label.
    """
    labels = np.asarray(labels)
    forced = np.zeros(len(labels), dtype=bool)
    forced[np.asarray(forced_plus, dtype=np.int64)] = True
    plus_labels = np.unique(labels[forced])
    free = np.setdiff1d(np.unique(labels), plus_labels)
    coins = np.where(rng.random(len(free)) < 0.5, 1, -1)
    colour = np.zeros(int(labels.max()) + 1 if len(labels) else 0, dtype=np.int64)
    colour[plus_labels] = 1
    colour[free] = coins
    return colour[labels]


def couple_edges_to_spins(region: LatticeRegion, rng, open_edges=None, occupied=None) -> np.ndarray:
    """Random-cluster configuration -> interior spins (the exterior cluster is plus).

    Bond variant: pass ``open_edges``; site variant (Widom-Rowlinson): pass
    ``occupied`` -- unoccupied sites get spin 0.
    """
    uf = wired_union_find(region, open_edges=open_edges, occupied=occupied)
    labels = uf.labels()
    spins = color_clusters(labels, [region.wired], rng)[:-1]
    if occupied is not None:
        spins = np.where(np.asarray(occupied, dtype=bool), spins, 0)
    return spins


# ---------------------------------------------------------------------------
# Continuum coupling
# ---------------------------------------------------------------------------


def couple_continuum_spins_to_graph(cfg: SpinPointConfig, pot: Potential, rng):
    """Continuum Edwards-Sokal step: particles -> random graph ``(Y, E)``.

    ``Y`` lists plus points then minus points.  Points outside the window are
    treated as plus boundary points; pairs of them are always joined, and
    same-species pairs meeting the window are joined with probability
    ``1 - exp(-J)``.  Returns ``(graph, species)`` with ``species`` in ``{+1, -1}``.
    """
    from .samplers import same_species_edges

    w = cfg.window
    points = np.vstack([cfg.plus, cfg.minus])
    species = np.concatenate([np.ones(len(cfg.plus), int), -np.ones(len(cfg.minus), int)])
    boundary = ~w.contains(points) if len(points) else np.zeros(0, bool)
    i, j = same_species_edges(w, points, species, boundary, pot, rng)
    g = Graph(points.reshape(-1, w.d), np.column_stack([i, j]))
    return g, species


def couple_continuum_graph_to_spins(g: Graph, boundary, rng) -> np.ndarray:
    """Colour the clusters of ``g``: clusters touching a boundary vertex are plus."""
    if g.n == 0:
        return np.zeros(0, dtype=np.int64)
    labels = component_labels(g.n, g.edges[:, 0], g.edges[:, 1])
    return color_clusters(labels, np.flatnonzero(np.asarray(boundary, dtype=bool)), rng)


# ---------------------------------------------------------------------------
# Chi-square checks of the lattice Ising coupling
# ---------------------------------------------------------------------------


def _pooled_chisquare(observed: np.ndarray, expected_p: np.ndarray, n: int, min_expected=5.0):
    expected = expected_p * n
    big = expected >= min_expected
    obs = np.append(observed[big], observed[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    if exp[-1] < min_expected:
        # fold the small tail into the smallest kept bin
        k = int(np.argmin(exp[:-1]))
        obs[k] += obs[-1]
        exp[k] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp = exp * obs.sum() / exp.sum()
    return stats.chisquare(obs, exp)


def es_coupling_chisquare(region: LatticeRegion, J: float, n_samples: int, rng,
                          p_override: float | None = None):
    """Chi-square p-values for both directions of the lattice Ising coupling.

    Spins drawn exactly from the plus-boundary Gibbs law are mapped to edges and
    compared with the enumerated random-cluster law; edges drawn exactly from the
    random-cluster law are mapped to spins and compared with the Gibbs law.
    Returns ``(p_spins_to_edges, p_edges_to_spins)``.
    """
    gibbs = enumerate_gibbs_plus_lattice("ising", region, J=J)
    p = float(edge_prob_from_J(J)) if p_override is None else p_override
    rc = enumerate_rc_lattice("lattice_bond", region, float(edge_prob_from_J(J)))
    e = region.edges

    idx = rng.choice(len(gibbs), size=n_samples, p=gibbs.probs)
    s = _full_spins(gibbs.configs[idx])
    equal = s[:, e[:, 0]] == s[:, e[:, 1]]
    bonds = (equal & (rng.random((n_samples, region.n_edges)) < p)).astype(np.int64)
    rc_codes = rc.code()
    counts = np.bincount(rc.code(bonds), minlength=int(rc_codes.max()) + 1)
    p_to_edges = _pooled_chisquare(counts[rc_codes], rc.probs, n_samples).pvalue

    idx = rng.choice(len(rc), size=n_samples, p=rc.probs)
    spin_codes = np.empty(n_samples, dtype=np.int64)
    for cfg_i in np.unique(idx):
        rows = np.flatnonzero(idx == cfg_i)
        labels = wired_union_find(region, open_edges=rc.configs[cfg_i]).labels()
        free = np.setdiff1d(np.unique(labels), [labels[region.wired]])
        coins = np.where(rng.random((len(rows), len(free))) < 0.5, 1, -1)
        colour = np.ones((len(rows), region.n_sites + 1), dtype=np.int64)
        for c, lab in enumerate(free):
            colour[:, labels == lab] = coins[:, [c]]
        spin_codes[rows] = gibbs.code(colour[:, :-1])
    gibbs_codes = gibbs.code()
    counts = np.bincount(spin_codes, minlength=int(gibbs_codes.max()) + 1)
    p_to_spins = _pooled_chisquare(counts[gibbs_codes], gibbs.probs, n_samples).pvalue
    return float(p_to_edges), float(p_to_spins)

"""Brute-force ground truth on small graphs.

Everything here enumerates: FK bond configurations, Potts spin sums (by a
tensor contraction of the Boltzmann factors), parity currents and the
positivity trace used by the switching identity.  None of it calls the
samplers, so it can be used to validate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .fk import Params, edge_betas, edge_weights
from .lattice import BoundaryCondition, Free, Ghost, Graph, Wiring, contract, parse_graphs, resolve_boundary

MAX_EDGES = 20
MAX_VERTICES = 16


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExactDistribution:
    """Normalized law on a finite set of edge configurations.

    ``codes[i]`` encodes a configuration (bit ``e`` is edge ``e``) and
    ``probs[i]`` its probability; ``log_z`` is the log partition function.
    """

    n_edges: int
    codes: np.ndarray
    probs: np.ndarray
    log_z: float

    @property
    def Z(self) -> float:
        return math.exp(self.log_z)

    def configs(self) -> np.ndarray:
        """Boolean array ``(len(codes), n_edges)``."""
        bits = (self.codes[:, None] >> np.arange(self.n_edges, dtype=np.int64)) & 1
        return bits.astype(bool)

    def prob_of(self, config) -> float:
        code = int(np.asarray(config, dtype=np.int64) @ (1 << np.arange(self.n_edges, dtype=np.int64)))
        i = np.searchsorted(self.codes, code)
        if i < len(self.codes) and self.codes[i] == code:
            return float(self.probs[i])
        return 0.0

    def dense(self) -> np.ndarray:
        """Probability vector indexed by configuration code (length ``2**n_edges``)."""
        out = np.zeros(1 << self.n_edges)
        out[self.codes] = self.probs
        return out

    def edge_marginals(self) -> np.ndarray:
        return self.probs @ self.configs()


def _check_edges(graph: Graph):
    if graph.n_edges > MAX_EDGES:
        raise TooLarge(f"{graph.n_edges} edges exceeds the enumeration limit {MAX_EDGES}")


@njit(cache=True)
def _cluster_counts(m, eu, ev, n_units):
    out = np.empty(1 << m, dtype=np.int64)
    parent = np.empty(n_units, dtype=np.int64)
    for code in range(1 << m):
        for i in range(n_units):
            parent[i] = i
        comps = n_units
        for e in range(m):
            if (code >> e) & 1:
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
                    comps -= 1
        out[code] = comps
    return out


def _bit_matrix(m: int) -> np.ndarray:
    codes = np.arange(1 << m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m, dtype=np.int64)) & 1).astype(bool)


def _normalize(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    top = log_w.max()
    w = np.exp(log_w - top)
    s = w.sum()
    return w / s, float(top + math.log(s))


def cluster_counts(graph: Graph, wiring: Wiring) -> np.ndarray:
    """``k(omega^xi)`` for every configuration code (wired classes count once, isolated units included)."""
    _check_edges(graph)
    ue, n_units, _ = contract(graph, wiring)
    # units of wired classes always exist; units of vertices in a class are unused and must not count
    used = np.zeros(n_units, dtype=bool)
    units, _ = wiring.units()
    used[units] = True
    k = _cluster_counts(graph.n_edges, ue[:, 0].copy(), ue[:, 1].copy(), n_units)
    return k - int((~used).sum())


def enumerate_fk(graph: Graph, params: Params, bc: BoundaryCondition | Wiring = Free()) -> ExactDistribution:
    """Exact FK law, weights accumulated in log space."""
    _check_edges(graph)
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    m = graph.n_edges
    pe = edge_weights(params, graph)
    bits = _bit_matrix(m)
    with np.errstate(divide="ignore"):
        lo, lc = np.log(pe), np.log1p(-pe)
    log_w = cluster_counts(graph, wiring) * math.log(params.q)
    log_w = log_w + np.where(bits, lo, lc).sum(axis=1)
    probs, log_z = _normalize(log_w)
    return ExactDistribution(m, np.arange(1 << m, dtype=np.int64), probs, log_z)


def event_prob(dist: ExactDistribution, predicate: Callable, vectorized: bool = False) -> float:
    """Probability of ``{predicate(config)}``.

    With ``vectorized=True`` the predicate receives the whole boolean
    configuration matrix and must return one boolean per row.
    """
    cfg = dist.configs()
    if vectorized:
        hit = np.asarray(predicate(cfg), dtype=bool)
    else:
        hit = np.fromiter((bool(predicate(c)) for c in cfg), dtype=bool, count=len(cfg))
    return float(dist.probs[hit].sum())


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------------------
# connectivity predicates on enumerated configurations
# ---------------------------------------------------------------------------


@njit(cache=True)
def _pair_connected(cfg, eu, ev, n_units, x, y):
    out = np.empty(cfg.shape[0], dtype=np.bool_)
    parent = np.empty(n_units, dtype=np.int64)
    for r in range(cfg.shape[0]):
        for i in range(n_units):
            parent[i] = i
        for e in range(cfg.shape[1]):
            if cfg[r, e]:
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    parent[max(a, b)] = min(a, b)
        a = x
        while parent[a] != a:
            a = parent[a]
        b = y
        while parent[b] != b:
            b = parent[b]
        out[r] = a == b
    return out


@njit(cache=True)
def _cluster_weight(cfg, eu, ev, n_units, is_a, ghost, q, mode, ghost_sign):
    """Per configuration: mode 0 -> 1[every non-ghost cluster holds an even number of A points],
    times ``ghost_sign`` if the ghost cluster holds an odd number;
    mode 1 -> q ** -(number of non-ghost clusters meeting A)."""
    out = np.empty(cfg.shape[0])
    parent = np.empty(n_units, dtype=np.int64)
    tally = np.empty(n_units, dtype=np.int64)
    for r in range(cfg.shape[0]):
        for i in range(n_units):
            parent[i] = i
            tally[i] = 0
        for e in range(cfg.shape[1]):
            if cfg[r, e]:
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    parent[max(a, b)] = min(a, b)
        groot = -1
        if ghost >= 0:
            groot = ghost
            while parent[groot] != groot:
                groot = parent[groot]
        for v in range(n_units):
            if is_a[v]:
                a = v
                while parent[a] != a:
                    a = parent[a]
                tally[a] += is_a[v]
        val = 1.0
        for i in range(n_units):
            if tally[i] == 0:
                continue
            if i == groot:
                if mode == 0 and tally[i] % 2 == 1:
                    val *= ghost_sign
                continue
            if mode == 0:
                if tally[i] % 2 == 1:
                    val = 0.0
                    break
            else:
                val /= q
        out[r] = val
    return out


def _unit_sources(graph: Graph, wiring: Wiring, A: Sequence[int]) -> np.ndarray:
    units, n_units = wiring.units()
    is_a = np.zeros(n_units, dtype=np.int64)
    for v in A:
        is_a[units[int(v)]] += 1
    return is_a


def fk_connection_prob(graph: Graph, params: Params, bc, x: int, y: int) -> float:
    """Exact ``P[x <-> y]`` (wired classes merged, so both reaching one class counts)."""
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    dist = enumerate_fk(graph, params, wiring)
    ue, n_units, _ = contract(graph, wiring)
    units, _ = wiring.units()
    hit = _pair_connected(dist.configs(), ue[:, 0].copy(), ue[:, 1].copy(), n_units, units[x], units[y])
    return float(dist.probs[hit].sum())


def fk_spin_correlation(graph: Graph, q: int, beta: float, bc, A: Sequence[int], J: float = 1.0) -> float:
    """Spin expectation computed through the FK enumeration (Edwards-Sokal).

    For ``q = 2`` this is ``E[sigma_A]`` (each non-ghost cluster must meet A
    evenly; the ghost cluster contributes the sign of ``tau``); for ``q > 2`` it is ``E[prod 1[sigma_x = tau]]`` (each non-ghost
    cluster meeting A costs a factor ``1/q``).
    """
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    dist = enumerate_fk(graph, Params.from_couplings(q, beta, J), wiring)
    ue, n_units, ghost = contract(graph, wiring)
    is_a = _unit_sources(graph, wiring, A)
    vals = _cluster_weight(dist.configs(), ue[:, 0].copy(), ue[:, 1].copy(), n_units, is_a, ghost,
                           float(q), 0 if q == 2 else 1, -1.0 if wiring.tau % 2 else 1.0)
    return float(dist.probs @ vals)


# ---------------------------------------------------------------------------
# spins
# ---------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def exact_spin_expectation(
    graph: Graph,
    q: int,
    beta: float,
    bc: BoundaryCondition | Wiring = Free(),
    A: Sequence[int] = (),
    J: float = 1.0,
    observable: str | None = None,
) -> float:
    """Exact Potts expectation by contracting the Boltzmann factors ``exp(2 beta_e 1[s_x = s_y])``.

    ``observable``: ``"product"`` gives ``E[prod sigma_x]`` with Ising spins
    ``+1, -1`` (``q = 2`` only); ``"indicator"`` gives ``E[prod 1[s_x = tau]]``.
    Default: product for ``q = 2``, indicator otherwise.  Wired classes share
    one spin; the ghost class is pinned to ``tau``.
    """
    if q not in (2, 3, 4):
        raise ValueError("exact spin sums support q in {2, 3, 4}")
    if graph.n_vertices > MAX_VERTICES:
        raise TooLarge(f"{graph.n_vertices} vertices exceeds the limit {MAX_VERTICES}")
    observable = observable or ("product" if q == 2 else "indicator")
    if observable == "product" and q != 2:
        raise ValueError("the product observable needs q = 2")
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    ue, n_units, ghost = contract(graph, wiring)
    units, _ = wiring.units()
    used = sorted(set(units.tolist()))
    if len(used) > len(_LETTERS):
        raise TooLarge("too many spin units")
    letter = {u: _LETTERS[i] for i, u in enumerate(used)}
    betas = edge_betas(Params.from_couplings(q, beta, J), graph)

    operands, subs = [], []
    for (a, b), be in zip(ue, betas):
        if a == b:
            continue  # constant factor
        operands.append(np.exp(2.0 * be * np.eye(q)))
        subs.append(letter[a] + letter[b])
    if ghost >= 0:
        pin = np.zeros(q)
        pin[wiring.tau % q] = 1.0
        operands.append(pin)
        subs.append(letter[ghost])
    denominator_ops, denominator_subs = list(operands), list(subs)
    counts: dict[int, int] = {}
    for v in A:
        counts[units[int(v)]] = counts.get(units[int(v)], 0) + 1
    for u, c in counts.items():
        if observable == "product":
            operands.append(np.array([1.0, -1.0]) ** c)
        else:
            vec = np.zeros(q)
            vec[wiring.tau % q] = 1.0
            operands.append(vec)
        subs.append(letter[u])
    # every unit appears at least once so that free units are summed over
    for u in used:
        ones = np.ones(q)
        operands.append(ones)
        subs.append(letter[u])
        denominator_ops.append(ones)
        denominator_subs.append(letter[u])
    num = np.einsum(",".join(subs) + "->", *operands, optimize="greedy")
    den = np.einsum(",".join(denominator_subs) + "->", *denominator_ops, optimize="greedy")
    return float(num / den)


def exact_magnetization(graph: Graph, q: int, beta: float, bc, x: int, J: float = 1.0) -> float:
    """``E[1[sigma_x = tau]] - 1/q``."""
    return exact_spin_expectation(graph, q, beta, bc, [x], J, observable="indicator") - 1.0 / q


# ---------------------------------------------------------------------------
# parity currents
# ---------------------------------------------------------------------------


def _odd_sets(m: int, ue: np.ndarray, n_units: int) -> np.ndarray:
    """For every parity code, the bitmask of units with odd degree."""
    bits = _bit_matrix(m).astype(np.int64)
    inc = np.zeros((m, n_units), dtype=np.int64)
    inc[np.arange(m), ue[:, 0]] ^= 1
    inc[np.arange(m), ue[:, 1]] ^= 1
    deg = (bits @ inc) & 1
    return deg @ (np.int64(1) << np.arange(n_units, dtype=np.int64))


def _source_mask(A: Sequence[int], units: np.ndarray, ghost: int) -> tuple[int, int]:
    target = 0
    for v in A:
        target ^= 1 << int(units[int(v)])
    care = ~0 if ghost < 0 else ~(1 << ghost)
    return target & care, care


def exact_parity_current_dist(
    graph: Graph,
    beta: float | np.ndarray,
    A: Sequence[int] = (),
    bc: BoundaryCondition | Wiring = Free(),
) -> ExactDistribution:
    """Law of ``n mod 2`` for the current with sources ``A`` (the ghost, if any, is exempt).

    ``beta`` is a scalar or one coupling per edge.  ``log_z`` is the log of the
    unnormalized sum of ``prod sinh^eta cosh^(1-eta)``, so that
    ``exp(log_z(A) - log_z(empty))`` is the spin correlation.
    """
    _check_edges(graph)
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    ue, n_units, ghost = contract(graph, wiring)
    units, _ = wiring.units()
    if n_units > 62:
        raise TooLarge("too many units for the parity bitmask")
    m = graph.n_edges
    betas = np.broadcast_to(np.asarray(beta, dtype=np.float64), (m,))
    odd = _odd_sets(m, ue, n_units)
    target, care = _source_mask(A, units, ghost)
    keep = np.flatnonzero((odd & care) == target)
    if not len(keep):
        return ExactDistribution(m, keep.astype(np.int64), np.zeros(0), -math.inf)
    bits = _bit_matrix(m)[keep]
    with np.errstate(divide="ignore"):
        ls, lc = np.log(np.sinh(betas)), np.log(np.cosh(betas))
    log_w = np.where(bits, ls, lc).sum(axis=1)
    if not np.isfinite(log_w).any():
        return ExactDistribution(m, keep.astype(np.int64), np.zeros(len(keep)), -math.inf)
    probs, log_z = _normalize(log_w)
    return ExactDistribution(m, keep.astype(np.int64), probs, log_z)


def current_correlation(graph: Graph, beta, A: Sequence[int], bc=Free()) -> float:
    """Spin correlation ``Z_A / Z_empty`` from the parity-current sums."""
    za = exact_parity_current_dist(graph, beta, A, bc).log_z
    z0 = exact_parity_current_dist(graph, beta, (), bc).log_z
    return 0.0 if za == -math.inf else math.exp(za - z0)


# ---------------------------------------------------------------------------
# switching identity
# ---------------------------------------------------------------------------


@njit(cache=True)
def _connect_prob(n, eu, ev, sure, prob, x, y):
    """``P[x <-> y]`` when edge ``e`` is open surely (``sure[e]``) or independently with ``prob[e]``."""
    m = eu.shape[0]
    unsure = np.empty(m, dtype=np.int64)
    k = 0
    for e in range(m):
        if not sure[e] and prob[e] > 0.0:
            unsure[k] = e
            k += 1
    parent = np.empty(n, dtype=np.int64)
    total = 0.0
    for code in range(1 << k):
        w = 1.0
        for i in range(n):
            parent[i] = i
        for e in range(m):
            if sure[e]:
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    parent[max(a, b)] = min(a, b)
        for j in range(k):
            e = unsure[j]
            if (code >> j) & 1:
                w *= prob[e]
                a = eu[e]
                while parent[a] != a:
                    a = parent[a]
                b = ev[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                w *= 1.0 - prob[e]
        a = x
        while parent[a] != a:
            a = parent[a]
        b = y
        while parent[b] != b:
            b = parent[b]
        if a == b:
            total += w
    return total


def edge_index(G: Graph, H: Graph) -> np.ndarray:
    """Position in ``G`` of every edge of ``H`` (raises if ``H`` is not a subgraph)."""
    lookup = {}
    for i, (a, b) in enumerate(G.edges):
        lookup.setdefault((min(a, b), max(a, b)), i)
    out = []
    for a, b in H.edges:
        key = (min(a, b), max(a, b))
        if key not in lookup or H.n_vertices > G.n_vertices:
            raise ValueError("H is not a subgraph of G")
        out.append(lookup[key])
    return np.array(out, dtype=np.int64)


def exact_switching_check(G: Graph, H: Graph, x: int, y: int, beta: float) -> tuple[float, float, float]:
    """``(lhs, rhs, |lhs - rhs|)`` for the switching identity on the nested pair ``H`` in ``G``.

    ``lhs = mu_H[s_x s_y]``; ``rhs = mu_G[s_x s_y] * P[x <-> y in H]`` where the
    connection uses the trace of ``n1 + n2`` on the edges of ``H``, with
    ``n1`` a current on ``G`` with sources ``{x, y}`` and ``n2`` a sourceless
    current on ``H``.  Given the parities, an edge of ``H`` is in the trace
    surely if either parity is odd and with probability ``tanh(beta)^2``
    otherwise.  Uniform coupling ``beta`` (spine flags are ignored).
    """
    _check_edges(G)
    _check_edges(H)
    idx = edge_index(G, H)
    lhs = current_correlation(H, beta, [x, y])
    mu_g = current_correlation(G, beta, [x, y])
    if lhs == 0.0 and mu_g == 0.0:
        return 0.0, 0.0, 0.0
    d1 = exact_parity_current_dist(G, beta, [x, y])
    d2 = exact_parity_current_dist(H, beta, [])
    c1 = d1.configs()[:, idx]
    c2 = d2.configs()
    eu, ev = H.edges[:, 0].copy(), H.edges[:, 1].copy()
    t2 = math.tanh(beta) ** 2
    prob = np.full(H.n_edges, t2)

    @lru_cache(maxsize=None)
    def conn(sure_code: int) -> float:
        sure = ((sure_code >> np.arange(H.n_edges)) & 1).astype(np.bool_)
        return _connect_prob(H.n_vertices, eu, ev, sure, prob, x, y)

    weights = np.array([1 << e for e in range(H.n_edges)], dtype=np.int64)
    codes1 = c1.astype(np.int64) @ weights
    codes2 = c2.astype(np.int64) @ weights
    total = 0.0
    for a, pa in zip(codes1, d1.probs):
        for b, pb in zip(codes2, d2.probs):
            total += pa * pb * conn(int(a | b))
    rhs = mu_g * total
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def load_catalog() -> list[Graph]:
    """Small test graphs shipped with the package (see ``data/catalog.txt``)."""
    text = resources.files("booklab").joinpath("data/catalog.txt").read_text()
    return parse_graphs(text)


def catalog_graph(name: str) -> Graph:
    for g in load_catalog():
        if g.name == name:
            return g
    raise KeyError(name)


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleCheck:
    name: str
    graph: str
    value: float
    expected: float
    tolerance: float

    @property
    def error(self) -> float:
        return abs(self.value - self.expected)

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


NESTED_PAIRS = (
    # (G, H edges as vertex pairs, x, y); H lives on G's vertex set
    ("edge", ((0, 1),), 0, 1),
    ("triangle", ((0, 2), (2, 1)), 0, 1),
    ("grid2x2", ((0, 1), (0, 2), (2, 3)), 0, 3),
    ("grid3x3", ((0, 1), (3, 4), (0, 3), (1, 4)), 0, 4),
    ("k4", ((0, 2), (2, 1), (1, 3)), 0, 3),
)


def nested_pair(name: str, h_edges, graphs: dict | None = None) -> tuple[Graph, Graph]:
    G = graphs[name] if graphs else catalog_graph(name)
    return G, Graph(G.n_vertices, list(h_edges), name=f"{name}-sub")


def oracle_suite(beta: float | None = None) -> list[OracleCheck]:
    """Exact identities: FK single edge, Ising at criticality, Edwards-Sokal on the catalog,
    parity currents against spins, and the switching identity on nested pairs."""
    from .fk import beta_c, p_c

    checks = []
    edge = Graph(2, [(0, 1)], name="edge")
    for q in (1, 2, 3, 4):
        d = enumerate_fk(edge, Params(q))
        checks.append(OracleCheck(f"single_edge_open_q{q}", "edge", float(d.probs[1]), 1 / (1 + math.sqrt(q)), 1e-12))
    b2 = beta_c(2) if beta is None else beta
    checks.append(OracleCheck("tanh_beta_c", "-", math.tanh(beta_c(2)), math.sqrt(2) - 1, 1e-12))
    checks.append(OracleCheck("p_c_from_beta_c", "-", Params.critical(2).p, p_c(2), 1e-12))
    catalog = load_catalog()
    for g in catalog:
        if g.n_vertices > MAX_VERTICES:
            continue
        d = enumerate_fk(g, Params(2))
        checks.append(OracleCheck("fk_normalization", g.name, float(d.probs.sum()), 1.0, 1e-12))
        last = g.n_vertices - 1
        for bc_name, bc in (("free", Free()), ("ghost", Ghost(None, 0))):
            for q in (2, 3, 4):
                for A in ((0, last), (0, 1, last)):
                    spin = exact_spin_expectation(g, q, b2, bc, A, J=0.7)
                    fk = fk_spin_correlation(g, q, b2, bc, A, J=0.7)
                    checks.append(OracleCheck(f"edwards_sokal_q{q}_{bc_name}_A{len(A)}", g.name, spin, fk, 1e-12))
        if g.n_vertices <= 8:
            for y in range(1, g.n_vertices):
                cur = current_correlation(g, b2, [0, y])
                spin = exact_spin_expectation(g, 2, b2, Free(), [0, y])
                checks.append(OracleCheck(f"current_vs_spin_0_{y}", g.name, cur, spin, 1e-12))
    graphs = {g.name: g for g in catalog}
    for name, h_edges, x, y in NESTED_PAIRS:
        G, H = nested_pair(name, h_edges, graphs)
        lhs, rhs, _ = exact_switching_check(G, H, x, y, b2)
        checks.append(OracleCheck("switching", f"{H.name}<{name}", rhs, lhs, 1e-10))
    return checks


"""Ising random currents through the FK / uniform-even-subgraph coupling.

A current is kept only as ``(parity, positive)``: the edge parities
``n_e mod 2`` and the trace indicators ``1[n_e > 0]``.  Sampling goes
FK configuration conditioned on every non-ghost cluster meeting the sources
evenly, then a uniform even subgraph with the prescribed odd set, then
independent positivity coins on even edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from . import _kernels as K
from .fk import DEFAULT_BURN_IN, DEFAULT_SWEEPS_BETWEEN, FKChain, Params, edge_betas
from .lattice import BoundaryCondition, Free, Graph, Wiring, contract, csr_adjacency, resolve_boundary


class SourcesNotPairable(ValueError):
    pass


@dataclass(frozen=True)
class ParityCurrent:
    parity: np.ndarray
    positive: np.ndarray
    sources: frozenset
    ghost: bool = False

    def odd_vertices(self, graph: Graph) -> set[int]:
        deg = np.zeros(graph.n_vertices, dtype=np.int64)
        odd = self.parity.astype(bool)
        np.add.at(deg, graph.edges[odd, 0], 1)
        np.add.at(deg, graph.edges[odd, 1], 1)
        return set(np.flatnonzero(deg % 2).tolist())


class _Contracted:
    """Graph with every wired class merged into one unit."""

    def __init__(self, graph: Graph, wiring: Wiring, sources: Sequence[int]):
        ue, self.n_units, self.ghost = contract(graph, wiring)
        self.eu = np.ascontiguousarray(ue[:, 0])
        self.ev = np.ascontiguousarray(ue[:, 1])
        self.indptr, self.nbr, self.nedge = csr_adjacency(self.n_units, ue)
        units, _ = wiring.units()
        self.is_source = np.zeros(self.n_units, dtype=np.uint8)
        for v in sources:
            self.is_source[units[int(v)]] ^= 1


def uniform_even_subgraph(
    graph: Graph,
    omega: np.ndarray,
    sources: Sequence[int] = (),
    rng: np.random.Generator | int | None = None,
    bc: BoundaryCondition | Wiring = Free(),
) -> np.ndarray:
    """Uniform subset of the open edges of ``omega`` whose odd-degree set is ``sources``.

    Wired classes act as single vertices; a ghost class is exempt from the
    parity constraint.  Raises :class:`SourcesNotPairable` when some cluster
    (not holding the ghost) meets the sources an odd number of times.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    c = _Contracted(graph, wiring, sources)
    open_ = np.asarray(omega, dtype=np.uint8)
    parity, ok = K.even_subgraph(c.n_units, c.eu, c.ev, open_, c.is_source, c.ghost,
                                 rng.random(graph.n_edges), c.indptr, c.nbr, c.nedge)
    if not ok:
        raise SourcesNotPairable("a cluster meets the sources an odd number of times")
    return parity.astype(bool)


@njit(cache=True)
def _currents_batch(omegas, coins, pos_u, keep, n, eu, ev, is_source, ghost, indptr, nbr, nedge):
    rows, m = omegas.shape
    parity = np.zeros((rows, m), dtype=np.uint8)
    positive = np.zeros((rows, m), dtype=np.uint8)
    bad = 0
    for r in range(rows):
        par, ok = K.even_subgraph(n, eu, ev, omegas[r], is_source, ghost, coins[r], indptr, nbr, nedge)
        if not ok:
            bad += 1
        for e in range(m):
            parity[r, e] = par[e]
            positive[r, e] = 1 if (par[e] or pos_u[r, e] < keep[e]) else 0
    return parity, positive, bad


class CurrentSampler:
    """Stream of parity currents with sources ``A`` for the Ising model (``q = 2``)."""

    def __init__(
        self,
        params: Params,
        graph: Graph,
        bc: BoundaryCondition | Wiring = Free(),
        sources: Sequence[int] = (),
        rng: np.random.Generator | int | None = None,
        burn_in: int = DEFAULT_BURN_IN,
        sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
        schedule: Sequence[str] = ("cm", "hb"),
    ):
        if params.q != 2:
            raise ValueError("random currents need q = 2")
        self.graph = graph
        self.wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
        self.sources = frozenset(int(v) for v in sources)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.chain = FKChain(params, graph, self.wiring, self.rng, schedule=schedule, sources=list(sources))
        self.sweeps_between = sweeps_between
        self._c = _Contracted(graph, self.wiring, sources)
        # an even edge stays at n_e = 0 with probability 1 / cosh(beta_e)
        self.keep = 1.0 - 1.0 / np.cosh(edge_betas(params, graph))
        self.chain.step(burn_in)

    def batch(self, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
        """``(parity, positive)`` arrays of shape ``(n_samples, m)``."""
        omegas = self.chain.samples(n_samples, self.sweeps_between)
        m = self.graph.n_edges
        coins = self.rng.random((n_samples, m))
        pos_u = self.rng.random((n_samples, m))
        c = self._c
        parity, positive, bad = _currents_batch(omegas, coins, pos_u, self.keep, c.n_units, c.eu, c.ev,
                                                c.is_source, c.ghost, c.indptr, c.nbr, c.nedge)
        if bad:
            raise SourcesNotPairable("constrained chain left the pairing event")
        return parity, positive

    def __iter__(self) -> Iterator[ParityCurrent]:
        while True:
            parity, positive = self.batch(256)
            for a, b in zip(parity, positive):
                yield ParityCurrent(a.astype(bool), b.astype(bool), self.sources, self.wiring.has_ghost)


def sample_current(
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    sources: Sequence[int] = (),
    rng: np.random.Generator | int | None = None,
    n_samples: int = 1,
    burn_in: int = DEFAULT_BURN_IN,
    sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
) -> list[ParityCurrent]:
    """Draw ``n_samples`` parity currents with sources ``sources``."""
    sampler = CurrentSampler(params, graph, bc, sources, rng, burn_in, sweeps_between)
    parity, positive = sampler.batch(n_samples)
    return [ParityCurrent(a.astype(bool), b.astype(bool), sampler.sources, sampler.wiring.has_ghost)
            for a, b in zip(parity, positive)]


def current_two_point(
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring,
    A: Sequence[int],
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    burn_in: int = DEFAULT_BURN_IN,
    sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
) -> tuple[float, float]:
    """``(estimate, stderr)`` of ``mu[sigma_A] = Z_A / Z_empty``.

    In the FK coupling the ratio of current partition functions is the
    probability that every non-ghost cluster meets ``A`` evenly.
    """
    chain = FKChain(params, graph, bc, rng)
    chain.step(burn_in)
    src = np.zeros(graph.n_vertices, dtype=np.uint8)
    for v in A:
        src[int(v)] ^= 1
    hits = np.empty(n_samples)
    omegas = chain.samples(n_samples, sweeps_between)
    for i, om in enumerate(omegas):
        hits[i] = K.sources_paired(om, chain.eu, chain.ev, chain.lu, chain.lv, chain.parent, src,
                                   chain.ghost_node, chain.tally)
    p = hits.mean()
    return float(p), float(math.sqrt(max(p * (1 - p), 0.0) / n_samples))


@njit(cache=True)
def _trace_connected(n, eu, ev, use, x, y, parent):
    for i in range(n):
        parent[i] = i
    for e in range(eu.shape[0]):
        if use[e]:
            a = K.find(parent, eu[e])
            b = K.find(parent, ev[e])
            if a != b:
                parent[max(a, b)] = min(a, b)
    return K.find(parent, x) == K.find(parent, y)


@dataclass(frozen=True)
class SwitchingEstimate:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    connection: float
    connection_stderr: float


def check_switching_mc(
    G: Graph,
    H: Graph,
    x: int,
    y: int,
    beta: float,
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    burn_in: int = DEFAULT_BURN_IN,
    sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
) -> SwitchingEstimate:
    """Monte Carlo side of the switching identity for ``H`` inside ``G``.

    ``lhs = mu_H[s_x s_y]`` and the factor ``mu_G[s_x s_y]`` are exact when the
    graphs are small enough to enumerate, otherwise FK estimates.  The
    connection probability uses independent currents ``n1`` on ``G`` (sources
    ``x, y``) and ``n2`` on ``H`` (no sources), joined through the edges of
    ``H`` where ``n1 + n2 > 0``.
    """
    from . import oracle

    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    idx = oracle.edge_index(G, H)
    params = Params(q=2, beta=beta)

    def two_point(graph: Graph) -> tuple[float, float]:
        try:
            return oracle.current_correlation(graph, beta, [x, y]), 0.0
        except oracle.TooLarge:
            return current_two_point(params, graph, Free(), [x, y], n_samples, rng, burn_in, sweeps_between)

    lhs, lhs_err = two_point(H)
    mu_g, mu_g_err = two_point(G)
    n1 = CurrentSampler(params, G, Free(), [x, y], rng, burn_in, sweeps_between)
    n2 = CurrentSampler(params, H, Free(), [], rng, burn_in, sweeps_between)
    _, pos1 = n1.batch(n_samples)
    _, pos2 = n2.batch(n_samples)
    use = pos1[:, idx] | pos2
    parent = np.empty(H.n_vertices, dtype=np.int64)
    eu, ev = np.ascontiguousarray(H.edges[:, 0]), np.ascontiguousarray(H.edges[:, 1])
    hits = np.array([_trace_connected(H.n_vertices, eu, ev, u, x, y, parent) for u in use], dtype=float)
    pc = hits.mean()
    pc_err = math.sqrt(max(pc * (1 - pc), 0.0) / n_samples)
    rhs = mu_g * pc
    rhs_err = math.hypot(mu_g * pc_err, pc * mu_g_err)
    return SwitchingEstimate(lhs, lhs_err, rhs, rhs_err, pc, pc_err)

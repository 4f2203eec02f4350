"""FK percolation on books and small graphs: parameters, single-bond and cluster dynamics.

The target law on a graph ``G`` with wiring ``xi`` is

    P[omega] ∝ q^{k(omega^xi)} * prod_e p_e^{omega_e} (1 - p_e)^{1 - omega_e}

with ``p_e = lam`` on spine edges and ``p`` elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K
from .lattice import BoundaryCondition, Free, Graph, Wiring, resolve_boundary

DEFAULT_BURN_IN = 200
DEFAULT_SWEEPS_BETWEEN = 5
DEFAULT_SCHEDULE = ("cm", "hb")


class ParamError(ValueError):
    pass


def p_c(q: float) -> float:
    return math.sqrt(q) / (1.0 + math.sqrt(q))


def beta_c(q: float) -> float:
    return 0.5 * math.log1p(math.sqrt(q))


def p_from_beta(beta: float) -> float:
    return -math.expm1(-2.0 * beta)


def beta_from_p(p: float) -> float:
    return -0.5 * math.log1p(-p)


@dataclass(frozen=True)
class Params:
    """Model parameters.

    ``p`` defaults to ``p_c(q)`` and ``lam`` to ``p``.  When ``beta`` (and
    optionally ``J``) are given they must satisfy ``p = 1 - exp(-2 beta)`` and
    ``lam = 1 - exp(-2 beta J)``.
    """

    q: float
    p: float | None = None
    lam: float | None = None
    beta: float | None = None
    J: float | None = None

    def __post_init__(self):
        if not self.q >= 1.0:
            raise ParamError(f"cluster weight q={self.q} must be >= 1")
        p, lam = self.p, self.lam
        if self.beta is not None:
            if self.beta < 0:
                raise ParamError("beta must be >= 0")
            pb = p_from_beta(self.beta)
            if p is not None and abs(p - pb) > 1e-12:
                raise ParamError(f"p={p} inconsistent with beta={self.beta}")
            p = pb
            if self.J is not None:
                if self.J < 0:
                    raise ParamError("J must be >= 0")
                lb = p_from_beta(self.beta * self.J)
                if lam is not None and abs(lam - lb) > 1e-12:
                    raise ParamError(f"lam={lam} inconsistent with beta*J")
                lam = lb
        elif self.J is not None:
            raise ParamError("J needs beta")
        if p is None:
            p = p_c(self.q)
        if lam is None:
            lam = p
        for name, v in (("p", p), ("lam", lam)):
            if not 0.0 <= v < 1.0:
                raise ParamError(f"{name}={v} must lie in [0, 1)")
        object.__setattr__(self, "p", float(p))
        object.__setattr__(self, "lam", float(lam))

    @classmethod
    def from_couplings(cls, q: float, beta: float, J: float = 1.0) -> "Params":
        return cls(q=q, beta=beta, J=J)

    @classmethod
    def critical(cls, q: float, J: float = 1.0) -> "Params":
        return cls(q=q, beta=beta_c(q), J=J)

    @property
    def beta_eff(self) -> float:
        return beta_from_p(self.p)

    @property
    def J_eff(self) -> float:
        b = self.beta_eff
        return beta_from_p(self.lam) / b if b > 0 else math.nan

    def with_(self, **kw) -> "Params":
        base = dict(q=self.q, p=self.p, lam=self.lam)
        base.update(kw)
        return Params(**base)


def edge_weight(params: Params, graph: Graph, e: int) -> float:
    return params.lam if graph.spine[e] else params.p


def edge_weights(params: Params, graph: Graph) -> np.ndarray:
    return np.where(graph.spine, params.lam, params.p).astype(np.float64)


def edge_betas(params: Params, graph: Graph) -> np.ndarray:
    """Spin couplings ``beta_e`` with ``p_e = 1 - exp(-2 beta_e)``."""
    return -0.5 * np.log1p(-edge_weights(params, graph))


_CODES = {"cm": K.CM, "hb": K.HB}


class FKChain:
    """One Markov chain for the FK measure on ``graph`` with boundary ``bc``.

    The chain owns its configuration.  All randomness comes from ``rng``
    (a :class:`numpy.random.Generator`) in fixed-size blocks, so identical
    seeds give identical streams.  ``sources`` restricts the chain to the
    event F_A (used by the current sampler).
    """

    def __init__(
        self,
        params: Params,
        graph: Graph,
        bc: BoundaryCondition | Wiring = Free(),
        rng: np.random.Generator | int | None = None,
        schedule: Sequence[str] = DEFAULT_SCHEDULE,
        init: str | np.ndarray = "closed",
        sources: Sequence[int] | None = None,
    ):
        self.params, self.graph = params, graph
        self.wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        try:
            self.codes = np.array([_CODES[s] for s in schedule], dtype=np.int64)
        except KeyError as exc:
            raise ParamError(f"unknown move {exc.args[0]!r}; use 'cm' or 'hb'") from None
        if not len(self.codes):
            raise ParamError("empty move schedule")
        n, m = graph.n_vertices, graph.n_edges
        w = self.wiring
        self.n_nodes = n + w.n_classes
        self.eu = np.ascontiguousarray(graph.edges[:, 0])
        self.ev = np.ascontiguousarray(graph.edges[:, 1])
        self.pe = edge_weights(params, graph)
        wired = np.flatnonzero(w.labels >= 0)
        self.lu = wired.astype(np.int64)
        self.lv = (n + w.labels[wired]).astype(np.int64)
        self.ghost_node = n + w.ghost_class if w.has_ghost else -1
        all_edges = np.concatenate([graph.edges, np.stack([self.lu, self.lv], axis=1)])
        indptr, nbr, eid = _csr(self.n_nodes, all_edges)
        eid[eid >= m] = -1
        self.indptr, self.nbr, self.nedge = indptr, nbr, eid
        self.parent = np.arange(self.n_nodes, dtype=np.int64)
        self.active = np.zeros(self.n_nodes, dtype=np.bool_)
        self.mark_a = np.zeros(self.n_nodes, dtype=np.int64)
        self.mark_b = np.zeros(self.n_nodes, dtype=np.int64)
        self.qa = np.zeros(self.n_nodes, dtype=np.int64)
        self.qb = np.zeros(self.n_nodes, dtype=np.int64)
        self.stamp = 0
        self.tally = np.zeros(self.n_nodes, dtype=np.uint8)
        self.backup = np.zeros(m, dtype=np.uint8)
        self.is_source = np.zeros(n, dtype=np.uint8)
        self.constrained = sources is not None
        if sources is not None:
            for v in sources:
                self.is_source[int(v)] ^= 1
        self.budget = sum(self.n_nodes + m if c == K.CM else m for c in self.codes)
        if isinstance(init, str):
            if init not in ("open", "closed"):
                raise ParamError("init must be 'open', 'closed' or an array")
            self.state = np.full(m, 1 if init == "open" else 0, dtype=np.uint8)
            if self.constrained:
                self.state[:] = 1
        else:
            self.state = np.asarray(init, dtype=np.uint8).copy()
            if self.state.shape != (m,):
                raise ParamError("initial configuration has the wrong length")
        if self.constrained and not self.sources_paired():
            from .currents import SourcesNotPairable

            raise SourcesNotPairable("no configuration pairs the sources inside clusters")

    # -- primitives ----------------------------------------------------
    def sources_paired(self, state: np.ndarray | None = None) -> bool:
        s = self.state if state is None else np.asarray(state, dtype=np.uint8)
        return bool(K.sources_paired(s, self.eu, self.ev, self.lu, self.lv, self.parent,
                                     self.is_source, self.ghost_node, self.tally))

    def n_clusters(self, state: np.ndarray | None = None) -> int:
        s = self.state if state is None else np.asarray(state, dtype=np.uint8)
        return int(K.count_clusters(s, self.eu, self.ev, self.lu, self.lv, self.parent))

    def _run(self, n_sweeps: int, record_every: int, U: np.ndarray, out: np.ndarray):
        self.stamp = K.advance(
            self.state, n_sweeps, record_every, out, self.codes, U,
            self.eu, self.ev, self.pe, float(self.params.q), self.lu, self.lv, self.ghost_node,
            self.indptr, self.nbr, self.nedge,
            self.parent, self.active, self.mark_a, self.mark_b, self.qa, self.qb, self.stamp,
            self.constrained, self.is_source, self.tally, self.backup,
        )

    def _chunk(self) -> int:
        return int(max(1, min(4096, (1 << 21) // max(1, self.budget))))

    def step(self, n_sweeps: int = 1) -> np.ndarray:
        """Advance ``n_sweeps`` sweeps of the schedule; returns the (live) state."""
        dummy = np.zeros((0, self.graph.n_edges), dtype=np.uint8)
        chunk = self._chunk()
        done = 0
        while done < n_sweeps:
            c = min(chunk, n_sweeps - done)
            self._run(c, 0, self.rng.random((c, self.budget)), dummy)
            done += c
        return self.state

    def samples(self, n_samples: int, sweeps_between: int = DEFAULT_SWEEPS_BETWEEN) -> np.ndarray:
        """Array ``(n_samples, m)`` of configurations, one every ``sweeps_between`` sweeps."""
        out = np.empty((n_samples, self.graph.n_edges), dtype=np.uint8)
        per_chunk = max(1, self._chunk() // sweeps_between)
        done = 0
        while done < n_samples:
            c = min(per_chunk, n_samples - done)
            U = self.rng.random((c * sweeps_between, self.budget))
            self._run(c * sweeps_between, sweeps_between, U, out[done:done + c])
            done += c
        return out

    def stream(self, n_samples: int, sweeps_between: int = DEFAULT_SWEEPS_BETWEEN) -> Iterator[np.ndarray]:
        per_chunk = max(1, min(64, self._chunk() // sweeps_between))
        done = 0
        while done < n_samples:
            c = min(per_chunk, n_samples - done)
            block = self.samples(c, sweeps_between)
            for row in block:
                yield row.astype(bool)
            done += c


def _csr(n: int, edges: np.ndarray):
    from .lattice import csr_adjacency

    return csr_adjacency(n, edges)


def heat_bath_sweep(
    config: np.ndarray,
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    rng: np.random.Generator | None = None,
    uniforms: np.ndarray | None = None,
) -> np.ndarray:
    """One in-order sweep of exact single-bond heat-bath updates; returns a new configuration.

    Passing ``uniforms`` (one per edge) makes the update a deterministic,
    monotone function of them, which is what the grand coupling uses.
    """
    chain = FKChain(params, graph, bc, rng, schedule=("hb",), init=np.asarray(config, dtype=np.uint8))
    if uniforms is None:
        uniforms = chain.rng.random(graph.n_edges)
    U = np.asarray(uniforms, dtype=np.float64).reshape(1, -1)
    chain._run(1, 0, U, np.zeros((0, graph.n_edges), dtype=np.uint8))
    return chain.state.astype(bool)


def chayes_machta_step(
    config: np.ndarray,
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    rng: np.random.Generator | None = None,
    uniforms: np.ndarray | None = None,
) -> np.ndarray:
    """One Chayes-Machta move (Swendsen-Wang bond resampling for integer ``q``)."""
    if params.q < 1:
        raise ParamError("Chayes-Machta needs q >= 1")
    chain = FKChain(params, graph, bc, rng, schedule=("cm",), init=np.asarray(config, dtype=np.uint8))
    if uniforms is None:
        uniforms = chain.rng.random(chain.budget)
    chain._run(1, 0, np.asarray(uniforms, dtype=np.float64).reshape(1, -1),
               np.zeros((0, graph.n_edges), dtype=np.uint8))
    return chain.state.astype(bool)


def sample_fk(
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    n_samples: int = 1,
    sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
    burn_in: int = DEFAULT_BURN_IN,
    rng: np.random.Generator | int | None = None,
    schedule: Sequence[str] = DEFAULT_SCHEDULE,
) -> Iterator[np.ndarray]:
    """Stream ``n_samples`` configurations (boolean edge vectors) after ``burn_in`` sweeps.

    A sweep applies the moves of ``schedule`` in order (default: one
    Chayes-Machta move then one heat-bath sweep).
    """
    if n_samples < 1 or sweeps_between < 1 or burn_in < 0:
        raise ParamError("counts must be positive")
    chain = FKChain(params, graph, bc, rng, schedule)
    chain.step(burn_in)
    yield from chain.stream(n_samples, sweeps_between)


def sample_fk_array(
    params: Params,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    n_samples: int = 1,
    sweeps_between: int = DEFAULT_SWEEPS_BETWEEN,
    burn_in: int = DEFAULT_BURN_IN,
    rng: np.random.Generator | int | None = None,
    schedule: Sequence[str] = DEFAULT_SCHEDULE,
) -> np.ndarray:
    """Same stream as :func:`sample_fk`, collected into a ``uint8`` array."""
    if n_samples < 1 or sweeps_between < 1 or burn_in < 0:
        raise ParamError("counts must be positive")
    chain = FKChain(params, graph, bc, rng, schedule)
    chain.step(burn_in)
    return chain.samples(n_samples, sweeps_between)


def to_hex(config: np.ndarray) -> str:
    """Hex dump of a configuration; bit ``e`` of the little-endian integer is edge ``e``."""
    bits = np.asarray(config, dtype=np.uint8)
    packed = np.packbits(bits, bitorder="little")
    return packed[::-1].tobytes().hex()


def from_hex(text: str, n_edges: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)[::-1]
    return np.unpackbits(raw, bitorder="little")[:n_edges].astype(bool)


def encode(configs: np.ndarray) -> np.ndarray:
    """Integer code of each configuration row (bit ``e`` = edge ``e``); needs ``m <= 62``."""
    configs = np.asarray(configs, dtype=np.int64)
    return configs @ (np.int64(1) << np.arange(configs.shape[-1], dtype=np.int64))

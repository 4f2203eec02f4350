"""Configuration-level events on books: clusters, block goodness, bridging,
annulus disconnection, dual arms, rectangle crossings and spin observables.

Detectors take a boolean edge vector ``config`` in the lattice's edge order.
The single-configuration detectors return an :class:`EventReport` with a
witness; the ``*Detector`` classes evaluate many configurations quickly.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .lattice import (
    FACE,
    OUTER,
    SPINE,
    Block,
    BlockOutOfRange,
    BookLattice,
    BoundaryCondition,
    Free,
    Graph,
    PageDual,
    Wiring,
    annulus_edge_mask,
    build_page_dual,
    contract,
    region_edges,
    resolve_boundary,
)


class ScaleOrder(ValueError):
    pass


@dataclass
class EventReport:
    name: str
    outcome: bool
    witness: Any = None
    params: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.outcome

    def row(self, run_id: str = "") -> dict:
        return {"run_id": run_id, "event": self.name,
                "params": ";".join(f"{k}={v}" for k, v in self.params.items()),
                "outcome": int(self.outcome)}


REPORT_FIELDS = ["run_id", "event", "params", "outcome"]


def reports_to_csv(reports: Sequence[EventReport], run_id: str = "") -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row(run_id))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# clusters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterLabeling:
    """Cluster id per vertex (wired classes merged) and per-cluster spine counts."""

    labels: np.ndarray
    n_clusters: int
    spine_count: np.ndarray

    def same(self, x: int, y: int) -> bool:
        return self.labels[x] == self.labels[y]


def _components(n: int, edges: np.ndarray) -> tuple[int, np.ndarray]:
    g = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)


def label_clusters(
    config: np.ndarray,
    graph: Graph,
    bc: BoundaryCondition | Wiring = Free(),
    vertex_mask: np.ndarray | None = None,
) -> ClusterLabeling:
    """Clusters of the open edges (restricted to edges inside ``vertex_mask`` if given).

    Vertices outside ``vertex_mask`` get label ``-1``.
    """
    config = np.asarray(config, dtype=bool)
    wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
    use = config.copy()
    if vertex_mask is not None:
        use &= region_edges(graph, vertex_mask)
    ue, n_units, _ = contract(graph, wiring)
    n_comp, unit_label = _components(n_units, ue[use])
    units, _ = wiring.units()
    labels = unit_label[units]
    if vertex_mask is not None:
        labels = np.where(vertex_mask, labels, -1)
    is_spine = np.zeros(graph.n_vertices, dtype=bool)
    if isinstance(graph, BookLattice):
        is_spine[graph.spine_vertices()] = True
    sel = is_spine & (labels >= 0)
    spine_count = np.bincount(labels[sel], minlength=n_comp)
    return ClusterLabeling(labels, n_comp, spine_count)


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


def block_cluster(config: np.ndarray, lattice: BookLattice, block: Block) -> tuple[np.ndarray, int]:
    """``(vertices, spine_count)`` of the block's dominant cluster.

    Dominant: largest spine intersection, ties broken by smallest spine ``x``.
    """
    mask = block.mask(lattice)
    lab = label_clusters(config, lattice, Free(), mask)
    spine = lattice.spine_vertices()
    spine = spine[mask[spine]]
    spine_labels = lab.labels[spine]
    best = max(np.unique(spine_labels), key=lambda c: (lab.spine_count[c], -lattice.vx[spine[spine_labels == c]].min()))
    return np.flatnonzero(lab.labels == best), int(lab.spine_count[best])


def is_theta_good(config: np.ndarray, lattice: BookLattice, K: int, i: int, theta: float = 0.75) -> EventReport:
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    cluster, count = block_cluster(config, lattice, Block(K, i))
    ok = count >= 2 * theta * K
    return EventReport("theta_good", bool(ok), (cluster, count), {"K": K, "i": i, "theta": theta})


def bridging_region(lattice: BookLattice, K: int, C: int) -> np.ndarray:
    """Vertices of ``B_CK`` together with all ``K``-blocks of index ``|i| <= C``."""
    lo, hi = -(C + 1) * K, (C + 1) * K
    top = max(C, 1) * K
    if lo < -lattice.width or hi - 1 > lattice.width or top > lattice.height:
        raise BlockOutOfRange(f"bridging region for K={K}, C={C} does not fit in {lattice.name}")
    return (lattice.vx >= lo) & (lattice.vx < hi) & (lattice.vy <= top)


def is_bridged(config: np.ndarray, lattice: BookLattice, K: int, C: int, i: int) -> EventReport:
    """Two 3/4-good blocks on either side of ``B_K^i`` whose dominant clusters connect around it."""
    if abs(i) > C:
        raise BlockOutOfRange("|i| must not exceed C")
    region = bridging_region(lattice, K, C) & ~Block(K, i).mask(lattice)
    params = {"K": K, "C": C, "i": i}
    left = [j for j in range(-C, i - 1)]
    right = [j for j in range(i + 2, C + 1)]
    if not left or not right:
        return EventReport("bridged", False, None, params)
    lab = label_clusters(config, lattice, Free(), region)

    def good_label(j):
        cluster, count = block_cluster(config, lattice, Block(K, j))
        return lab.labels[cluster[0]] if count >= 1.5 * K else None

    left_labels = {good_label(j): j for j in reversed(left)}
    left_labels.pop(None, None)
    for j in right:
        lbl = good_label(j)
        if lbl is not None and lbl in left_labels:
            return EventReport("bridged", True, (left_labels[lbl], j), params)
    return EventReport("bridged", False, None, params)


# ---------------------------------------------------------------------------
# crossing kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def crossing(open_, du, dv, start, end, parent, hit):
    """Is some ``start`` node joined to some ``end`` node through edges with ``open_`` set?"""
    for i in range(parent.shape[0]):
        parent[i] = i
        hit[i] = 0
    for j in range(du.shape[0]):
        if open_[j]:
            a = _find(parent, du[j])
            b = _find(parent, dv[j])
            if a != b:
                parent[a] = b
    for i in range(start.shape[0]):
        hit[_find(parent, start[i])] = 1
    for i in range(end.shape[0]):
        if hit[_find(parent, end[i])]:
            return True
    return False


@njit(cache=True)
def crossing_batch(configs, edge_ids, invert, du, dv, start, end, n_nodes):
    """``crossing`` for every row of ``configs``; edge ``j`` is open iff ``configs[r, edge_ids[j]] != invert``."""
    out = np.zeros(configs.shape[0], dtype=np.bool_)
    parent = np.empty(n_nodes, dtype=np.int64)
    hit = np.zeros(n_nodes, dtype=np.uint8)
    open_ = np.empty(edge_ids.shape[0], dtype=np.bool_)
    for r in range(configs.shape[0]):
        for j in range(edge_ids.shape[0]):
            open_[j] = (configs[r, edge_ids[j]] != 0) != invert
        out[r] = crossing(open_, du, dv, start, end, parent, hit)
    return out


@dataclass(frozen=True)
class _Crossing:
    """A crossing problem: nodes, edges tied to lattice edges, start and end node sets."""

    n_nodes: int
    edge_ids: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    start: np.ndarray
    end: np.ndarray
    dual: bool

    def __call__(self, config: np.ndarray) -> bool:
        op = np.asarray(config, dtype=bool)[self.edge_ids] != self.dual
        parent = np.empty(self.n_nodes, dtype=np.int64)
        hit = np.zeros(self.n_nodes, dtype=np.uint8)
        return bool(crossing(op, self.du, self.dv, self.start, self.end, parent, hit))

    def batch(self, configs: np.ndarray) -> np.ndarray:
        configs = np.ascontiguousarray(configs, dtype=np.uint8)
        return crossing_batch(configs, self.edge_ids, self.dual, self.du, self.dv, self.start, self.end, self.n_nodes)

    def path(self, config: np.ndarray) -> list[int] | None:
        """Node path from the start set to the end set, or None."""
        op = np.asarray(config, dtype=bool)[self.edge_ids] != self.dual
        adj: dict[int, list[int]] = {}
        for a, b in zip(self.du[op], self.dv[op]):
            adj.setdefault(int(a), []).append(int(b))
            adj.setdefault(int(b), []).append(int(a))
        ends = set(self.end.tolist())
        prev = {int(s): -1 for s in self.start}
        queue = deque(prev)
        while queue:
            x = queue.popleft()
            if x in ends:
                out = [x]
                while prev[out[-1]] >= 0:
                    out.append(prev[out[-1]])
                return out[::-1]
            for y in adj.get(x, ()):
                if y not in prev:
                    prev[y] = x
                    queue.append(y)
        return None


def _check_scales(k: int, K: int, extent: int):
    if not 1 <= k < K:
        raise ScaleOrder(f"need 1 <= k < K, got k={k}, K={K}")
    if K > extent:
        raise ScaleOrder(f"K={K} exceeds the lattice extent {extent}")


def _extent(lattice: BookLattice) -> int:
    return min(lattice.width, lattice.height)


def arc_problem(lattice: BookLattice, k: int, K: int) -> _Crossing:
    """Primal problem for F(k, K): within one page and the annulus, join spine ``[-K,-k]`` to ``[k,K]``."""
    key = ("arc", k, K)
    if key not in lattice._cache:
        _check_scales(k, K, _extent(lattice))
        eids, ends, n_local = lattice.page_split
        ann = annulus_edge_mask(lattice, k, K)[eids]
        L = lattice.width
        xs = np.arange(-L, L + 1)
        offs = np.arange(lattice.pages)[:, None] * n_local
        left = (offs + (xs[(xs >= -K) & (xs <= -k)] + L)[None, :]).ravel()
        right = (offs + (xs[(xs >= k) & (xs <= K)] + L)[None, :]).ravel()
        lattice._cache[key] = _Crossing(n_local * lattice.pages, eids[ann].copy(), ends[ann, 0].copy(),
                                        ends[ann, 1].copy(), left, right, dual=False)
    return lattice._cache[key]


def _dual_problem(lattice: BookLattice, dual: PageDual, k: int, K: int) -> _Crossing:
    key = ("dual", dual.page, dual.spine_bc, k, K)
    if key not in dual._cache:
        _check_scales(k, K, _extent(lattice))
        ann = annulus_edge_mask(lattice, k, K, with_spine=dual.spine_bc == "plane")
        sel = ann[dual.primal]
        r = np.max(np.abs(dual.centers), axis=1)
        start = np.flatnonzero((dual.kind == FACE) & (r < k))
        end = np.flatnonzero(((dual.kind == FACE) & (r > K)) | (dual.kind == OUTER))
        dual._cache[key] = _Crossing(dual.n_vertices, dual.primal[sel].copy(), dual.edges[sel, 0].copy(),
                                     dual.edges[sel, 1].copy(), start, end, dual=True)
    return dual._cache[key]


def page_dual(lattice: BookLattice, u: int, spine_bc: str = "free") -> PageDual:
    key = ("page_dual", u, spine_bc)
    if key not in lattice._cache:
        lattice._cache[key] = build_page_dual(lattice, u, spine_bc)
    return lattice._cache[key]


def plane_dual(lattice: BookLattice) -> PageDual:
    from .lattice import build_plane_dual

    if ("plane_dual",) not in lattice._cache:
        lattice._cache[("plane_dual",)] = build_plane_dual(lattice)
    return lattice._cache[("plane_dual",)]


# ---------------------------------------------------------------------------
# annulus events
# ---------------------------------------------------------------------------


def event_F(config: np.ndarray, lattice: BookLattice, k: int, K: int) -> EventReport:
    """Some page holds an open arc in the annulus ``k <= |v| <= K`` from spine ``[-K,-k]`` to ``[k,K]``.

    The witness is ``(page, vertex path)`` in lattice vertex ids.
    """
    prob = arc_problem(lattice, k, K)
    params = {"k": k, "K": K}
    if not prob(config):
        return EventReport("F", False, None, params)
    path = prob.path(config)
    _, _, n_local = lattice.page_split
    u = path[0] // n_local
    vertices = [_local_to_vertex(lattice, node) for node in path]
    return EventReport("F", True, (u, vertices), params)


def _local_to_vertex(lattice: BookLattice, node: int) -> int:
    _, _, n_local = lattice.page_split
    u, loc = divmod(node, n_local)
    row = 2 * lattice.width + 1
    y, xi = divmod(loc, row)
    return lattice.vertex(u, xi - lattice.width, y)


def dual_arm(config: np.ndarray, dual: PageDual, k: int, K: int, lattice: BookLattice) -> EventReport:
    """Dual-open path from the faces inside ``|.| < k`` to the faces outside ``|.| > K``.

    Only duals of annulus edges are used, so a page dual never passes below the
    spine; a plane dual (see :func:`plane_dual`) also crosses spine edges.
    The witness is the dual vertex path.
    """
    prob = _dual_problem(lattice, dual, k, K)
    params = {"k": k, "K": K, "page": dual.page, "spine": dual.spine_bc}
    if not prob(config):
        return EventReport("dual_arm", False, None, params)
    return EventReport("dual_arm", True, prob.path(config), params)


def event_F_dual(config: np.ndarray, lattice: BookLattice, k: int, K: int) -> bool:
    """True iff every page has a dual crossing of the annulus (the complement of F)."""
    return all(_dual_problem(lattice, page_dual(lattice, u), k, K)(config) for u in range(lattice.pages))


class DisconnectionDetector:
    """Evaluates ``1[F(k,K)^c]`` for several scale pairs on batches of configurations."""

    def __init__(self, lattice: BookLattice, pairs: Sequence[tuple[int, int]]):
        self.lattice, self.pairs = lattice, list(pairs)
        self.problems = [[_dual_problem(lattice, page_dual(lattice, u), k, K) for u in range(lattice.pages)]
                         for k, K in self.pairs]

    def page_crossings(self, configs: np.ndarray) -> np.ndarray:
        """Boolean array ``(rows, len(pairs), pages)``."""
        configs = np.ascontiguousarray(configs, dtype=np.uint8)
        out = np.zeros((len(configs), len(self.pairs), self.lattice.pages), dtype=bool)
        for j, probs in enumerate(self.problems):
            for u, pr in enumerate(probs):
                out[:, j, u] = pr.batch(configs)
        return out

    def __call__(self, configs: np.ndarray) -> np.ndarray:
        return self.page_crossings(configs).all(axis=2)


class ArmDetector:
    """Dual arm indicator for several ``(k, K)`` pairs on one page dual or the plane dual."""

    def __init__(self, lattice: BookLattice, pairs: Sequence[tuple[int, int]], dual: PageDual):
        self.pairs = list(pairs)
        self.problems = [_dual_problem(lattice, dual, k, K) for k, K in self.pairs]

    def __call__(self, configs: np.ndarray) -> np.ndarray:
        configs = np.ascontiguousarray(configs, dtype=np.uint8)
        return np.stack([p.batch(configs) for p in self.problems], axis=1)


# ---------------------------------------------------------------------------
# rectangles
# ---------------------------------------------------------------------------


def _rect_edges(lattice: BookLattice, u: int, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    inside = (lattice.vx >= x0) & (lattice.vx <= x1) & (lattice.vy >= y0) & (lattice.vy <= y1)
    inside &= (lattice.vpage == u) | (lattice.vpage == SPINE)
    mask = region_edges(lattice, inside)
    mask &= (lattice.edge_page == u) | (lattice.edge_page == SPINE)
    return mask


def rectangle_problem(lattice: BookLattice, u: int, x0: int, x1: int, y0: int, y1: int) -> _Crossing:
    """Open left-right crossing of ``[x0,x1] x [y0,y1]`` in page ``u``."""
    mask = _rect_edges(lattice, u, x0, x1, y0, y1)
    ids = np.flatnonzero(mask)
    ys = np.arange(y0, y1 + 1)
    left = np.array([lattice.vertex(u, x0, y) for y in ys])
    right = np.array([lattice.vertex(u, x1, y) for y in ys])
    return _Crossing(lattice.n_vertices, ids, lattice.edges[ids, 0].copy(), lattice.edges[ids, 1].copy(),
                     left, right, dual=False)


def dual_rectangle_problem(dual: PageDual, lattice: BookLattice, x0: int, x1: int, y0: int, y1: int) -> _Crossing:
    """Dual top-bottom crossing of the dual rectangle matching ``[x0,x1] x [y0,y1]``.

    Dual vertices: faces in columns ``x0..x1-1`` and rows ``y0-1/2 .. y1+1/2``;
    dual edges cross the rectangle's edges except the vertical edges on the
    columns ``x0`` and ``x1``.
    """
    mask = _rect_edges(lattice, dual.page, x0, x1, y0, y1)
    a, b = lattice.edges[:, 0], lattice.edges[:, 1]
    vertical = lattice.vx[a] == lattice.vx[b]
    mask &= ~(vertical & ((lattice.vx[a] == x0) | (lattice.vx[a] == x1)))
    sel = mask[dual.primal]
    top, bottom = [], []
    for j in np.flatnonzero(sel & ~vertical[dual.primal]):
        y = lattice.vy[lattice.edges[dual.primal[j], 0]]
        below, above = dual.edges[j]
        if y == y1:
            top.append(above)
        if y == y0:
            bottom.append(below)
    return _Crossing(dual.n_vertices, dual.primal[sel].copy(), dual.edges[sel, 0].copy(), dual.edges[sel, 1].copy(),
                     np.unique(bottom), np.unique(top), dual=True)


def rectangle_crossing(config: np.ndarray, lattice: BookLattice, u: int, x0: int, x1: int, y0: int, y1: int) -> bool:
    return rectangle_problem(lattice, u, x0, x1, y0, y1)(config)


def dual_rectangle_crossing(config: np.ndarray, dual: PageDual, lattice: BookLattice,
                            x0: int, x1: int, y0: int, y1: int) -> bool:
    return dual_rectangle_problem(dual, lattice, x0, x1, y0, y1)(config)


# ---------------------------------------------------------------------------
# spins
# ---------------------------------------------------------------------------


@njit(cache=True)
def _roots_batch(configs, eu, ev, n_units):
    rows = configs.shape[0]
    out = np.empty((rows, n_units), dtype=np.int64)
    parent = np.empty(n_units, dtype=np.int64)
    for r in range(rows):
        for i in range(n_units):
            parent[i] = i
        for e in range(eu.shape[0]):
            if configs[r, e]:
                a = _find(parent, eu[e])
                b = _find(parent, ev[e])
                if a != b:
                    parent[a] = b
        for i in range(n_units):
            out[r, i] = _find(parent, i)
    return out


class SpinObservables:
    """Spin estimators from FK samples on ``graph`` with boundary ``bc``.

    ``colour`` draws Edwards-Sokal spins (each cluster uniform in ``0..q-1``,
    the ghost cluster ``tau``).  ``correlation`` is the conditional
    expectation of the spin observable given the bonds, which has the same
    mean and smaller variance.
    """

    def __init__(self, graph: Graph, bc: BoundaryCondition | Wiring, q: int):
        if int(q) != q or q < 2:
            raise ValueError("spin observables need an integer q >= 2")
        self.graph, self.q = graph, int(q)
        self.wiring = bc if isinstance(bc, Wiring) else resolve_boundary(graph, bc)
        ue, self.n_units, self.ghost = contract(graph, self.wiring)
        self.eu, self.ev = np.ascontiguousarray(ue[:, 0]), np.ascontiguousarray(ue[:, 1])
        self.units, _ = self.wiring.units()
        self.tau = self.wiring.tau % self.q

    def roots(self, configs: np.ndarray) -> np.ndarray:
        configs = np.ascontiguousarray(np.atleast_2d(configs), dtype=np.uint8)
        return _roots_batch(configs, self.eu, self.ev, self.n_units)

    def colour(self, configs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Spins ``(rows, n_vertices)`` with values in ``0..q-1``."""
        roots = self.roots(configs)
        cluster_spin = rng.integers(0, self.q, size=roots.shape)
        if self.ghost >= 0:
            g = roots[:, self.ghost]
            cluster_spin[np.arange(len(roots)), g] = self.tau
        unit_spin = np.take_along_axis(cluster_spin, roots, axis=1)
        return unit_spin[:, self.units]

    def spin_product(self, spins: np.ndarray, A: Sequence[int]) -> np.ndarray:
        """Per sample: ``prod sigma_x`` (Ising signs) for ``q = 2``, ``prod 1[s_x = tau]`` otherwise."""
        s = np.atleast_2d(spins)[:, list(A)]
        if self.q == 2:
            return np.prod(1 - 2 * s, axis=1).astype(float)
        return np.all(s == self.tau, axis=1).astype(float)

    def magnetization(self, spins: np.ndarray, x: int) -> np.ndarray:
        return (np.atleast_2d(spins)[:, x] == self.tau).astype(float) - 1.0 / self.q

    def correlation(self, configs: np.ndarray, A: Sequence[int]) -> np.ndarray:
        """``E[spin_product | bonds]`` per sample."""
        roots = self.roots(configs)
        rows = len(roots)
        out = np.ones(rows)
        groot = roots[:, self.ghost] if self.ghost >= 0 else np.full(rows, -1)
        counts: dict[int, int] = {}
        for v in A:
            counts[int(self.units[int(v)])] = counts.get(int(self.units[int(v)]), 0) + 1
        unit_ids = np.array(list(counts), dtype=np.int64)
        mult = np.array([counts[u] for u in unit_ids], dtype=np.int64)
        r = roots[:, unit_ids]
        for i in range(rows):
            tally: dict[int, int] = {}
            for c, m in zip(r[i], mult):
                tally[int(c)] = tally.get(int(c), 0) + int(m)
            val = 1.0
            for c, m in tally.items():
                if c == groot[i]:
                    if self.q == 2 and m % 2 and self.tau == 1:
                        val = -val
                elif self.q == 2:
                    if m % 2:
                        val = 0.0
                        break
                else:
                    val /= self.q
            out[i] = val
        return out

    def ghost_connection(self, configs: np.ndarray, x: int) -> np.ndarray:
        """``1[x <-> ghost]`` per sample."""
        if self.ghost < 0:
            raise ValueError("no ghost in this boundary condition")
        roots = self.roots(configs)
        return (roots[:, self.units[x]] == roots[:, self.ghost]).astype(float)

    def connected(self, configs: np.ndarray, x: int, y: int) -> np.ndarray:
        roots = self.roots(configs)
        return (roots[:, self.units[x]] == roots[:, self.units[y]]).astype(float)


def mean_stderr(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = len(values)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def verify_witness(report: EventReport, config: np.ndarray, lattice: BookLattice, dual: PageDual | None = None) -> bool:
    """Re-check a positive report's witness against the configuration."""
    config = np.asarray(config, dtype=bool)
    if not report.outcome:
        return report.witness is None
    if report.name == "F":
        u, path = report.witness
        k, K = report.params["k"], report.params["K"]
        lookup = {}
        for e, (a, b) in enumerate(lattice.edges):
            if lattice.edge_page[e] == u:
                lookup[(min(a, b), max(a, b))] = e
        r = np.maximum(np.abs(lattice.vx), lattice.vy)
        if not all(k <= r[v] <= K for v in path):
            return False
        if not (lattice.vy[path[0]] == 0 and -K <= lattice.vx[path[0]] <= -k):
            return False
        if not (lattice.vy[path[-1]] == 0 and k <= lattice.vx[path[-1]] <= K):
            return False
        for a, b in zip(path, path[1:]):
            e = lookup.get((min(a, b), max(a, b)))
            if e is None or not config[e]:
                return False
        return True
    if report.name == "dual_arm":
        k, K = report.params["k"], report.params["K"]
        path = report.witness
        r = np.max(np.abs(dual.centers), axis=1)
        if not (dual.kind[path[0]] == FACE and r[path[0]] < k):
            return False
        if not (dual.kind[path[-1]] == OUTER or r[path[-1]] > K):
            return False
        ann = annulus_edge_mask(lattice, k, K, with_spine=dual.spine_bc == "plane")
        lookup = {}
        for j, (a, b) in enumerate(dual.edges):
            if ann[dual.primal[j]] and not config[dual.primal[j]]:
                lookup[(min(a, b), max(a, b))] = j
        return all((min(a, b), max(a, b)) in lookup for a, b in zip(path, path[1:]))
    if report.name == "theta_good":
        cluster, count = report.witness
        return count >= 2 * report.params["theta"] * report.params["K"]
    if report.name == "bridged":
        i_minus, i_plus = report.witness
        K, C, i = report.params["K"], report.params["C"], report.params["i"]
        return (-C <= i_minus <= i - 2 and i + 2 <= i_plus <= C
                and is_theta_good(config, lattice, K, i_minus).outcome
                and is_theta_good(config, lattice, K, i_plus).outcome)
    raise ValueError(f"no witness check for {report.name}")

"""Finite book lattices, blocks, boundary conditions and per-page duals.

A book with ``N`` pages is ``N`` copies of the half-plane ``Z x N`` glued
along the line ``y = 0`` (the spine).  Pages share the spine vertices and the
spine edges; each spine edge appears once.

Vertex numbering of :class:`BookLattice`:

* spine vertex ``(x, 0)``           -> ``x + L``
* page vertex ``(u, x, y)``, ``y>0`` -> ``(2L+1) + u*(2L+1)*H + (y-1)*(2L+1) + (x+L)``

Edge numbering: spine edges left to right, then for each page its vertical
edges (row by row, ``y = 0 .. H-1``) followed by its horizontal edges
(``y = 1 .. H``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPINE = -1


class LatticeError(ValueError):
    pass


class BlockOutOfRange(LatticeError):
    pass


class BoundaryError(ValueError):
    pass


class Graph:
    """Finite simple graph with spine-tagged edges.

    ``spine[e]`` marks edges carrying the spine weight; ``boundary`` lists the
    vertices that boundary conditions act on (``dG``).
    """

    def __init__(self, n_vertices: int, edges, spine=None, boundary=None, name: str = ""):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if n_vertices < 0:
            raise LatticeError("negative vertex count")
        if edges.size and (edges.min() < 0 or edges.max() >= n_vertices):
            raise LatticeError("edge endpoint out of range")
        self.n_vertices = int(n_vertices)
        self.edges = edges
        self.edges.setflags(write=False)
        m = len(edges)
        self.spine = np.zeros(m, dtype=bool) if spine is None else np.asarray(spine, dtype=bool).copy()
        if self.spine.shape != (m,):
            raise LatticeError("spine flags must have one entry per edge")
        self.spine.setflags(write=False)
        b = np.arange(0) if boundary is None else np.asarray(sorted(set(int(v) for v in boundary)), dtype=np.int64)
        self.boundary = b
        self.boundary.setflags(write=False)
        self.name = name

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __repr__(self) -> str:
        return f"Graph({self.name!r}, n={self.n_vertices}, m={self.n_edges})"

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR adjacency ``(indptr, neighbour, edge_id)``."""
        return csr_adjacency(self.n_vertices, self.edges)

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)

    def subgraph(self, edge_mask, name: str = "") -> "Graph":
        """Same vertex set, edges restricted to ``edge_mask``."""
        edge_mask = np.asarray(edge_mask, dtype=bool)
        return Graph(self.n_vertices, self.edges[edge_mask], self.spine[edge_mask], self.boundary, name=name)

    # -- serialization -------------------------------------------------
    def to_text(self) -> str:
        lines = [f"graph {self.name or 'unnamed'}", f"vertices {self.n_vertices}", f"edges {self.n_edges}"]
        if len(self.boundary):
            lines.append("boundary " + " ".join(str(v) for v in self.boundary))
        for (a, b), s in zip(self.edges, self.spine):
            lines.append(f"edge {a} {b} {'spine' if s else 'page'}")
        lines.append("end")
        return "\n".join(lines) + "\n"


def csr_adjacency(n: int, edges: np.ndarray):
    m = len(edges)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(m), np.arange(m)])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64), eid[order].astype(np.int64)


def parse_graphs(text: str) -> list[Graph]:
    """Parse one or more ``graph ... end`` records (see :meth:`Graph.to_text`)."""
    graphs = []
    cur = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "graph":
            cur = {"name": rest[0] if rest else "", "edges": [], "spine": [], "boundary": []}
        elif cur is None:
            raise LatticeError(f"record outside a graph block: {raw!r}")
        elif key == "vertices":
            cur["n"] = int(rest[0])
        elif key == "edges":
            cur["m"] = int(rest[0])
        elif key == "boundary":
            cur["boundary"] = [int(v) for v in rest]
        elif key == "edge":
            cur["edges"].append((int(rest[0]), int(rest[1])))
            kind = rest[2] if len(rest) > 2 else "page"
            if kind not in ("spine", "page"):
                raise LatticeError(f"unknown edge kind {kind!r}")
            cur["spine"].append(kind == "spine")
        elif key == "end":
            if "m" in cur and cur["m"] != len(cur["edges"]):
                raise LatticeError(f"graph {cur['name']}: declared {cur['m']} edges, found {len(cur['edges'])}")
            graphs.append(Graph(cur["n"], cur["edges"], cur["spine"], cur["boundary"], cur["name"]))
            cur = None
        else:
            raise LatticeError(f"unknown key {key!r}")
    if cur is not None:
        raise LatticeError("unterminated graph block")
    return graphs


def grid_graph(nx: int, ny: int, spine_row: bool = True, name: str = "") -> Graph:
    """``nx`` by ``ny`` vertex grid; the bottom row is tagged as spine."""
    idx = lambda x, y: y * nx + x  # noqa: E731
    edges, spine = [], []
    for y in range(ny):
        for x in range(nx - 1):
            edges.append((idx(x, y), idx(x + 1, y)))
            spine.append(spine_row and y == 0)
    for y in range(ny - 1):
        for x in range(nx):
            edges.append((idx(x, y), idx(x, y + 1)))
            spine.append(False)
    boundary = [idx(x, y) for y in range(ny) for x in range(nx) if x in (0, nx - 1) or y in (0, ny - 1)]
    return Graph(nx * ny, edges, spine, boundary, name or f"grid{nx}x{ny}")


# ---------------------------------------------------------------------------
# book lattice
# ---------------------------------------------------------------------------


class BookLattice(Graph):
    """Book with ``pages`` half-plane pages truncated to ``[-L, L] x [0, H]``."""

    def __init__(self, pages: int, width: int, height: int):
        if pages < 1:
            raise LatticeError("a book needs at least one page")
        if width < 0 or height < 1:
            raise LatticeError("width must be >= 0 and height >= 1")
        self.pages, self.width, self.height = int(pages), int(width), int(height)
        L, H, N = self.width, self.height, self.pages
        row = 2 * L + 1
        n_spine = row
        n = n_spine + N * row * H

        vx = np.empty(n, dtype=np.int64)
        vy = np.empty(n, dtype=np.int64)
        vpage = np.empty(n, dtype=np.int64)
        xs = np.arange(-L, L + 1)
        vx[:n_spine], vy[:n_spine], vpage[:n_spine] = xs, 0, SPINE
        for u in range(N):
            base = n_spine + u * row * H
            for y in range(1, H + 1):
                s = base + (y - 1) * row
                vx[s:s + row], vy[s:s + row], vpage[s:s + row] = xs, y, u
        self.vx, self.vy, self.vpage = vx, vy, vpage

        edges = [np.stack([np.arange(0, 2 * L), np.arange(1, 2 * L + 1)], axis=1)]
        kinds = [np.full(2 * L, SPINE)]
        for u in range(N):
            vert = []
            for y in range(H):
                for x in range(-L, L + 1):
                    vert.append((self.vertex(u, x, y), self.vertex(u, x, y + 1)))
            hor = []
            for y in range(1, H + 1):
                for x in range(-L, L):
                    hor.append((self.vertex(u, x, y), self.vertex(u, x + 1, y)))
            e = np.array(vert + hor, dtype=np.int64).reshape(-1, 2)
            edges.append(e)
            kinds.append(np.full(len(e), u))
        edges = np.concatenate(edges)
        self.edge_page = np.concatenate(kinds).astype(np.int64)
        outer = np.flatnonzero((np.abs(vx) == L) | (vy == H))
        super().__init__(n, edges, self.edge_page == SPINE, outer, name=f"book-N{N}-L{L}-H{H}")
        for a in (self.vx, self.vy, self.vpage, self.edge_page):
            a.setflags(write=False)
        self._cache: dict = {}

    def vertex(self, u: int, x: int, y: int) -> int:
        """Index of the vertex at ``(x, y)`` of page ``u`` (``y = 0`` is the spine)."""
        L, H = self.width, self.height
        if not (-L <= x <= L and 0 <= y <= H):
            raise LatticeError(f"({x}, {y}) outside the lattice")
        if y == 0:
            return x + L
        if not 0 <= u < self.pages:
            raise LatticeError(f"page {u} out of range")
        row = 2 * L + 1
        return row + u * row * H + (y - 1) * row + (x + L)

    def spine_vertices(self) -> np.ndarray:
        return np.arange(2 * self.width + 1)

    def outer_boundary(self) -> np.ndarray:
        return self.boundary

    def box_mask(self, K: int) -> np.ndarray:
        """Vertices of the box of radius ``K`` (sup-norm in page coordinates)."""
        return np.maximum(np.abs(self.vx), self.vy) <= K

    def box_boundary(self, K: int) -> np.ndarray:
        """Vertices at sup-distance exactly ``K`` (the inner vertex boundary of the box)."""
        return np.flatnonzero(np.maximum(np.abs(self.vx), self.vy) == K)

    def describe(self) -> str:
        head = f"book pages={self.pages} width={self.width} height={self.height}\n"
        return head + self.to_text()

    # -- page-split coordinates: the spine is duplicated once per page ----
    @cached_property
    def page_split(self) -> tuple[np.ndarray, np.ndarray, int]:
        """``(edge_ids, endpoints, n_local)`` for non-spine edges.

        Endpoints are page-local ids ``u * n_local + y*(2L+1) + x + L`` so that
        connectivity inside one page never leaks through the spine into another.
        """
        L, H = self.width, self.height
        n_local = (2 * L + 1) * (H + 1)
        eids = np.flatnonzero(self.edge_page != SPINE)
        u = self.edge_page[eids]
        a, b = self.edges[eids, 0], self.edges[eids, 1]
        loc = lambda v: self.vy[v] * (2 * L + 1) + self.vx[v] + L  # noqa: E731
        ends = np.stack([u * n_local + loc(a), u * n_local + loc(b)], axis=1)
        return eids, ends, n_local

    def isomorphism_to_plane(self) -> dict[int, tuple[int, int]]:
        """For ``N = 2``: map each vertex to ``Z^2`` (page 1 reflected below the spine)."""
        if self.pages != 2:
            raise LatticeError("only the 2-page book is a piece of Z^2")
        sign = np.where(self.vpage == 1, -1, 1)
        return {v: (int(self.vx[v]), int(sign[v] * self.vy[v])) for v in range(self.n_vertices)}


def build_book(N: int, L: int, H: int | None = None) -> BookLattice:
    """Construct the ``N``-page book truncated to ``[-L, L] x [0, H]`` (``H`` defaults to ``L``)."""
    if H is None:
        H = L
    if N < 1 or L < 0 or H < 1:
        raise LatticeError(f"invalid book dimensions N={N}, L={L}, H={H}")
    return BookLattice(N, L, H)


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """``K``-block of index ``i``: every page's ``[iK-K, iK+K) x [0, K]``."""

    scale: int
    index: int

    @property
    def x_range(self) -> tuple[int, int]:
        """Half-open x-interval ``[lo, hi)``."""
        return (self.index - 1) * self.scale, (self.index + 1) * self.scale

    def mask(self, lattice: BookLattice) -> np.ndarray:
        lo, hi = self.x_range
        if lo < -lattice.width or hi - 1 > lattice.width or self.scale > lattice.height:
            raise BlockOutOfRange(f"block K={self.scale} i={self.index} does not fit in {lattice.name}")
        return (lattice.vx >= lo) & (lattice.vx < hi) & (lattice.vy <= self.scale)

    def spine_x(self) -> np.ndarray:
        lo, hi = self.x_range
        return np.arange(lo, hi)


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class Wired:
    """Wire ``vertices`` together (``None``: the graph boundary)."""

    vertices: tuple | None = None


@dataclass(frozen=True)
class Ghost:
    """Wire ``vertices`` (``None``: the graph boundary) to a ghost carrying spin ``tau``."""

    vertices: tuple | None = None
    tau: int = 0


@dataclass(frozen=True)
class Partition:
    classes: tuple = ()


@dataclass(frozen=True)
class BernoulliSpine:
    """Quenched disorder: spine sites with ``eta_x = 1`` (``eta ~ Bernoulli(rho)``) are wired.

    With ``ghost=True`` the wired sites are attached to the ghost instead.
    """

    rho: float
    seed: int
    ghost: bool = False

    def eta(self, n_spine: int) -> np.ndarray:
        if not 0.0 <= self.rho <= 1.0:
            raise BoundaryError("rho must lie in [0, 1]")
        return np.random.default_rng(self.seed).random(n_spine) < self.rho


BoundaryCondition = Free | Wired | Ghost | Partition | BernoulliSpine


@dataclass(frozen=True, eq=False)
class Wiring:
    """Resolved boundary condition.

    ``labels[v]`` is the wired class of ``v`` or ``-1``; class ``ghost_class``
    (if ``>= 0``) is attached to the ghost and carries spin ``tau``.
    """

    labels: np.ndarray
    n_classes: int
    ghost_class: int = -1
    tau: int = 0

    @property
    def has_ghost(self) -> bool:
        return self.ghost_class >= 0

    def partition(self) -> list[frozenset]:
        out = [frozenset(np.flatnonzero(self.labels == c).tolist()) for c in range(self.n_classes)]
        out += [frozenset([int(v)]) for v in np.flatnonzero(self.labels < 0)]
        return out

    def ghost_vertices(self) -> frozenset:
        if not self.has_ghost:
            return frozenset()
        return frozenset(np.flatnonzero(self.labels == self.ghost_class).tolist())

    def units(self) -> tuple[np.ndarray, int]:
        """Map vertices to contracted units: unwired ``v -> v``, class ``c -> n + c``."""
        n = len(self.labels)
        return np.where(self.labels >= 0, n + self.labels, np.arange(n)), n + self.n_classes

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Wiring)
            and np.array_equal(self.labels, other.labels)
            and (self.n_classes, self.ghost_class, self.tau) == (other.n_classes, other.ghost_class, other.tau)
        )


def _vertex_set(graph: Graph, vertices) -> np.ndarray:
    vs = graph.boundary if vertices is None else np.asarray(sorted(set(int(v) for v in vertices)), dtype=np.int64)
    if vs.size and (vs.min() < 0 or vs.max() >= graph.n_vertices):
        raise BoundaryError("boundary condition references a missing vertex")
    return vs


def resolve_boundary(graph: Graph, bc: BoundaryCondition) -> Wiring:
    labels = np.full(graph.n_vertices, -1, dtype=np.int64)
    if isinstance(bc, Free):
        return Wiring(labels, 0)
    if isinstance(bc, Wired):
        labels[_vertex_set(graph, bc.vertices)] = 0
        return Wiring(labels, 1)
    if isinstance(bc, Ghost):
        labels[_vertex_set(graph, bc.vertices)] = 0
        return Wiring(labels, 1, ghost_class=0, tau=bc.tau)
    if isinstance(bc, Partition):
        seen: set[int] = set()
        for c, cls in enumerate(bc.classes):
            vs = _vertex_set(graph, cls)
            if seen.intersection(vs.tolist()):
                raise BoundaryError("partition classes overlap")
            seen.update(vs.tolist())
            labels[vs] = c
        return Wiring(labels, len(bc.classes))
    if isinstance(bc, BernoulliSpine):
        if not isinstance(graph, BookLattice):
            raise BoundaryError("BernoulliSpine needs a book lattice")
        spine = graph.spine_vertices()
        labels[spine[bc.eta(len(spine))]] = 0
        return Wiring(labels, 1, ghost_class=0 if bc.ghost else -1)
    raise BoundaryError(f"unknown boundary condition {bc!r}")


# ---------------------------------------------------------------------------
# per-page dual
# ---------------------------------------------------------------------------

FACE, BELOW, OUTER = 0, 1, 2


@dataclass(frozen=True, eq=False)
class PageDual:
    """Planar dual of one page (plus the spine edges).

    Dual vertices are the faces ``(x+1/2, y+1/2)`` of the page, the row of
    faces below the spine (merged into one vertex when the primal spine is
    free) and one outer vertex.  ``primal[j]`` is the primal edge crossed by
    dual edge ``j``; dual edge ``j`` is open iff that primal edge is closed.
    """

    page: int
    spine_bc: str
    centers: np.ndarray  # (n_dual, 2); outer vertex has +inf
    kind: np.ndarray  # FACE / BELOW / OUTER
    edges: np.ndarray  # (m_dual, 2)
    primal: np.ndarray  # (m_dual,)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.kind)

    def open_edges(self, config: np.ndarray) -> np.ndarray:
        return ~np.asarray(config, dtype=bool)[self.primal]


def build_page_dual(lattice: BookLattice, u: int, spine_bc: str = "free") -> PageDual:
    if not 0 <= u < lattice.pages:
        raise LatticeError(f"page {u} out of range")
    if spine_bc not in ("free", "wired"):
        raise LatticeError("spine_bc must be 'free' or 'wired'")
    L, H = lattice.width, lattice.height
    W = 2 * L
    n_faces = W * H
    centers = [np.stack([np.tile(np.arange(-L, L) + 0.5, H), np.repeat(np.arange(H) + 0.5, W)], axis=1)]
    kind = [np.full(n_faces, FACE)]
    n_below = 1 if spine_bc == "free" else W
    if spine_bc == "free":
        centers.append(np.array([[0.0, -0.5]]))
    else:
        centers.append(np.stack([np.arange(-L, L) + 0.5, np.full(W, -0.5)], axis=1))
    kind.append(np.full(n_below, BELOW))
    outer = n_faces + n_below
    centers.append(np.array([[np.inf, np.inf]]))
    kind.append(np.array([OUTER]))

    def face(x, y):  # face with lower-left corner (x, y)
        if x < -L or x >= L or y >= H:
            return outer
        if y < 0:
            return n_faces if spine_bc == "free" else n_faces + x + L
        return y * W + x + L

    edges, primal = [], []
    for e in np.flatnonzero((lattice.edge_page == u) | (lattice.edge_page == SPINE)):
        a, b = lattice.edges[e]
        xa, ya, xb, yb = lattice.vx[a], lattice.vy[a], lattice.vx[b], lattice.vy[b]
        if ya == yb:  # horizontal, x -> x+1
            x = min(xa, xb)
            edges.append((face(x, ya - 1), face(x, ya)))
        else:  # vertical, y -> y+1
            y = min(ya, yb)
            edges.append((face(xa - 1, y), face(xa, y)))
        primal.append(e)
    return PageDual(
        page=u,
        spine_bc=spine_bc,
        centers=np.concatenate(centers),
        kind=np.concatenate(kind),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        primal=np.array(primal, dtype=np.int64),
    )


def annulus_edge_mask(lattice: BookLattice, k: int, K: int, with_spine: bool = False) -> np.ndarray:
    """Edges with both endpoints in ``k <= |v|_inf <= K`` (spine edges only if ``with_spine``)."""
    key = ("annulus", k, K, with_spine)
    if key not in lattice._cache:
        r = np.maximum(np.abs(lattice.vx), lattice.vy)
        inside = (r >= k) & (r <= K)
        a, b = lattice.edges[:, 0], lattice.edges[:, 1]
        mask = inside[a] & inside[b]
        if not with_spine:
            mask &= lattice.edge_page != SPINE
        mask.setflags(write=False)
        lattice._cache[key] = mask
    return lattice._cache[key]


def build_plane_dual(lattice: BookLattice) -> PageDual:
    """Dual of the 2-page book seen as a rectangle of ``Z^2`` (page 1 below the spine).

    Spine edges join the two faces on either side of the spine.
    """
    if lattice.pages != 2:
        raise LatticeError("the plane dual needs exactly two pages")
    L, H = lattice.width, lattice.height
    W = 2 * L
    n_faces = W * H
    outer = 2 * n_faces
    xs = np.tile(np.arange(-L, L) + 0.5, H)
    ys = np.repeat(np.arange(H) + 0.5, W)
    centers = np.concatenate([np.stack([xs, ys], 1), np.stack([xs, -ys], 1), [[np.inf, np.inf]]])
    kind = np.concatenate([np.full(2 * n_faces, FACE), [OUTER]])

    def face(u, x, y):
        if x < -L or x >= L or y >= H:
            return outer
        return u * n_faces + y * W + x + L

    edges, primal = [], []
    for e in range(lattice.n_edges):
        a, b = lattice.edges[e]
        u = lattice.edge_page[e]
        xa, ya, xb, yb = lattice.vx[a], lattice.vy[a], lattice.vx[b], lattice.vy[b]
        if u == SPINE:
            x = min(xa, xb)
            edges.append((face(0, x, 0), face(1, x, 0)))
        elif ya == yb:
            x = min(xa, xb)
            edges.append((face(u, x, ya - 1), face(u, x, ya)))
        else:
            y = min(ya, yb)
            edges.append((face(u, xa - 1, y), face(u, xa, y)))
        primal.append(e)
    return PageDual(page=-1, spine_bc="plane", centers=centers, kind=kind,
                    edges=np.array(edges, dtype=np.int64).reshape(-1, 2), primal=np.array(primal, dtype=np.int64))


def region_edges(graph: Graph, vertex_mask: np.ndarray) -> np.ndarray:
    """Edges with both endpoints in ``vertex_mask``."""
    return vertex_mask[graph.edges[:, 0]] & vertex_mask[graph.edges[:, 1]]


def contract(graph: Graph, wiring: Wiring) -> tuple[np.ndarray, int, int]:
    """Edge endpoints after merging each wired class into one unit.

    Returns ``(unit_edges, n_units, ghost_unit)`` with ``ghost_unit = -1`` when
    there is no ghost.
    """
    units, n_units = wiring.units()
    ghost = graph.n_vertices + wiring.ghost_class if wiring.has_ghost else -1
    return units[graph.edges], n_units, ghost

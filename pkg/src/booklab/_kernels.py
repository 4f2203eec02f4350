"""numba kernels shared by the FK and current samplers.

Node space: the ``n`` graph vertices followed by one virtual node per wired
class.  Wiring links (vertex -> its class node) are always open; in the CSR
adjacency they carry edge id ``-1``.
"""

import numpy as np
from numba import njit

CM, HB = 0, 1


@njit(cache=True)
def find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def union(parent, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra != rb:
        if ra < rb:
            parent[rb] = ra
        else:
            parent[ra] = rb


@njit(cache=True)
def label_clusters(state, eu, ev, lu, lv, parent):
    """Union-find over open edges and wiring links; afterwards ``parent[x]`` is the root of ``x``."""
    for i in range(parent.shape[0]):
        parent[i] = i
    for j in range(lu.shape[0]):
        union(parent, lu[j], lv[j])
    for e in range(eu.shape[0]):
        if state[e]:
            union(parent, eu[e], ev[e])
    for i in range(parent.shape[0]):
        find(parent, i)


@njit(cache=True)
def count_clusters(state, eu, ev, lu, lv, parent):
    label_clusters(state, eu, ev, lu, lv, parent)
    c = 0
    for i in range(parent.shape[0]):
        if parent[i] == i:
            c += 1
    return c


@njit(cache=True)
def sources_paired(state, eu, ev, lu, lv, parent, is_source, ghost_node, tally):
    """Event F_A: every cluster not containing the ghost meets the sources an even number of times."""
    label_clusters(state, eu, ev, lu, lv, parent)
    for i in range(tally.shape[0]):
        tally[i] = 0
    for v in range(is_source.shape[0]):
        if is_source[v]:
            tally[parent[v]] ^= 1
    groot = parent[ghost_node] if ghost_node >= 0 else -1
    for i in range(tally.shape[0]):
        if tally[i] and i != groot:
            return False
    return True


@njit(cache=True)
def cm_step(state, eu, ev, pe, q, lu, lv, parent, active, ghost_node, u_cluster, u_edge):
    """Chayes-Machta move; ``u_cluster`` indexed by root node, ``u_edge`` by edge."""
    label_clusters(state, eu, ev, lu, lv, parent)
    groot = parent[ghost_node] if ghost_node >= 0 else -1
    inv_q = 1.0 / q
    for i in range(parent.shape[0]):
        if parent[i] == i:
            active[i] = (i == groot) or (u_cluster[i] < inv_q)
    for e in range(eu.shape[0]):
        if active[parent[eu[e]]] and active[parent[ev[e]]]:
            state[e] = 1 if u_edge[e] < pe[e] else 0


@njit(cache=True)
def connected_without(e, s, t, state, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp):
    """Two-sided BFS: are ``s`` and ``t`` joined through open edges other than ``e`` (and wiring links)?"""
    if s == t:
        return True
    mark_a[s] = stamp
    mark_b[t] = stamp
    qa[0] = s
    qb[0] = t
    ha, ta, hb, tb = 0, 1, 0, 1
    while ha < ta and hb < tb:
        x = qa[ha]
        ha += 1
        for k in range(indptr[x], indptr[x + 1]):
            f = nedge[k]
            if f == e or (f >= 0 and state[f] == 0):
                continue
            y = nbr[k]
            if mark_b[y] == stamp:
                return True
            if mark_a[y] != stamp:
                mark_a[y] = stamp
                qa[ta] = y
                ta += 1
        x = qb[hb]
        hb += 1
        for k in range(indptr[x], indptr[x + 1]):
            f = nedge[k]
            if f == e or (f >= 0 and state[f] == 0):
                continue
            y = nbr[k]
            if mark_a[y] == stamp:
                return True
            if mark_b[y] != stamp:
                mark_b[y] = stamp
                qb[tb] = y
                tb += 1
    return False


@njit(cache=True)
def hb_prob(e, state, eu, ev, pe, q, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp):
    p = pe[e]
    if q == 1.0 or p == 0.0 or p == 1.0:
        return p
    if connected_without(e, eu[e], ev[e], state, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp):
        return p
    return p / (p + q * (1.0 - p))


@njit(cache=True)
def hb_sweep(state, eu, ev, pe, q, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp, u_edge):
    for e in range(eu.shape[0]):
        stamp += 1
        prob = hb_prob(e, state, eu, ev, pe, q, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp)
        state[e] = 1 if u_edge[e] < prob else 0
    return stamp


@njit(cache=True)
def advance(
    state, n_sweeps, record_every, out, codes, U,
    eu, ev, pe, q, lu, lv, ghost_node,
    indptr, nbr, nedge,
    parent, active, mark_a, mark_b, qa, qb, stamp,
    constrained, is_source, tally, backup,
):
    """Run ``n_sweeps`` sweeps of the move schedule ``codes``; record every ``record_every`` sweeps.

    ``U[s]`` holds the uniforms of sweep ``s``: per CM move ``n_nodes + m``
    numbers, per HB move ``m`` numbers.  With ``constrained`` the chain is
    restricted to F_A (moves leaving it are rejected).
    """
    m = eu.shape[0]
    n_nodes = parent.shape[0]
    rec = 0
    for s in range(n_sweeps):
        off = 0
        for c in range(codes.shape[0]):
            if codes[c] == CM:
                if constrained:
                    for e in range(m):
                        backup[e] = state[e]
                cm_step(state, eu, ev, pe, q, lu, lv, parent, active, ghost_node,
                        U[s, off:off + n_nodes], U[s, off + n_nodes:off + n_nodes + m])
                if constrained and not sources_paired(state, eu, ev, lu, lv, parent, is_source, ghost_node, tally):
                    for e in range(m):
                        state[e] = backup[e]
                off += n_nodes + m
            else:
                u_edge = U[s, off:off + m]
                if constrained:
                    for e in range(m):
                        stamp += 1
                        prob = hb_prob(e, state, eu, ev, pe, q, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp)
                        new = 1 if u_edge[e] < prob else 0
                        if new != state[e]:
                            old = state[e]
                            state[e] = new
                            if not sources_paired(state, eu, ev, lu, lv, parent, is_source, ghost_node, tally):
                                state[e] = old
                else:
                    stamp = hb_sweep(state, eu, ev, pe, q, indptr, nbr, nedge, mark_a, mark_b, qa, qb, stamp, u_edge)
                off += m
        if record_every > 0 and (s + 1) % record_every == 0:
            for e in range(m):
                out[rec, e] = state[e]
            rec += 1
    return stamp


@njit(cache=True)
def even_subgraph(n, eu, ev, open_, is_source, ghost, coins, indptr, nbr, nedge):
    """Uniform subgraph of the open edges whose odd-degree set is the sources.

    The ``ghost`` vertex (or ``-1``) is exempt from the parity constraint.
    Spanning forest by BFS (the ghost is always a root), fair coins on
    non-tree edges, tree edges solved leaves-first.  Returns ``(parity, ok)``;
    ``ok`` is False when a cluster without the ghost meets the sources oddly.
    """
    m = eu.shape[0]
    parity = np.zeros(m, dtype=np.uint8)
    need = np.zeros(n, dtype=np.uint8)
    for v in range(n):
        need[v] = is_source[v]
    seen = np.zeros(n, dtype=np.uint8)
    tree = np.zeros(m, dtype=np.uint8)
    parent_edge = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    roots = np.empty(n, dtype=np.int64)
    n_roots = 0
    pos = 0
    for i in range(-1, n):
        r = ghost if i < 0 else i
        if r < 0 or seen[r]:
            continue
        seen[r] = 1
        roots[n_roots] = r
        n_roots += 1
        head = pos
        order[pos] = r
        pos += 1
        while head < pos:
            x = order[head]
            head += 1
            for j in range(indptr[x], indptr[x + 1]):
                f = nedge[j]
                if not open_[f]:
                    continue
                y = nbr[j]
                if not seen[y]:
                    seen[y] = 1
                    tree[f] = 1
                    parent_edge[y] = f
                    order[pos] = y
                    pos += 1
    for f in range(m):
        if open_[f] and not tree[f] and coins[f] < 0.5:
            parity[f] = 1
            need[eu[f]] ^= 1
            need[ev[f]] ^= 1
    for i in range(n - 1, -1, -1):
        y = order[i]
        f = parent_edge[y]
        if f >= 0 and need[y]:
            parity[f] = 1
            need[eu[f]] ^= 1
            need[ev[f]] ^= 1
    ok = True
    for i in range(n_roots):
        r = roots[i]
        if need[r] and r != ghost:
            ok = False
    return parity, ok

import itertools
import math

import numpy as np
import pytest

from booklab.fk import Params, beta_c, p_from_beta
from booklab.lattice import Free, Ghost, Graph, Wired, build_book
from booklab.oracle import (
    NESTED_PAIRS,
    TooLarge,
    catalog_graph,
    current_correlation,
    enumerate_fk,
    event_prob,
    exact_magnetization,
    exact_parity_current_dist,
    exact_spin_expectation,
    exact_switching_check,
    fk_connection_prob,
    fk_spin_correlation,
    load_catalog,
    nested_pair,
    oracle_suite,
    tv_distance,
)

EDGE = Graph(2, [(0, 1)], name="edge")


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_single_edge(q):
    d = enumerate_fk(EDGE, Params(q))
    assert d.probs[1] == pytest.approx(1 / (1 + math.sqrt(q)), abs=1e-12)
    assert d.Z > 0


def test_q1_is_product_measure():
    g = catalog_graph("book1x1")
    params = Params(1, p=0.3, lam=0.8)
    d = enumerate_fk(g, params)
    pe = np.where(g.spine, 0.8, 0.3)
    cfgs = d.configs()
    expected = np.prod(np.where(cfgs, pe, 1 - pe), axis=1)
    assert np.allclose(d.probs, expected, atol=1e-12)


def test_two_edges_wired_leaves_two_ways():
    g = Graph(3, [(0, 1), (1, 2)], boundary=[0, 2])
    params = Params(2.5, p=0.4)
    d = enumerate_fk(g, params, Wired())
    both = event_prob(d, lambda c: c[0] and c[1])
    # chaining: P[e0] * P[e1 | e0] from unnormalized weights by hand
    q, p = 2.5, 0.4
    w = {}
    for a, b in itertools.product((0, 1), repeat=2):
        clusters = 1 if (a or b) else 2  # leaves wired; the middle joins through any open edge
        w[a, b] = q ** clusters * (p if a else 1 - p) * (p if b else 1 - p)
    p_e0 = (w[1, 0] + w[1, 1]) / sum(w.values())
    p_e1_given_e0 = w[1, 1] / (w[1, 0] + w[1, 1])
    assert both == pytest.approx(p_e0 * p_e1_given_e0, abs=1e-12)


def test_normalization_and_limits():
    for g in load_catalog():
        d = enumerate_fk(g, Params(3, lam=0.9), Wired())
        assert abs(d.probs.sum() - 1) <= 1e-12
    with pytest.raises(TooLarge):
        enumerate_fk(build_book(1, 2, 2), Params(2))


def test_large_beta_does_not_underflow():
    g = catalog_graph("grid3x3")
    d = exact_parity_current_dist(g, 400.0, ())
    assert np.isfinite(d.log_z)
    assert abs(d.probs.sum() - 1) <= 1e-12


def test_spin_examples():
    b = 0.37
    assert exact_spin_expectation(EDGE, 2, b, Free(), (0, 1)) == pytest.approx(math.tanh(b), abs=1e-12)
    g = catalog_graph("k4")
    assert exact_spin_expectation(g, 2, 0.0, Free(), (0, 1)) == pytest.approx(0.0, abs=1e-12)
    assert exact_spin_expectation(g, 2, 0.0, Free(), (2,)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["triangle", "grid2x2", "k4", "book1x1"])
def test_spin_equals_fk_connection(name):
    g = catalog_graph(name)
    b = 0.61
    params = Params(2, p=p_from_beta(b))
    for x, y in itertools.combinations(range(g.n_vertices), 2):
        spin = exact_spin_expectation(g, 2, b, Free(), (x, y))
        assert spin == pytest.approx(fk_connection_prob(g, params, Free(), x, y), abs=1e-12)


@pytest.mark.parametrize("q", [2, 3, 4])
def test_magnetization_is_ghost_connection(q):
    g = catalog_graph("grid3x3")
    b = beta_c(q)
    assert 4 not in g.boundary
    m = exact_magnetization(g, q, b, Ghost(), 4)
    theta = fk_connection_prob(g, Params.critical(q), Ghost(), 4, int(g.boundary[0]))
    assert m == pytest.approx((q - 1) / q * theta, abs=1e-12)
    indicator = fk_spin_correlation(g, q, b, Ghost(), (4,)) if q > 2 else None
    if indicator is not None:
        assert m + 1 / q == pytest.approx(indicator, abs=1e-12)


def test_parity_examples():
    b = 0.8
    assert current_correlation(EDGE, b, (0, 1)) == pytest.approx(math.tanh(b), abs=1e-12)
    tri = catalog_graph("triangle")
    d = exact_parity_current_dist(tri, b, ())
    assert sorted(d.codes.tolist()) == [0, 7]
    ratio = d.prob_of([1, 1, 1]) / d.prob_of([0, 0, 0])
    assert ratio == pytest.approx(math.tanh(b) ** 3, abs=1e-12)
    assert d.log_z == pytest.approx(math.log(math.cosh(b) ** 3 + math.sinh(b) ** 3), abs=1e-12)


def test_parity_vs_spin_all_pairs():
    b = 0.45
    for g in load_catalog():
        if g.n_vertices > 8:
            continue
        for x, y in itertools.combinations(range(g.n_vertices), 2):
            assert current_correlation(g, b, (x, y)) == pytest.approx(
                exact_spin_expectation(g, 2, b, Free(), (x, y)), abs=1e-12)


def test_switching_examples():
    b = 0.55
    lhs, rhs, gap = exact_switching_check(EDGE, EDGE, 0, 1, b)
    assert lhs == pytest.approx(math.tanh(b), abs=1e-12)
    assert rhs == pytest.approx(math.tanh(b), abs=1e-12)
    G, H = nested_pair("triangle", ((0, 2), (2, 1)))
    assert exact_switching_check(G, H, 0, 1, b)[2] <= 1e-10
    lhs, rhs, _ = exact_switching_check(G, H, 0, 1, 0.0)
    assert lhs == pytest.approx(0, abs=1e-12) and rhs == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("pair", NESTED_PAIRS, ids=[p[0] for p in NESTED_PAIRS])
@pytest.mark.parametrize("b", [0.2, beta_c(2), 0.9])
def test_switching_on_nested_pairs(pair, b):
    name, h_edges, x, y = pair
    G, H = nested_pair(name, h_edges)
    assert exact_switching_check(G, H, x, y, b)[2] <= 1e-10


def test_wired_spine_limit_is_monotone():
    g = catalog_graph("book3x1")
    spine_v = sorted({int(v) for e in np.flatnonzero(g.spine) for v in g.edges[e]})
    limit = enumerate_fk(g.subgraph(~g.spine), Params(2), Wired(tuple(spine_v))).dense()
    page_edges = np.flatnonzero(~g.spine)
    tvs = []
    for lam in (0.9, 0.99, 0.999):
        d = enumerate_fk(g, Params(2, lam=lam))
        # marginal law of the page edges
        codes = ((d.codes[:, None] >> page_edges) & 1) @ (1 << np.arange(len(page_edges)))
        marg = np.bincount(codes, weights=d.probs, minlength=len(limit))
        tvs.append(tv_distance(marg, limit))
    assert tvs[0] > tvs[1] > tvs[2]
    assert tvs[2] < 0.01


def test_suite_passes():
    checks = oracle_suite()
    assert checks and all(c.passed for c in checks), [c for c in checks if not c.passed]

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from booklab.currents import (
    CurrentSampler,
    SourcesNotPairable,
    check_switching_mc,
    current_two_point,
    sample_current,
    uniform_even_subgraph,
)
from booklab.fk import Params, beta_c, p_c
from booklab.lattice import Free, Ghost, Graph, build_book
from booklab.oracle import catalog_graph, current_correlation, exact_spin_expectation, nested_pair

EDGE = Graph(2, [(0, 1)], name="edge")


def test_even_subgraph_of_empty_config():
    g = catalog_graph("grid2x2")
    out = uniform_even_subgraph(g, np.zeros(g.n_edges), (), 0)
    assert not out.any()


def test_even_subgraph_triangle_is_fair():
    tri = catalog_graph("triangle")
    rng = np.random.default_rng(1)
    full = [uniform_even_subgraph(tri, np.ones(3), (), rng).all() for _ in range(4000)]
    assert abs(sum(full) - 2000) < 4 * math.sqrt(1000)


def test_even_subgraph_single_edge_with_sources():
    assert uniform_even_subgraph(EDGE, np.ones(1), (0, 1), 0).tolist() == [True]


def test_even_subgraph_rejects_odd_cluster():
    g = catalog_graph("path3")
    with pytest.raises(SourcesNotPairable):
        uniform_even_subgraph(g, np.array([1, 0]), (0, 2), 0)


def test_even_subgraph_uniform_over_cycle_space():
    g = catalog_graph("k4")
    rng = np.random.default_rng(2)
    counts = Counter(tuple(uniform_even_subgraph(g, np.ones(g.n_edges), (), rng)) for _ in range(16_000))
    # cycle space of K4 has dimension 6 - 4 + 1 = 3
    assert len(counts) == 8
    assert all(abs(c - 2000) < 5 * math.sqrt(2000) for c in counts.values())


def test_ghost_is_exempt_from_parity():
    g = catalog_graph("path3")
    out = uniform_even_subgraph(g, np.ones(2), (1,), 0, bc=Ghost((2,)))
    assert out.tolist() == [False, True]


@given(st.integers(0, 2**17 - 1), st.integers(0, 2**12 - 1), st.integers(0, 1000))
@settings(max_examples=80)
def test_even_subgraph_properties(code, src_code, seed):
    lat = build_book(3, 1, 1)
    omega = ((code >> np.arange(lat.n_edges)) & 1).astype(bool)
    sources = [v for v in range(lat.n_vertices) if (src_code >> v) & 1]
    try:
        out = uniform_even_subgraph(lat, omega, sources, seed)
    except SourcesNotPairable:
        return
    assert not (out & ~omega).any()
    deg = np.zeros(lat.n_vertices, dtype=int)
    np.add.at(deg, lat.edges[out, 0], 1)
    np.add.at(deg, lat.edges[out, 1], 1)
    assert set(np.flatnonzero(deg % 2)) == set(sources)


def test_zero_temperature_current():
    currents = sample_current(Params(2, beta=0.0), catalog_graph("grid2x2"), Free(), (), 0, n_samples=50)
    assert all(not c.parity.any() and not c.positive.any() for c in currents)


def test_single_edge_with_sources_is_odd():
    currents = sample_current(Params(2, beta=0.3), EDGE, Free(), (0, 1), 0, n_samples=200)
    assert all(c.parity.tolist() == [True] for c in currents)


def test_sampler_needs_ising():
    with pytest.raises(ValueError):
        CurrentSampler(Params(3), EDGE)


@pytest.mark.parametrize("bc", [Free(), Ghost(None, 0)])
def test_parity_defects_are_the_sources(bc):
    lat = build_book(2, 2, 2)
    A = (lat.vertex(0, 0, 1), lat.vertex(1, 1, 2))
    currents = sample_current(Params.critical(2), lat, bc, A, 3, n_samples=300, burn_in=20)
    ghost_vertices = set(lat.outer_boundary().tolist()) if isinstance(bc, Ghost) else set()
    for c in currents:
        assert not (c.parity & ~c.positive).any()
        odd = c.odd_vertices(lat)
        if ghost_vertices:
            # the ghost class absorbs parity: only the non-boundary defects are pinned
            assert odd - ghost_vertices == set(A) - ghost_vertices
        else:
            assert odd == set(A)


def test_positivity_frequency_on_even_edges():
    b = 0.7
    g = catalog_graph("grid3x3")
    parity, positive = CurrentSampler(Params(2, beta=b), g, Free(), (0, 8), 4).batch(40_000)
    even = parity == 0
    target = 1 - 1 / math.cosh(b)
    se = math.sqrt(target * (1 - target) / even.sum())
    assert abs(positive[even].mean() - target) <= 3 * se


def test_series_two_point():
    G = Graph(3, [(0, 1), (1, 2)])
    b = 0.5
    est = check_switching_mc(G, G, 0, 2, b, 5_000, 5)
    assert est.lhs == pytest.approx(math.tanh(b) ** 2, abs=1e-12)
    assert abs(est.lhs - est.rhs) <= 3 * est.rhs_stderr + 1e-12


def test_switching_h_equals_g():
    g = catalog_graph("grid2x2")
    est = check_switching_mc(g, g, 0, 3, beta_c(2), 20_000, 6)
    assert abs(est.lhs - est.rhs) <= 3 * est.rhs_stderr


def test_switching_nested_grids():
    G, H = nested_pair("grid3x3", ((0, 1), (3, 4), (0, 3), (1, 4)))
    est = check_switching_mc(G, H, 0, 4, beta_c(2), 100_000, 7)
    assert est.lhs == pytest.approx(exact_spin_expectation(H, 2, beta_c(2), Free(), (0, 4)), abs=1e-12)
    assert abs(est.lhs - est.rhs) <= 3 * est.rhs_stderr


def test_two_point_from_currents_matches_spins():
    g = catalog_graph("book1x1")
    b = 0.5
    for A in ((0, 5), (1, 2, 3, 4)):
        est, se = current_two_point(Params(2, beta=b), g, Free(), A, 40_000, 8)
        exact = exact_spin_expectation(g, 2, b, Free(), A)
        assert abs(est - exact) <= 3 * se
        assert current_correlation(g, b, A) == pytest.approx(exact, abs=1e-12)


def test_edwards_sokal_single_edge():
    b = beta_c(2)
    assert math.tanh(b) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert 1 / (1 + math.sqrt(2)) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    # P[edge open] at p_c(2) is the connection probability
    assert p_c(2) * 2 / (p_c(2) * 2 + (1 - p_c(2)) * 4) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)

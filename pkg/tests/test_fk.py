import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from booklab.fk import (
    FKChain,
    ParamError,
    Params,
    beta_c,
    beta_from_p,
    chayes_machta_step,
    edge_weight,
    encode,
    from_hex,
    heat_bath_sweep,
    p_c,
    p_from_beta,
    sample_fk,
    sample_fk_array,
    to_hex,
)
from booklab.lattice import Free, Ghost, Graph, Wired, build_book, resolve_boundary
from booklab.oracle import catalog_graph, cluster_counts, enumerate_fk, tv_distance

EDGE = Graph(2, [(0, 1)], name="edge")


def test_edge_weight_examples():
    lat = build_book(1, 2, 2)
    spine = int(np.flatnonzero(lat.spine)[0])
    page = int(np.flatnonzero(~lat.spine)[0])
    assert edge_weight(Params(2, lam=0.9), lat, spine) == 0.9
    assert edge_weight(Params(2), lat, page) == pytest.approx(0.585786, abs=1e-6)
    assert edge_weight(Params(1), lat, page) == 0.5


def test_critical_values():
    assert beta_c(2) == pytest.approx(0.440687, abs=1e-6)
    assert math.tanh(beta_c(2)) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    for q in (1, 2, 3, 4, 2.5):
        assert p_from_beta(beta_c(q)) == pytest.approx(p_c(q), abs=1e-12)


@given(st.floats(1, 10), st.floats(0, 5))
def test_parameter_round_trip(q, J):
    b = beta_c(q)
    params = Params.from_couplings(q, b, J)
    assert abs(beta_from_p(params.p) - b) <= 1e-12
    if J > 0:
        assert abs(params.J_eff - J) <= 1e-9 * max(1, J)
    again = Params(q, p=params.p, lam=params.lam, beta=b, J=J)
    assert again == params


@pytest.mark.parametrize("kw", [
    dict(q=0.5),
    dict(q=2, p=1.0),
    dict(q=2, lam=-0.1),
    dict(q=2, p=0.5, beta=1.0),
    dict(q=2, beta=0.3, J=1.0, lam=0.2),
    dict(q=2, J=1.0),
])
def test_invalid_params(kw):
    with pytest.raises(ParamError):
        Params(**kw)


def _open_freq(params, graph, bc, n, seed, schedule=("hb",)):
    cfgs = sample_fk_array(params, graph, bc, n_samples=n, sweeps_between=1, burn_in=10, rng=seed, schedule=schedule)
    return cfgs[:, 0].mean()


def test_heat_bath_single_edge_free():
    f = _open_freq(Params(2), EDGE, Free(), 100_000, 1)
    assert f == pytest.approx(1 / (1 + math.sqrt(2)), abs=0.005)


def test_heat_bath_single_edge_wired_is_bernoulli_p():
    params = Params(3)
    f = _open_freq(params, EDGE, Wired((0, 1)), 100_000, 2)
    assert f == pytest.approx(params.p, abs=0.005)


def test_q1_ignores_connectivity():
    params = Params(1, p=0.3)
    tri = catalog_graph("triangle")
    cfgs = sample_fk_array(params, tri, Free(), n_samples=50_000, sweeps_between=1, burn_in=0, rng=3,
                           schedule=("hb",))
    assert np.allclose(cfgs.mean(axis=0), 0.3, atol=0.01)


def test_chayes_machta_single_edge():
    f = _open_freq(Params(2), EDGE, Free(), 100_000, 4, schedule=("cm",))
    assert f == pytest.approx(0.414, abs=0.005)


def test_chayes_machta_q1_forgets_start():
    g = catalog_graph("grid3x3")
    params = Params(1)
    chain = FKChain(params, g, Free(), 0, schedule=("cm",))
    U = np.random.default_rng(5).random(chain.budget)
    a = chayes_machta_step(np.zeros(g.n_edges), params, g, uniforms=U)
    b = chayes_machta_step(np.ones(g.n_edges), params, g, uniforms=U)
    assert np.array_equal(a, b)


def test_chayes_machta_rejects_small_q():
    with pytest.raises(ParamError):
        Params(0.9)


def test_open_and_closed_starts_agree():
    g = catalog_graph("grid3x3")
    params = Params(2)
    vals = []
    for init, seed in (("open", 6), ("closed", 7)):
        chain = FKChain(params, g, Free(), seed, init=init)
        chain.step(200)
        cfgs = chain.samples(20_000, 5)
        event = cfgs[:, :4].all(axis=1)
        vals.append((event.mean(), event.std() / math.sqrt(len(event))))
    (a, sa), (b, sb) = vals
    assert abs(a - b) <= 3 * math.hypot(sa, sb)


def _random_graph(draw_edges, n):
    edges = sorted({(min(a, b), max(a, b)) for a, b in draw_edges if a != b})
    spine = [(a + b) % 3 == 0 for a, b in edges]
    return Graph(n, edges, spine)


edge_lists = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=16)


@given(edge_lists, st.floats(1, 4), st.floats(0.05, 0.9), st.floats(0.0, 0.09), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_grand_coupling_is_monotone(pairs, q, lam, gap, seed):
    g = _random_graph(pairs, 8)
    if g.n_edges == 0:
        return
    rng = np.random.default_rng(seed)
    lo = rng.random(g.n_edges) < 0.4
    hi = lo | (rng.random(g.n_edges) < 0.4)
    low, high = Params(q, lam=lam), Params(q, lam=lam + gap)
    for _ in range(5):
        U = rng.random(g.n_edges)
        lo = heat_bath_sweep(lo, low, g, Free(), uniforms=U)
        hi = heat_bath_sweep(hi, high, g, Free(), uniforms=U)
        assert not (lo & ~hi).any()


def test_wired_dominates_free_under_coupling():
    lat = build_book(2, 3, 3)
    params = Params(2, lam=0.9)
    rng = np.random.default_rng(8)
    free = np.zeros(lat.n_edges, dtype=bool)
    wired = free.copy()
    spine0 = lat.vertex(0, 0, 0)
    top = lat.vertex(1, 0, 3)
    fw, ww = resolve_boundary(lat, Free()), resolve_boundary(lat, Wired())
    from booklab.events import label_clusters

    for _ in range(40):
        U = rng.random(lat.n_edges)
        free = heat_bath_sweep(free, params, lat, fw, uniforms=U)
        wired = heat_bath_sweep(wired, params, lat, ww, uniforms=U)
        assert not (free & ~wired).any()
        # increasing event: origin connected to the top of page 1
        assert label_clusters(free, lat).same(spine0, top) <= label_clusters(wired, lat).same(spine0, top)


def test_identical_seeds_identical_streams():
    lat = build_book(2, 3, 3)
    params = Params(2.5, lam=0.8)
    a = [to_hex(c) for c in sample_fk(params, lat, Free(), n_samples=30, burn_in=5, rng=99)]
    b = [to_hex(c) for c in sample_fk(params, lat, Free(), n_samples=30, burn_in=5, rng=99)]
    c = [to_hex(c) for c in sample_fk(params, lat, Free(), n_samples=30, burn_in=5, rng=100)]
    assert a == b
    assert a != c


def test_q1_samples_are_iid():
    g = catalog_graph("grid3x3")
    cfgs = sample_fk_array(Params(1), g, Free(), n_samples=40_000, rng=9, schedule=("cm",),
                           burn_in=0, sweeps_between=1).astype(float)
    assert np.allclose(cfgs.mean(axis=0), 0.5, atol=0.01)
    lag = np.mean((cfgs[1:] - 0.5) * (cfgs[:-1] - 0.5), axis=0) / 0.25
    assert np.abs(lag).max() < 0.03


@pytest.mark.parametrize("name,q,bc", [
    ("triangle", 2, Free()),
    ("grid2x2", 3, Wired()),
    ("book1x1", 1.5, Free()),
    ("star3", 2.5, Ghost(None, 0)),
])
def test_small_graphs_match_oracle(name, q, bc):
    g = catalog_graph(name)
    params = Params(q, lam=0.9)
    exact = enumerate_fk(g, params, bc).dense()
    cfgs = sample_fk_array(params, g, bc, n_samples=30_000, rng=10)
    emp = np.bincount(encode(cfgs), minlength=len(exact)) / len(cfgs)
    assert tv_distance(emp, exact) < 0.03


@given(st.integers(0, 2**20 - 1), st.integers(1, 20))
def test_hex_round_trip(code, m):
    bits = ((code >> np.arange(m)) & 1).astype(bool)
    assert np.array_equal(from_hex(to_hex(bits), m), bits)


def test_hex_bit_order():
    bits = np.zeros(12, dtype=bool)
    bits[0] = bits[9] = True
    assert to_hex(bits) == "0201"


@given(st.integers(0, 2**12 - 1))
@settings(max_examples=50)
def test_cluster_count_matches_oracle(code):
    g = catalog_graph("grid3x3")
    cfg = ((code >> np.arange(g.n_edges)) & 1).astype(np.uint8)
    for bc in (Free(), Wired()):
        chain = FKChain(Params(2), g, bc, 0)
        expected = cluster_counts(g, resolve_boundary(g, bc))[code]
        assert chain.n_clusters(cfg) == expected


def test_bad_schedule_rejected():
    with pytest.raises(ParamError):
        FKChain(Params(2), EDGE, Free(), 0, schedule=("metropolis",))
    with pytest.raises(ParamError):
        next(sample_fk(Params(2), EDGE, n_samples=0))

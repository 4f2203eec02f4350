"""Acceptance criteria.  Each test records one PASS/FAIL line (shown in the terminal summary)."""

import math

import numpy as np
import pytest

from booklab import cli
from booklab import exponents as X
from booklab.currents import CurrentSampler
from booklab.fk import Params, beta_c, encode, sample_fk_array
from booklab.lattice import Free, Wired
from booklab.oracle import enumerate_fk, exact_parity_current_dist, load_catalog, oracle_suite, tv_distance


def _empirical(codes: np.ndarray, n_states: int) -> np.ndarray:
    return np.bincount(codes, minlength=n_states) / len(codes)


def _iid_tv(probs: np.ndarray, n: int, rng) -> float:
    """TV of an i.i.d. sample of size ``n`` from ``probs``: the noise floor of the test statistic."""
    counts = rng.multinomial(n, probs)
    return tv_distance(counts / n, probs)


def test_c1_oracle_identities(criterion):
    checks = oracle_suite()
    groups = {
        "single_edge": [c for c in checks if c.name.startswith("single_edge_open")],
        "tanh": [c for c in checks if c.name == "tanh_beta_c"],
        "edwards_sokal": [c for c in checks if c.name.startswith("edwards_sokal")],
        "switching": [c for c in checks if c.name == "switching"],
    }
    es_graphs = {c.graph for c in groups["edwards_sokal"]}
    catalog = {g.name for g in load_catalog() if g.n_vertices <= 16}
    ok = (
        all(c.passed for c in checks)
        and len(groups["single_edge"]) == 4
        and len(groups["tanh"]) == 1
        and es_graphs == catalog
        and len(groups["switching"]) >= 3
    )
    worst = max(c.error for c in checks)
    criterion(1, ok, f"{len(checks)} identities, max error {worst:.2e}, "
                     f"{len(groups['switching'])} nested pairs, ES on {len(es_graphs)} graphs")
    assert ok


def test_c2_sampler_validity(criterion):
    rng = np.random.default_rng(2024)
    failures, worst, worst_floor, worst_excess, n_cases = [], 0.0, 0.0, 0.0, 0
    failing_graphs = set()
    n = 100_000
    for g in load_catalog():
        if g.n_edges > 12:
            continue
        for q in (1, 1.5, 2, 2.5, 3):
            for bc_name, bc in (("free", Free()), ("wired", Wired())):
                for lam_name in ("p", "0.9"):
                    params = Params(q) if lam_name == "p" else Params(q, lam=0.9)
                    exact = enumerate_fk(g, params, bc).dense()
                    seed = int(rng.integers(2**63))
                    cfgs = sample_fk_array(params, g, bc, n_samples=n, rng=seed)
                    tv = tv_distance(_empirical(encode(cfgs), len(exact)), exact)
                    floor = _iid_tv(exact, n, rng)
                    n_cases += 1
                    worst = max(worst, tv)
                    worst_floor = max(worst_floor, floor)
                    worst_excess = max(worst_excess, tv - floor)
                    if tv > 0.02:
                        failing_graphs.add(f"{g.name} ({g.n_edges} edges)")
                        failures.append(f"{g.name}/q={q}/{bc_name}/lam={lam_name}: tv={tv:.4f} iid={floor:.4f}")
    ok = not failures
    detail = (f"{n_cases} cases, max TV {worst:.4f}, i.i.d. noise floor up to {worst_floor:.4f}, "
              f"max excess over floor {worst_excess:.4f}")
    if failures:
        detail += f"; {len(failures)} over 0.02 on {sorted(failing_graphs)}, e.g. {failures[0]}"
    criterion(2, ok, detail)
    assert ok, "\n".join(failures)


def test_c3_current_sampler(criterion):
    rng = np.random.default_rng(7)
    b = beta_c(2)
    params = Params.critical(2)
    target_pos = 1 - 1 / math.cosh(b)
    lines, ok = [], True
    for name in ("triangle", "grid2x2"):
        g = next(h for h in load_catalog() if h.name == name)
        for A in ((), (0, g.n_vertices - 1)):
            exact = exact_parity_current_dist(g, b, A).dense()
            sampler = CurrentSampler(params, g, Free(), A, rng)
            parity, positive = sampler.batch(100_000)
            tv = tv_distance(_empirical(encode(parity), len(exact)), exact)
            even = parity == 0
            freq = positive[even].mean()
            se = math.sqrt(target_pos * (1 - target_pos) / even.sum())
            good = tv <= 0.02 and abs(freq - target_pos) <= 3 * se
            ok &= good
            lines.append(f"{name} A={list(A)} tv={tv:.4f} pos={freq:.4f}~{target_pos:.4f}+-{se:.4f}")
    criterion(3, ok, "; ".join(lines))
    assert ok


@pytest.fixture(scope="module")
def free_arm_q1():
    pairs = X.scale_ladder(8, 128, k=1)
    return X.arm_scan(1, "free", pairs, 10_000, seed=11)


def test_c4_arm_exponents(criterion, free_arm_q1):
    pairs = X.scale_ladder(8, 128, k=1)
    wired = X.arm_scan(2, "wired", pairs, 10_000, seed=12)
    a_free, a_wired = free_arm_q1.fit.alpha, wired.fit.alpha
    ok = 0.26 <= a_free <= 0.40 and 0.40 <= a_wired <= 0.60
    criterion(4, ok, f"q=1 free alpha={a_free:.3f}+-{free_arm_q1.fit.stderr:.3f} (target [0.26,0.40]); "
                     f"q=2 wired alpha={a_wired:.3f}+-{wired.fit.stderr:.3f} (target [0.40,0.60])")
    assert ok


def test_c5_page_factorization(criterion):
    pairs = [(8, 64)]
    three = X.disconnection_scan(1, 3, None, pairs, 20_000, seed=21)
    one = X.disconnection_scan(1, 1, None, pairs, 20_000, seed=22)
    p3, s3 = three.series.rows[0].p_hat, three.series.rows[0].stderr
    p1, s1 = one.series.rows[0].p_hat, one.series.rows[0].stderr
    combined = math.hypot(s3, 3 * p1 * p1 * s1)
    diff = abs(p3 - p1 ** 3)
    ok = diff <= 3 * combined
    criterion(5, ok, f"N=3: {p3:.4f}+-{s3:.4f}; single page cubed {p1 ** 3:.4f}; |diff|={diff:.4f} "
                     f"<= 3*{combined:.4f}")
    assert ok


def test_c6_disconnection_criterion(criterion):
    pairs = X.scale_ladder(8, 64, k=1)
    one = X.disconnection_scan(1, 1, None, pairs, 10_000, seed=31)
    three = X.disconnection_scan(1, 3, None, pairs, 10_000, seed=32)
    ising = X.disconnection_scan(2, 3, 0.99, X.scale_ladder(4, 32, k=1), 10_000, seed=33)
    a1, a3 = one.fit.alpha, three.fit.alpha
    ok = 0.26 <= a1 <= 0.40 and 0.85 <= a3 <= 1.15 and bool(ising.verdict)
    criterion(6, ok, f"alpha(1,1)={a1:.3f}+-{one.fit.stderr:.3f}; alpha(1,3)={a3:.3f}+-{three.fit.stderr:.3f}; "
                     f"q=2 N=3 lam=0.99 alpha={ising.fit.alpha:.3f}+-{ising.fit.stderr:.3f} verdict={ising.verdict}")
    assert ok


def test_c7_first_order_probe(criterion):
    Ls = (16, 32, 64)
    book = X.first_order_probe(2, 8, 0.99, Ls, 1_000, seed=41)
    plane = X.first_order_probe(2, 2, None, Ls, 20_000, seed=42)
    high = all(r.p_hat >= 0.5 for r in book)
    ratios = [a.p_hat / b.p_hat for a, b in zip(plane, plane[1:])]
    decays = all(r >= 1.3 for r in ratios)
    ok = high and decays
    criterion(7, ok, "N=8: " + ", ".join(f"L={r.L} {r.p_hat:.3f}" for r in book)
              + f" (>=0.5: {high}); N=2 lam=p_c: " + ", ".join(f"L={r.L} {r.p_hat:.4f}+-{r.stderr:.4f}" for r in plane)
              + f", doubling ratios {', '.join(f'{x:.3f}' for x in ratios)} (>=1.3: {decays})")
    assert ok


@pytest.mark.slow
def test_c8_factorization_probe(criterion):
    res = X.factorization_probe(L=32, height=16, lam=0.99, n_samples=40_000, seed=51)
    ratio_ok = 0.7 <= res.ratio <= 1.3 and res.ratio_stderr <= 0.05
    control_ok = abs(res.control) <= 3 * res.control_stderr
    ok = ratio_ok and control_ok
    criterion(8, ok, f"ratio={res.ratio:.4f}+-{res.ratio_stderr:.4f} (numerator {res.numerator:.4f}, "
                     f"m={res.factors[0][0]:.4f}); free odd control {res.control:.4f}+-{res.control_stderr:.4f}")
    assert ok


def test_c9_fitter_exactness(criterion):
    alpha, c = 0.4321, 0.87
    rows = [X.ScaleRow(1, K, c * K ** -alpha, 0.01, 1000) for K in (8, 16, 32, 64, 128)]
    fit = X.fit_exponent(rows)
    err = abs(fit.alpha - alpha)
    ok = err <= 1e-9
    criterion(9, ok, f"recovered alpha={fit.alpha:.12f}, error {err:.1e}")
    assert ok


def test_c10_determinism(criterion):
    configs = {
        "sample": {"seed": "5", "q": "2", "N": "3", "L": "4", "samples": "20", "lambda": "0.9"},
        "disconnection-scan": {"seed": "6", "q": "2", "N": "2", "scales": "2,4", "k": "1", "samples": "200"},
        "block-stats": {"seed": "7", "K": "2", "samples": "100", "C": "1"},
    }
    same = {}
    for name, values in configs.items():
        first, _ = cli.run(name, values)
        second, _ = cli.run(name, values, parallelism=1)
        same[name] = first == second
    ok = all(same.values())
    criterion(10, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok

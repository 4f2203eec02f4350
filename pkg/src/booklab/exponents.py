"""Multi-scale probability estimates and power-law fits.

A :class:`Simulation` describes one FK model on one finite book.  Observables
turn a batch of configurations into per-sample values; replicas run
independent chains seeded by :mod:`booklab.seeding` and are concatenated in
replica order, so results do not depend on how replicas are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .events import ArmDetector, DisconnectionDetector, SpinObservables, _Crossing, page_dual, plane_dual
from .fk import FKChain, Params
from .lattice import Block, BookLattice, Free, Ghost, Wired, build_book, region_edges
from .events import bridging_region, is_bridged, is_theta_good
from .seeding import replica_rng

BATCH_BYTES = 1 << 25


class DegenerateSeries(ValueError):
    pass


# ---------------------------------------------------------------------------
# series and fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaleRow:
    k: int
    K: int
    p_hat: float
    stderr: float
    n: int

    def __post_init__(self):
        if not self.k < self.K:
            raise ValueError(f"row needs k < K, got {self.k}, {self.K}")


def binomial_row(k: int, K: int, hits: int, n: int) -> ScaleRow:
    p = hits / n
    return ScaleRow(k, K, p, math.sqrt(p * (1 - p) / n), n)


@dataclass
class ScaleSeries:
    rows: list[ScaleRow]
    meta: dict = field(default_factory=dict)

    CSV_FIELDS = ["q", "N", "lambda", "bc", "event", "k", "K", "n", "p_hat", "stderr"]

    def csv_rows(self) -> list[dict]:
        base = {f: self.meta.get(f, "") for f in ("q", "N", "lambda", "bc", "event")}
        return [dict(base, k=r.k, K=r.K, n=r.n, p_hat=repr(r.p_hat), stderr=repr(r.stderr)) for r in self.rows]


@dataclass(frozen=True)
class ExponentEstimate:
    alpha: float
    stderr: float
    intercept: float
    window: tuple[float, float]
    residuals: tuple[float, ...]

    CSV_FIELDS = ["alpha_hat", "alpha_stderr", "window"]

    def csv_row(self) -> dict:
        return {"alpha_hat": repr(self.alpha), "alpha_stderr": repr(self.stderr),
                "window": f"{self.window[0]:g}-{self.window[1]:g}"}


def fit_exponent(series: ScaleSeries | Sequence[ScaleRow]) -> ExponentEstimate:
    """Least-squares slope of ``log p_hat`` against ``log(k/K)``."""
    rows = series.rows if isinstance(series, ScaleSeries) else list(series)
    if len(rows) < 3:
        raise DegenerateSeries("need at least three rows")
    if any(r.p_hat <= 0 for r in rows):
        raise DegenerateSeries("a probability estimate is zero")
    x = np.log([r.k / r.K for r in rows])
    y = np.log([r.p_hat for r in rows])
    X = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(rows) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    ratios = [r.K / r.k for r in rows]
    return ExponentEstimate(float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1]),
                            (min(ratios), max(ratios)), tuple(float(v) for v in resid))


def series_to_csv(series: ScaleSeries, fit: ExponentEstimate | None = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ScaleSeries.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(series.csv_rows())
    if fit is not None:
        w2 = csv.DictWriter(buf, fieldnames=ExponentEstimate.CSV_FIELDS, lineterminator="\n")
        w2.writeheader()
        w2.writerow(fit.csv_row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# simulations
# ---------------------------------------------------------------------------

BC_NAMES = ("free", "wired", "wired-spine", "plus", "plus-spine")


@dataclass(frozen=True)
class Simulation:
    """FK model on ``build_book(N, L, H)``.

    ``bc`` names: ``free``; ``wired`` (outer boundary wired); ``wired-spine``
    (spine vertices wired); ``plus`` (outer boundary on the ghost);
    ``plus-spine`` (outer boundary and spine on the ghost).  ``domain`` limits
    the sampled edges to a block ``("block", K)`` or a bridging region
    ``("bridge", K, C)``; all other edges stay closed.  ``None`` for the chain
    settings picks defaults: at ``q = 1`` one Chayes-Machta move is an exact
    sample, so no burn-in is needed.
    """

    q: float
    N: int
    L: int
    H: int | None = None
    lam: float | None = None
    p: float | None = None
    bc: str = "free"
    burn_in: int | None = None
    sweeps_between: int | None = None
    schedule: tuple = ("cm",)
    domain: tuple | None = None

    def __post_init__(self):
        if self.bc not in BC_NAMES:
            raise ValueError(f"unknown boundary condition {self.bc!r}; choose from {BC_NAMES}")

    @property
    def params(self) -> Params:
        return Params(q=self.q, p=self.p, lam=self.lam)

    def lattice(self) -> BookLattice:
        return _lattice(self.N, self.L, self.H if self.H is not None else self.L)

    def boundary(self, lat: BookLattice):
        spine = tuple(lat.spine_vertices().tolist())
        outer = tuple(lat.outer_boundary().tolist())
        return {
            "free": Free(),
            "wired": Wired(),
            "wired-spine": Wired(spine),
            "plus": Ghost(None, 0),
            "plus-spine": Ghost(tuple(sorted(set(spine) | set(outer))), 0),
        }[self.bc]

    def edge_mask(self, lat: BookLattice) -> np.ndarray | None:
        if self.domain is None:
            return None
        if self.domain[0] == "block":
            return region_edges(lat, Block(self.domain[1], 0).mask(lat))
        if self.domain[0] == "bridge":
            return region_edges(lat, bridging_region(lat, self.domain[1], self.domain[2]))
        raise ValueError(f"unknown domain {self.domain!r}")

    def chain_settings(self) -> tuple[int, int]:
        exact = self.q == 1 and self.schedule == ("cm",)
        burn = self.burn_in if self.burn_in is not None else (0 if exact else 200)
        between = self.sweeps_between if self.sweeps_between is not None else (1 if exact else 5)
        return burn, between


_LATTICES: dict = {}


def _lattice(N: int, L: int, H: int) -> BookLattice:
    key = (N, L, H)
    if key not in _LATTICES:
        _LATTICES.clear()
        _LATTICES[key] = build_book(N, L, H)
    return _LATTICES[key]


class Observable:
    """Maps a batch of configurations ``(rows, m)`` to values ``(rows, columns)``."""

    columns: list[str]

    def bind(self, lat: BookLattice, sim: Simulation):
        raise NotImplementedError


@dataclass
class Disconnection(Observable):
    pairs: list

    @property
    def columns(self):
        return [f"Fc({k},{K})" for k, K in self.pairs]

    def bind(self, lat, sim):
        det = DisconnectionDetector(lat, self.pairs)
        return lambda cfg: det(cfg).astype(float)


@dataclass
class PageCrossings(Observable):
    """Per page dual crossing indicators, flattened as ``(pair, page)``."""

    pairs: list
    pages: int

    @property
    def columns(self):
        return [f"cross({k},{K})p{u}" for k, K in self.pairs for u in range(self.pages)]

    def bind(self, lat, sim):
        det = DisconnectionDetector(lat, self.pairs)
        return lambda cfg: det.page_crossings(cfg).reshape(len(cfg), -1).astype(float)


@dataclass
class Arm(Observable):
    pairs: list
    plane: bool = False

    @property
    def columns(self):
        return [f"arm({k},{K})" for k, K in self.pairs]

    def bind(self, lat, sim):
        dual = plane_dual(lat) if self.plane else page_dual(lat, 0)
        det = ArmDetector(lat, self.pairs, dual)
        return lambda cfg: det(cfg).astype(float)


@dataclass
class OriginToBoundary(Observable):
    columns: list = field(default_factory=lambda: ["origin<->boundary"])

    def bind(self, lat, sim):
        ids = np.arange(lat.n_edges)
        prob = _Crossing(lat.n_vertices, ids, lat.edges[:, 0].copy(), lat.edges[:, 1].copy(),
                         np.array([lat.vertex(0, 0, 0)]), lat.box_boundary(min(lat.width, lat.height)), False)
        return lambda cfg: prob.batch(cfg)[:, None].astype(float)


@dataclass
class SpinCorrelation(Observable):
    """Conditional spin correlation of the sites (``(page, x, y)`` triples), or an ES colouring sample."""

    sites: list
    coloured: bool = False
    seed: int = 0

    @property
    def columns(self):
        return ["sigma_A"]

    def bind(self, lat, sim):
        obs = SpinObservables(lat, sim.boundary(lat), int(sim.q))
        A = [lat.vertex(*s) for s in self.sites]
        rng = np.random.default_rng(self.seed)
        if self.coloured:
            return lambda cfg: obs.spin_product(obs.colour(cfg, rng), A)[:, None]
        return lambda cfg: obs.correlation(cfg, A)[:, None]


@dataclass
class BlockEvents(Observable):
    """Goodness of ``B_K^0`` (theta), and optionally whether ``B_K^i`` is bridged."""

    K: int
    theta: float = 0.75
    C: int | None = None
    i: int = 0

    @property
    def columns(self):
        return ["good"] if self.C is None else ["bridged"]

    def bind(self, lat, sim):
        if self.C is None:
            return lambda cfg: np.array([[is_theta_good(c, lat, self.K, 0, self.theta).outcome] for c in cfg], float)
        return lambda cfg: np.array([[is_bridged(c, lat, self.K, self.C, self.i).outcome] for c in cfg], float)


def _replica(sim: Simulation, obs: Observable, n_samples: int, master: int, index: int) -> np.ndarray:
    lat = sim.lattice()
    rng = replica_rng(master, index)
    mask = sim.edge_mask(lat)
    graph = lat if mask is None else lat.subgraph(mask)
    chain = FKChain(sim.params, graph, sim.boundary(lat), rng, schedule=sim.schedule)
    burn, between = sim.chain_settings()
    chain.step(burn)
    f = obs.bind(lat, sim)
    per_batch = max(1, min(n_samples, BATCH_BYTES // max(1, lat.n_edges)))
    out = []
    done = 0
    while done < n_samples:
        b = min(per_batch, n_samples - done)
        cfg = chain.samples(b, between)
        if mask is not None:
            full = np.zeros((b, lat.n_edges), dtype=np.uint8)
            full[:, mask] = cfg
            cfg = full
        out.append(np.asarray(f(cfg), dtype=float))
        done += b
    return np.concatenate(out)


def run_replicas(sim: Simulation, obs: Observable, n_samples: int, seed: int,
                 replicas: int = 1, parallelism: int = 1) -> np.ndarray:
    """Per-sample values ``(n_samples, columns)``; samples are split evenly over replicas."""
    if n_samples < 1 or replicas < 1:
        raise ValueError("need at least one sample and one replica")
    sizes = [n_samples // replicas + (1 if r < n_samples % replicas else 0) for r in range(replicas)]
    jobs = [(sim, obs, s, seed, r) for r, s in enumerate(sizes) if s > 0]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_replica, *zip(*jobs)))
    else:
        parts = [_replica(*j) for j in jobs]
    return np.concatenate(parts)


def batch_stderr(values: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean from batch means (robust to autocorrelation)."""
    values = np.asarray(values, dtype=float)
    n_batches = min(n_batches, len(values))
    if n_batches < 2:
        return 0.0
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def estimate_event_prob(sim: Simulation, obs: Observable, n_samples: int, seed: int,
                        replicas: int = 1, parallelism: int = 1) -> list[tuple[float, float, int]]:
    """Frequency, binomial standard error and sample count per observable column."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    vals = run_replicas(sim, obs, n_samples, seed, replicas, parallelism)
    n = len(vals)
    out = []
    for col in vals.T:
        p = float(col.mean())
        out.append((p, math.sqrt(max(p * (1 - p), 0.0) / n), n))
    return out


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def scale_ladder(K_min: int, K_max: int, k: int | None = None) -> list[tuple[int, int]]:
    """Pairs ``(k, K)`` with ``K`` doubling from ``K_min`` to ``K_max`` and fixed inner scale ``k``.

    ``k`` defaults to ``max(1, K_min // 8)``.
    """
    k = max(1, K_min // 8) if k is None else k
    out, K = [], K_min
    while K <= K_max:
        out.append((k, K))
        K *= 2
    return out


@dataclass
class ScanResult:
    series: ScaleSeries
    fit: ExponentEstimate | None
    verdict: bool | None = None
    note: str = ""

    def to_csv(self) -> str:
        return series_to_csv(self.series, self.fit)


def _fit_or_none(series: ScaleSeries) -> tuple[ExponentEstimate | None, str]:
    try:
        return fit_exponent(series), ""
    except DegenerateSeries as exc:
        return None, str(exc)


def disconnection_scan(q: float, N: int, lam: float | None, pairs: Sequence[tuple[int, int]], n_samples: int,
                       seed: int, L: int | None = None, replicas: int = 1, parallelism: int = 1,
                       burn_in: int | None = None, sweeps_between: int | None = None) -> ScanResult:
    """``P[F(k,K)^c]`` at ``p = p_c(q)``, free outer boundary, spine weight ``lam``.

    The lattice half-width defaults to ``2 * max K``.  The verdict is ``alpha_hat > 1``.
    """
    K_max = max(K for _, K in pairs)
    L = L if L is not None else 2 * K_max
    if L < 2 * K_max:
        raise ValueError("lattice width must be at least 2 * max K")
    sim = Simulation(q=q, N=N, L=L, lam=lam, bc="free", burn_in=burn_in, sweeps_between=sweeps_between)
    est = estimate_event_prob(sim, Disconnection(list(pairs)), n_samples, seed, replicas, parallelism)
    rows = [ScaleRow(k, K, p, s, n) for (k, K), (p, s, n) in zip(pairs, est)]
    series = ScaleSeries(rows, {"q": q, "N": N, "lambda": sim.params.lam, "bc": "free", "event": "F^c"})
    fit, note = _fit_or_none(series)
    return ScanResult(series, fit, None if fit is None else fit.alpha > 1, note)


ARM_MODES = {"free": (1, "free", False), "wired": (1, "wired-spine", False), "plane": (2, "free", True)}


def arm_scan(q: float, mode: str, pairs: Sequence[tuple[int, int]], n_samples: int, seed: int,
             L: int | None = None, replicas: int = 1, parallelism: int = 1,
             burn_in: int | None = None, sweeps_between: int | None = None) -> ScanResult:
    """Dual one-arm probabilities at ``p_c(q)``.

    ``mode``: ``free`` (one page, free spine), ``wired`` (one page, spine
    wired) or ``plane`` (two pages seen as ``Z^2``, the arm may cross the spine).
    """
    if mode not in ARM_MODES:
        raise ValueError(f"mode must be one of {sorted(ARM_MODES)}")
    N, bc, plane = ARM_MODES[mode]
    K_max = max(K for _, K in pairs)
    L = L if L is not None else 2 * K_max
    sim = Simulation(q=q, N=N, L=L, bc=bc, burn_in=burn_in, sweeps_between=sweeps_between)
    est = estimate_event_prob(sim, Arm(list(pairs), plane), n_samples, seed, replicas, parallelism)
    rows = [ScaleRow(k, K, p, s, n) for (k, K), (p, s, n) in zip(pairs, est)]
    series = ScaleSeries(rows, {"q": q, "N": N, "lambda": sim.params.lam, "bc": bc, "event": f"arm-{mode}"})
    fit, note = _fit_or_none(series)
    return ScanResult(series, fit, None, note)


@dataclass
class ProbeRow:
    L: int
    p_hat: float
    stderr: float
    n: int


def first_order_probe(q: float, N: int, lam: float | None, Ls: Sequence[int], n_samples: int, seed: int,
                      replicas: int = 1, parallelism: int = 1, burn_in: int | None = None,
                      sweeps_between: int | None = None) -> list[ProbeRow]:
    """``P[origin <-> boundary of the box]`` on ``build_book(N, L)`` with free boundary, one row per ``L``."""
    out = []
    for i, L in enumerate(Ls):
        sim = Simulation(q=q, N=N, L=L, lam=lam, bc="free", burn_in=burn_in, sweeps_between=sweeps_between)
        (p, s, n), = estimate_event_prob(sim, OriginToBoundary(), n_samples, seed + i, replicas, parallelism)
        out.append(ProbeRow(L, p, s, n))
    return out


@dataclass
class FactorizationResult:
    numerator: float
    numerator_stderr: float
    factors: list
    ratio: float
    ratio_stderr: float
    control: float | None = None
    control_stderr: float | None = None

    def asdict(self) -> dict:
        return asdict(self)


def factorization_probe(L: int, height: int, lam: float | None, n_samples: int, seed: int, N: int = 3,
                        x: int = 0, replicas: int = 1, parallelism: int = 1, control: bool = True,
                        burn_in: int | None = None, sweeps_between: int | None = None) -> FactorizationResult:
    """Ratio of the ``N``-site correlation on the book (plus boundary, ghost on the outer boundary)
    to the product of one-site half-plane magnetizations (ghost on the outer boundary and the line).

    Sites sit at ``(u, x, height)`` for pages ``u = 0..N-1``.  With ``control``
    the same correlation under free boundary conditions is estimated from
    Edwards-Sokal colourings (its mean should vanish for odd ``N``).
    """
    if height < 4:
        raise ValueError("sites must be at height >= 4 above the spine")
    if height > L:
        raise ValueError("sites must lie inside the lattice")
    q = 2
    sites = [(u, x, height) for u in range(N)]
    book = Simulation(q=q, N=N, L=L, lam=lam, bc="plus", burn_in=burn_in, sweeps_between=sweeps_between)
    num_vals = run_replicas(book, SpinCorrelation(sites), n_samples, seed, replicas, parallelism)[:, 0]
    num, num_err = float(num_vals.mean()), batch_stderr(num_vals)
    half = Simulation(q=q, N=1, L=L, lam=lam, bc="plus-spine", burn_in=burn_in, sweeps_between=sweeps_between)
    m_vals = run_replicas(half, SpinCorrelation([(0, x, height)]), n_samples, seed + 1, replicas, parallelism)[:, 0]
    m, m_err = float(m_vals.mean()), batch_stderr(m_vals)
    factors = [(m, m_err)] * N
    denom = m ** N
    ratio = num / denom if denom > 0 else math.nan
    rel = math.hypot(num_err / num if num else math.inf, N * m_err / m if m else math.inf)
    result = FactorizationResult(num, num_err, factors, ratio, abs(ratio) * rel)
    if control:
        free = Simulation(q=q, N=N, L=L, lam=lam, bc="free", burn_in=burn_in, sweeps_between=sweeps_between)
        c_vals = run_replicas(free, SpinCorrelation(sites, coloured=True, seed=seed), n_samples, seed + 2,
                              replicas, parallelism)[:, 0]
        result.control, result.control_stderr = float(c_vals.mean()), batch_stderr(c_vals)
    return result


@dataclass
class BlockStats:
    K: int
    theta: float
    p_bad: float
    p_bad_stderr: float
    C: int | None = None
    q_not_bridged: float | None = None
    q_not_bridged_stderr: float | None = None


def block_stats(q: float, N: int, lam: float | None, K: int, n_samples: int, seed: int, theta: float = 0.75,
                C: int | None = None, i: int = 0, replicas: int = 1, parallelism: int = 1,
                burn_in: int | None = None, sweeps_between: int | None = None,
                schedule: tuple = ("cm", "hb")) -> BlockStats:
    """Estimate the probability that ``B_K`` is theta-bad (FK on the block, free boundary) and,
    with ``C``, that ``B_K^i`` is not bridged (FK on the bridging region, free boundary)."""
    L = K if C is None else (C + 1) * K
    H = K if C is None else max(C, 1) * K
    sim = Simulation(q=q, N=N, L=L, H=H, lam=lam, domain=("block", K), burn_in=burn_in,
                     sweeps_between=sweeps_between, schedule=schedule)
    vals = run_replicas(sim, BlockEvents(K, theta), n_samples, seed, replicas, parallelism)[:, 0]
    bad = 1 - vals
    out = BlockStats(K, theta, float(bad.mean()), batch_stderr(bad))
    if C is not None:
        sim2 = Simulation(q=q, N=N, L=L, H=H, lam=lam, domain=("bridge", K, C), burn_in=burn_in,
                          sweeps_between=sweeps_between, schedule=schedule)
        v2 = 1 - run_replicas(sim2, BlockEvents(K, theta, C, i), n_samples, seed + 1, replicas, parallelism)[:, 0]
        out.C, out.q_not_bridged, out.q_not_bridged_stderr = C, float(v2.mean()), batch_stderr(v2)
    return out


def renormalization_check(p_small: float, p_large: float, C: int) -> tuple[bool, float]:
    """Whether ``p_large <= p_small / 100 + 6 C^2 p_small^2``; returns ``(holds, bound)``."""
    bound = p_small / 100 + 6 * C * C * p_small * p_small
    return p_large <= bound, bound

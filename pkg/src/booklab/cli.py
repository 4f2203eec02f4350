"""Command-line experiment runner.

    booklab SUBCOMMAND [--config PATH] [--seed U64] [--out PATH] [--parallelism N] [--format csv|json]

Config files are flat ``key = value`` text (``#`` starts a comment).  Every
output row carries ``config_hash``, the first 16 hex digits of the SHA-256 of
the effective configuration (sorted ``key=value`` lines, seed included).
Replica seeds follow :mod:`booklab.seeding`.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import exponents as X
from .fk import FKChain, ParamError, Params, to_hex
from .lattice import LatticeError
from .seeding import replica_rng

SCHEMA = "v1"
EXPERIMENTS = ("oracle-check", "sample", "disconnection-scan", "arm-scan", "first-order-probe",
               "factorization-test", "block-stats")

COMMON_KEYS = {"experiment", "seed", "out", "replicas", "samples", "burn_in", "sweeps_between", "format"}
MODEL_KEYS = {"q", "p", "lambda", "J", "beta"}
KEYS = {
    "oracle-check": {"experiment", "seed", "out", "format", "beta"},
    "sample": COMMON_KEYS | MODEL_KEYS | {"N", "L", "H", "bc", "schedule"},
    "disconnection-scan": COMMON_KEYS | MODEL_KEYS | {"N", "L", "scales", "k"},
    "arm-scan": COMMON_KEYS | MODEL_KEYS | {"mode", "L", "scales", "k"},
    "first-order-probe": COMMON_KEYS | MODEL_KEYS | {"N", "sizes"},
    "factorization-test": COMMON_KEYS | MODEL_KEYS | {"N", "L", "height", "x", "control"},
    "block-stats": COMMON_KEYS | MODEL_KEYS | {"N", "K", "theta", "C", "i"},
}
DEFAULTS = {
    "oracle-check": {},
    "sample": {"q": "2", "N": "1", "L": "4", "samples": "10", "bc": "free"},
    "disconnection-scan": {"q": "1", "N": "1", "scales": "8,16,32,64", "samples": "1000"},
    "arm-scan": {"q": "1", "mode": "free", "scales": "8,16,32,64", "samples": "1000"},
    "first-order-probe": {"q": "2", "N": "8", "lambda": "0.99", "sizes": "16,32,64", "samples": "500"},
    "factorization-test": {"q": "2", "N": "3", "lambda": "0.99", "L": "32", "height": "16", "samples": "2000"},
    "block-stats": {"q": "2", "N": "3", "lambda": "0.99", "K": "4", "samples": "200"},
}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    @classmethod
    def build(cls, experiment: str, values: dict[str, str]) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        declared = values.get("experiment")
        if declared is not None and declared != experiment:
            raise ConfigError(f"config is for {declared!r}, not {experiment!r}")
        unknown = set(values) - KEYS[experiment]
        if unknown:
            raise ConfigError(f"unknown keys for {experiment}: {', '.join(sorted(unknown))}")
        merged = dict(DEFAULTS[experiment])
        merged.update(values)
        merged["experiment"] = experiment
        merged.setdefault("seed", "0")
        cfg = cls(experiment, merged)
        cfg.params()  # validates the parameter relations
        return cfg

    # typed accessors
    def get(self, key, cast=str, default=None):
        if key not in self.values:
            return default
        try:
            return cast(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {self.values[key]!r}") from exc

    def ints(self, key) -> list[int]:
        try:
            return [int(v) for v in self.values[key].split(",") if v.strip()]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad integer list for {key}") from exc

    @property
    def seed(self) -> int:
        s = self.get("seed", int, 0)
        if not 0 <= s < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return s

    def params(self) -> Params | None:
        if "q" not in self.values:
            return None
        try:
            return Params(q=self.get("q", float), p=self.get("p", float), lam=self.get("lambda", float),
                          beta=self.get("beta", float), J=self.get("J", float))
        except ParamError as exc:
            raise ConfigError(str(exc)) from exc

    def canonical(self) -> str:
        return "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values) if k not in ("out", "format"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# experiments: each returns (rows, ok)
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run_oracle_check(cfg: ExperimentConfig, parallelism: int):
    from .oracle import oracle_suite

    checks = oracle_suite(cfg.get("beta", float))
    rows = [{"check": c.name, "graph": c.graph, "value": c.value, "expected": c.expected,
             "error": c.error, "tolerance": c.tolerance, "pass": c.passed} for c in checks]
    return rows, all(c.passed for c in checks)


def run_sample(cfg: ExperimentConfig, parallelism: int):
    sim = X.Simulation(q=cfg.get("q", float), N=cfg.get("N", int), L=cfg.get("L", int), H=cfg.get("H", int),
                       lam=cfg.params().lam, p=cfg.params().p, bc=cfg.get("bc"),
                       burn_in=cfg.get("burn_in", int), sweeps_between=cfg.get("sweeps_between", int),
                       schedule=tuple(cfg.get("schedule", str, "cm,hb").split(",")))
    lat = sim.lattice()
    burn, between = sim.chain_settings()
    n, replicas = cfg.get("samples", int), cfg.get("replicas", int, 1)
    rows = []
    for r in range(replicas):
        chain = FKChain(cfg.params(), lat, sim.boundary(lat), replica_rng(cfg.seed, r), schedule=sim.schedule)
        chain.step(burn)
        count = n // replicas + (1 if r < n % replicas else 0)
        for i, c in enumerate(chain.samples(count, between)):
            rows.append({"replica": r, "index": i, "n_edges": lat.n_edges, "bits": to_hex(c)})
    return rows, True


def _scan_rows(res: X.ScanResult):
    rows = [dict(r, kind="row") for r in res.series.csv_rows()]
    fit = {"kind": "fit", **{k: res.series.meta.get(k, "") for k in ("q", "N", "lambda", "bc", "event")}}
    if res.fit is not None:
        fit.update(res.fit.csv_row())
        fit["verdict"] = res.verdict
    else:
        fit["note"] = res.note
    rows.append(fit)
    return rows


def _ladder(cfg: ExperimentConfig):
    Ks = cfg.ints("scales")
    k = cfg.get("k", int, max(1, min(Ks) // 8))
    return [(k, K) for K in Ks]


def run_disconnection_scan(cfg: ExperimentConfig, parallelism: int):
    res = X.disconnection_scan(cfg.get("q", float), cfg.get("N", int, 1), cfg.params().lam, _ladder(cfg),
                               cfg.get("samples", int), cfg.seed, L=cfg.get("L", int),
                               replicas=cfg.get("replicas", int, 1), parallelism=parallelism,
                               burn_in=cfg.get("burn_in", int), sweeps_between=cfg.get("sweeps_between", int))
    return _scan_rows(res), res.fit is not None


def run_arm_scan(cfg: ExperimentConfig, parallelism: int):
    res = X.arm_scan(cfg.get("q", float), cfg.get("mode"), _ladder(cfg), cfg.get("samples", int), cfg.seed,
                     L=cfg.get("L", int), replicas=cfg.get("replicas", int, 1), parallelism=parallelism,
                     burn_in=cfg.get("burn_in", int), sweeps_between=cfg.get("sweeps_between", int))
    return _scan_rows(res), res.fit is not None


def run_first_order_probe(cfg: ExperimentConfig, parallelism: int):
    q, N, lam = cfg.get("q", float), cfg.get("N", int), cfg.params().lam
    res = X.first_order_probe(q, N, lam, cfg.ints("sizes"), cfg.get("samples", int), cfg.seed,
                              replicas=cfg.get("replicas", int, 1), parallelism=parallelism,
                              burn_in=cfg.get("burn_in", int), sweeps_between=cfg.get("sweeps_between", int))
    rows = []
    for j, r in enumerate(res):
        nxt = res[j + 1].p_hat if j + 1 < len(res) else None
        rows.append({"q": q, "N": N, "lambda": lam, "L": r.L, "n": r.n, "p_hat": r.p_hat, "stderr": r.stderr,
                     "ratio_to_next": (r.p_hat / nxt) if nxt else None})
    return rows, True


def run_factorization_test(cfg: ExperimentConfig, parallelism: int):
    lam = cfg.params().lam
    if cfg.get("q", float) != 2:
        raise ConfigError("the factorization test needs q = 2")
    res = X.factorization_probe(cfg.get("L", int), cfg.get("height", int), lam, cfg.get("samples", int), cfg.seed,
                                N=cfg.get("N", int), x=cfg.get("x", int, 0), replicas=cfg.get("replicas", int, 1),
                                parallelism=parallelism, control=cfg.get("control", str, "1") == "1",
                                burn_in=cfg.get("burn_in", int), sweeps_between=cfg.get("sweeps_between", int))
    row = {"N": cfg.get("N", int), "lambda": lam, "L": cfg.get("L", int), "height": cfg.get("height", int),
           "numerator": res.numerator, "numerator_stderr": res.numerator_stderr,
           "factor": res.factors[0][0], "factor_stderr": res.factors[0][1],
           "ratio": res.ratio, "ratio_stderr": res.ratio_stderr,
           "control": res.control, "control_stderr": res.control_stderr}
    return [row], True


def run_block_stats(cfg: ExperimentConfig, parallelism: int):
    res = X.block_stats(cfg.get("q", float), cfg.get("N", int), cfg.params().lam, cfg.get("K", int),
                        cfg.get("samples", int), cfg.seed, theta=cfg.get("theta", float, 0.75),
                        C=cfg.get("C", int), i=cfg.get("i", int, 0), replicas=cfg.get("replicas", int, 1),
                        parallelism=parallelism, burn_in=cfg.get("burn_in", int),
                        sweeps_between=cfg.get("sweeps_between", int))
    return [{"K": res.K, "theta": res.theta, "p_bad": res.p_bad, "p_bad_stderr": res.p_bad_stderr,
             "C": res.C, "q_not_bridged": res.q_not_bridged, "q_not_bridged_stderr": res.q_not_bridged_stderr}], True


RUNNERS = {
    "oracle-check": run_oracle_check,
    "sample": run_sample,
    "disconnection-scan": run_disconnection_scan,
    "arm-scan": run_arm_scan,
    "first-order-probe": run_first_order_probe,
    "factorization-test": run_factorization_test,
    "block-stats": run_block_stats,
}


def render(rows: list[dict], cfg: ExperimentConfig, fmt: str) -> str:
    rows = [{"schema": SCHEMA, "config_hash": cfg.hash, **r} for r in rows]
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
        return json.dumps({"experiment": cfg.experiment, "config_hash": cfg.hash, "seed": cfg.seed,
                           "rows": clean}, indent=1, sort_keys=False, default=_json_default) + "\n"
    header: list[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in header})
    return buf.getvalue()


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def run(experiment: str, values: dict[str, str], parallelism: int = 1, fmt: str | None = None) -> tuple[str, bool]:
    """Run one experiment; returns ``(rendered output, success)``."""
    cfg = ExperimentConfig.build(experiment, values)
    rows, ok = RUNNERS[experiment](cfg, parallelism)
    return render(rows, cfg, fmt or cfg.get("format", str, "csv")), ok


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="booklab", description="FK / Potts / random-current experiments on book lattices")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help="output file (default: the config's out, else stdout)")
        sp.add_argument("--parallelism", type=int, default=1, help="replicas run concurrently")
        sp.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = {}
        if args.config:
            with open(args.config) as fh:
                values = parse_config_text(fh.read())
        if args.seed is not None:
            values["seed"] = str(args.seed)
        if args.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        text, ok = run(args.experiment, values, args.parallelism, args.format)
        out = args.out or values.get("out")
        if out:
            with open(out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (ConfigError, ParamError, LatticeError, ValueError, OSError) as exc:
        print(f"booklab: error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark matrices over seeded instances and quantile aggregation.

For every instance ``w`` the optimal value is estimated once, every method
cell is run from the default start, and its objective trace is mapped to
the normalized gap ``(f(x^k) - f*) / (f(x^0) - f*)``.  Quantiles across
instances use the nearest-rank rule on the sorted sample: the ``p``
quantile of ``v_(1) <= ... <= v_(W)`` is ``v_(ceil(p W))``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BlockCGError, ConfigurationError, NumericalFailure
from .problems import GENERATORS
from .solver import METHOD_NAMES, SolverConfig, estimate_optimum, run

logger = logging.getLogger(__name__)

__all__ = [
    "QUANTILES",
    "CSV_COLUMNS",
    "MethodCell",
    "BenchSpec",
    "default_cells",
    "instance_seed",
    "run_instance",
    "nearest_rank",
    "aggregate",
    "write_csv",
    "run_bench",
]

QUANTILES = (
    ("q02", 0.02),
    ("q05", 0.05),
    ("q10", 0.10),
    ("q20", 0.20),
    ("q30", 0.30),
    ("median", 0.50),
    ("q70", 0.70),
    ("q80", 0.80),
    ("q90", 0.90),
    ("q95", 0.95),
    ("q98", 0.98),
)
CSV_COLUMNS = ("method", "k") + tuple(name for name, _ in QUANTILES)


@dataclass(frozen=True)
class MethodCell:
    """One (scheduler, stepsize) combination; ``encoding`` overrides the
    box-quadratic encoding for this cell only."""

    scheduler: str
    stepsize: str
    encoding: str | None = None
    kappa: float = 2.0
    beta_init: float = 1.0

    def __post_init__(self):
        # validates names and resolves aliases
        cfg = SolverConfig(self.scheduler, self.stepsize, kappa=self.kappa, beta_init=self.beta_init)
        object.__setattr__(self, "scheduler", cfg.scheduler)
        object.__setattr__(self, "stepsize", cfg.stepsize)

    @property
    def label(self) -> str:
        return f"{METHOD_NAMES[self.scheduler]}/{self.stepsize}"


def default_cells() -> list[MethodCell]:
    """CG, RBCG, CBCG-C and CBCG-P, each with the predefined rule, backtracking
    on the ``A = I`` encoding and exact line search on the composite one.

    Backtracking starts from ``beta_init = 1e-4``: the memory ``xi`` never
    decreases, so a start above every ``beta_i`` would never adapt.
    """
    cells = []
    for sched in ("full", "uniform", "cyclic", "permutation"):
        cells.append(MethodCell(sched, "predefined", "composite"))
        cells.append(MethodCell(sched, "backtracking", "identity", beta_init=1e-4))
        cells.append(MethodCell(sched, "line_search", "composite"))
    return cells


@dataclass
class BenchSpec:
    generator: str = "box_quadratic"
    params: dict = field(default_factory=lambda: {"d": 20, "n_samples": 40})
    W: int = 50
    iters: int = 10
    seed: int = 0
    estimate_iterations: int = 200
    methods: list = field(default_factory=default_cells)

    def __post_init__(self):
        self.generator = self.generator.replace("-", "_")
        if self.generator not in GENERATORS:
            raise ConfigurationError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        if int(self.W) != self.W or self.W < 1:
            raise ConfigurationError(f"W must be a positive integer, got {self.W!r}")
        if self.iters < 0 or self.estimate_iterations < 0:
            raise ConfigurationError("iteration budgets must be non-negative")
        self.methods = [m if isinstance(m, MethodCell) else MethodCell(**m) for m in self.methods]
        if not self.methods:
            raise ConfigurationError("a bench needs at least one method cell")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("method cells must have distinct labels")
        if self.generator != "box_quadratic" and any(m.encoding for m in self.methods):
            raise ConfigurationError("per-cell encodings exist only for box_quadratic")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown bench spec fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = [asdict(m) for m in self.methods]
        return out


def instance_seed(root_seed: int, w: int) -> int:
    """Seed of instance ``w``; depends on the index only, never on the worker."""
    return int(np.random.SeedSequence([int(root_seed), int(w)]).generate_state(1, dtype=np.uint64)[0])


def _make(spec: BenchSpec, seed: int, encoding: str | None):
    params = dict(spec.params)
    if encoding is not None:
        params["encoding"] = encoding
    return GENERATORS[spec.generator](**params, seed=seed)


def run_instance(spec: BenchSpec, w: int) -> dict:
    """Estimate ``f*`` and run every cell on instance ``w``.

    ``f*`` is the smaller of the optimum estimate and every objective value
    seen by the cells, so normalized gaps are never negative.
    """
    seed = instance_seed(spec.seed, w)
    base = _make(spec, seed, None)
    est = estimate_optimum(base, spec.estimate_iterations, seed=seed)
    runs = {}
    for cell in spec.methods:
        prob = _make(spec, seed, cell.encoding) if cell.encoding else base
        cfg = SolverConfig(
            scheduler=cell.scheduler,
            stepsize=cell.stepsize,
            max_outer_iterations=spec.iters,
            record_gap=False,
            seed=seed,
            kappa=cell.kappa,
            beta_init=cell.beta_init,
        )
        try:
            tr = run(prob, cfg)
            runs[cell.label] = {"status": "ok", "H": tr.H}
        except (NumericalFailure, BlockCGError) as exc:
            logger.warning("instance %d, %s failed: %s", w, cell.label, exc)
            runs[cell.label] = {"status": "failed", "error": str(exc), "H": None}
    f_star = min([est.value] + [min(r["H"]) for r in runs.values() if r["H"]])
    for r in runs.values():
        if r["H"] is None:
            r["normalized"] = None
            continue
        f0 = r["H"][0]
        scale = f0 - f_star
        r["normalized"] = [(h - f_star) / scale if scale > 0 else 0.0 for h in r["H"]]
    return {"w": w, "seed": seed, "f_star": f_star, "f_star_gap": est.gap, "runs": runs}


def nearest_rank(sorted_values, p: float) -> float:
    n = len(sorted_values)
    # p * n carries rounding (0.07 * 100 > 7)
    idx = min(max(math.ceil(round(p * n, 9)) - 1, 0), n - 1)
    return sorted_values[idx]


def aggregate(results: list, labels: list, iters: int):
    """Quantile rows ``(method, k, q02, ..., q98)`` and the labels of
    incomplete cells (some instance failed or stopped short)."""
    rows, incomplete = [], []
    for label in labels:
        series = [r["runs"][label]["normalized"] for r in results]
        ok = [s for s in series if s is not None and len(s) == iters + 1]
        if len(ok) < len(series):
            incomplete.append(label)
        if not ok:
            continue
        for k in range(iters + 1):
            vals = sorted(s[k] for s in ok)
            rows.append([label, k] + [nearest_rank(vals, p) for _, p in QUANTILES])
    return rows, incomplete


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


def run_bench(spec: BenchSpec, workers: int = 1, out_dir=None) -> dict:
    """Run the whole matrix; returns ``{"rows", "incomplete", "results"}``.

    With ``out_dir`` it also writes ``summary.csv``, ``runs.jsonl`` (one
    normalized trace per instance and cell) and ``summary.json``.
    """
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    idx = list(range(spec.W))
    if workers == 1:
        results = [run_instance(spec, w) for w in idx]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_instance, [spec] * len(idx), idx))
    labels = [m.label for m in spec.methods]
    rows, incomplete = aggregate(results, labels, spec.iters)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / "summary.csv")
        with open(out / "runs.jsonl", "w") as fh:
            for r in results:
                for label in labels:
                    rec = {"w": r["w"], "seed": r["seed"], "method": label, "f_star": r["f_star"]}
                    rec.update({k: v for k, v in r["runs"][label].items() if k != "H"})
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(out / "summary.json", "w") as fh:
            json.dump({"spec": spec.to_dict(), "incomplete": incomplete}, fh, sort_keys=True, indent=1)
    return {"rows": rows, "incomplete": incomplete, "results": results}

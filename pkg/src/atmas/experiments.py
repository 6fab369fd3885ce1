"""Accuracy sweeps over the synthetic scenario: illegal-access share, factor count, factor combinations.

Protocol: one model per MU, stratified 70/30 split per MU, confusion
matrices pooled over MUs for each (seed, cell). Spoof is the positive
class. Streams are generated once per seed and reused by every cell, so
fractions, factor sets and algorithms are compared on common draws.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from atmas.auth.forest import ALGORITHMS, TrainingError, train_model
from atmas.auth.metrics import ConfusionMatrix, compute_accuracy
from atmas.config import ConfigError, ScenarioConfig
from atmas.scenario.dataset import ALL_FACTORS, Dataset, Streams, generate_streams, mix_streams

logger = logging.getLogger(__name__)

ROW_HEADER = ("algorithm", "illegal_fraction", "seed", "acc", "tp", "fp", "tn", "fn", "factors", "status")
SUMMARY_HEADER = ("algorithm", "illegal_fraction", "factors", "n", "mean_acc", "std_acc", "min_acc", "max_acc")
RANKING_HEADER = ("rank", "factors", "contains_f1", "n", "mean_acc", "std_acc")


def factor_label(factors: Sequence[int]) -> str:
    return "-".join(str(f) for f in sorted(factors))


def cumulative_sets(n: int = 9) -> list[tuple[int, ...]]:
    return [tuple(range(1, k + 1)) for k in range(1, n + 1)]


def combo_sets(k: int = 3, pool: Sequence[int] = ALL_FACTORS) -> list[tuple[int, ...]]:
    return list(itertools.combinations(sorted(pool), k))


@dataclass(frozen=True)
class ResultRow:
    algorithm: str
    illegal_fraction: float
    seed: int
    factors: tuple[int, ...]
    cm: ConfusionMatrix | None
    status: str = "ok"

    @property
    def acc(self) -> float | None:
        return None if self.cm is None else compute_accuracy(self.cm)

    def sort_key(self):
        return (self.algorithm, self.illegal_fraction, len(self.factors), self.factors, self.seed)

    def csv_row(self) -> list:
        if self.cm is None:
            counts = ["", "", "", ""]
            acc = ""
        else:
            counts = [self.cm.tp, self.cm.fp, self.cm.tn, self.cm.fn]
            acc = repr(self.acc)
        return [self.algorithm, repr(self.illegal_fraction), self.seed, acc, *counts, factor_label(self.factors), self.status]


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    illegal_fraction: float
    factors: tuple[int, ...]
    n: int
    mean_acc: float
    std_acc: float
    min_acc: float
    max_acc: float

    def csv_row(self) -> list:
        return [
            self.algorithm, repr(self.illegal_fraction), factor_label(self.factors), self.n,
            repr(self.mean_acc), repr(self.std_acc), repr(self.min_acc), repr(self.max_acc),
        ]


@dataclass
class SweepSpec:
    kind: str  # illegal | factors | combos
    cfg: ScenarioConfig
    algorithms: list[str]
    fractions: list[float]
    factor_sets: list[tuple[int, ...]]
    seeds: list[int]
    n_mu: int | None = None
    n_windows: int | None = None

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        for f in self.fractions:
            if not 0 <= f <= 0.95:
                raise ConfigError(f"illegal fraction {f} outside [0, 0.95]")
        for fs in self.factor_sets:
            if not fs or not set(fs) <= set(ALL_FACTORS):
                raise ConfigError(f"bad factor set {fs}")


def default_seeds(cfg: ScenarioConfig) -> list[int]:
    return [cfg.seed + i for i in range(cfg.experiment.n_seeds)]


def illegal_access_spec(cfg: ScenarioConfig, seeds=None, algorithms=None, fractions=None) -> SweepSpec:
    return SweepSpec(
        "illegal", cfg,
        list(algorithms or cfg.experiment.algorithms),
        list(cfg.experiment.fractions if fractions is None else fractions),
        [tuple(ALL_FACTORS)],
        list(seeds or default_seeds(cfg)),
    )


def factor_count_spec(cfg: ScenarioConfig, seeds=None, algorithm: str = "forest") -> SweepSpec:
    return SweepSpec("factors", cfg, [algorithm], [cfg.dataset.illegal_fraction], cumulative_sets(),
                     list(seeds or default_seeds(cfg)))


def factor_combo_spec(cfg: ScenarioConfig, seeds=None, algorithm: str = "forest", k: int = 3) -> SweepSpec:
    return SweepSpec("combos", cfg, [algorithm], [cfg.dataset.illegal_fraction], combo_sets(k),
                     list(seeds or default_seeds(cfg)))


def stratified_split(y: np.ndarray, rng: np.random.Generator, test_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; each class contributes ``round(test_fraction * n_c)`` test rows."""
    train, test = [], []
    for c in (0, 1):
        ids = rng.permutation(np.flatnonzero(y == c))
        k = int(round(test_fraction * len(ids)))
        test.append(ids[:k])
        train.append(ids[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def evaluate_cell(
    ds: Dataset,
    n_mu: int,
    seed: int,
    factors: Sequence[int],
    algorithm: str,
    cfg: ScenarioConfig,
) -> tuple[ConfusionMatrix, str]:
    """Per-MU train/test, pooled confusion matrix.

    A single-class training split (illegal fraction 0) falls back to a
    constant predictor for that class and marks the cell ``degenerate``.
    """
    cm = ConfusionMatrix()
    status = "ok"
    for mu in range(n_mu):
        d = ds.for_mu(mu)
        rng = np.random.default_rng([seed, mu])
        tr, te = stratified_split(d.y, rng, cfg.experiment.test_fraction)
        ytr = d.y[tr]
        if len(np.unique(ytr)) < 2:
            pred = np.full(len(te), ytr[0] if len(ytr) else 0, dtype=np.int8)
            status = "degenerate"
        else:
            model = train_model(algorithm, d.X[tr], ytr, factors, cfg.forest, rng)
            pred = model.classify(d.X[te])
        cm = cm + ConfusionMatrix.from_predictions(d.y[te], pred)
    return cm, status


def _seed_rows(spec: SweepSpec, seed: int) -> list[ResultRow]:
    rows = []
    streams: Streams = generate_streams(spec.cfg, seed, spec.n_mu, spec.n_windows)
    for frac in spec.fractions:
        ds = mix_streams(streams, frac)
        for factors in spec.factor_sets:
            for alg in spec.algorithms:
                try:
                    cm, status = evaluate_cell(ds, streams.n_mu, seed, factors, alg, spec.cfg)
                    rows.append(ResultRow(alg, frac, seed, tuple(factors), cm, status))
                except (TrainingError, ValueError) as exc:
                    logger.warning("cell failed: %s %s %s seed=%d: %s", alg, frac, factors, seed, exc)
                    rows.append(ResultRow(alg, frac, seed, tuple(factors), None, f"failed: {exc}"))
    return rows


def run_sweep(spec: SweepSpec, progress: Callable[[str], None] | None = None, jobs: int = 1) -> list[ResultRow]:
    """Run every cell; seeds are independent jobs, so ``jobs > 1`` fans them out to worker processes."""
    spec.validate()
    rows = []
    if jobs > 1 and len(spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for seed, part in zip(spec.seeds, pool.map(_seed_rows, [spec] * len(spec.seeds), spec.seeds)):
                rows += part
                if progress is not None:
                    progress(f"{spec.kind}: seed {seed} done")
    else:
        for seed in spec.seeds:
            t0 = time.perf_counter()
            rows += _seed_rows(spec, seed)
            if progress is not None:
                progress(f"{spec.kind}: seed {seed} done in {time.perf_counter() - t0:.1f}s")
    return sorted(rows, key=ResultRow.sort_key)


def run_illegal_access_sweep(cfg: ScenarioConfig, **kw) -> list[ResultRow]:
    return run_sweep(illegal_access_spec(cfg, **kw))


def run_factor_count_sweep(cfg: ScenarioConfig, **kw) -> list[ResultRow]:
    return run_sweep(factor_count_spec(cfg, **kw))


def run_factor_combo_sweep(cfg: ScenarioConfig, **kw) -> list[ResultRow]:
    return run_sweep(factor_combo_spec(cfg, **kw))


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r.algorithm, r.illegal_fraction, r.factors)
        groups.setdefault(key, [])
        if r.cm is not None:
            groups[key].append(r.acc)
    out = []
    for (alg, frac, factors), accs in groups.items():
        a = np.asarray(accs, dtype=np.float64)
        if len(a):
            out.append(SummaryRow(alg, frac, factors, len(a), float(a.mean()), float(a.std()), float(a.min()), float(a.max())))
        else:
            nan = math.nan
            out.append(SummaryRow(alg, frac, factors, 0, nan, nan, nan, nan))
    return sorted(out, key=lambda s: (s.algorithm, s.illegal_fraction, len(s.factors), s.factors))


def combo_ranking(summary: Sequence[SummaryRow]) -> list[SummaryRow]:
    """Best first; ties broken by factor set."""
    return sorted(summary, key=lambda s: (-s.mean_acc, s.factors))


def group_means_by_factor(summary: Sequence[SummaryRow], factor: int) -> tuple[float, float]:
    """Mean of per-combination mean ACC with and without ``factor``."""
    with_f = [s.mean_acc for s in summary if factor in s.factors]
    without = [s.mean_acc for s in summary if factor not in s.factors]
    return float(np.mean(with_f)), float(np.mean(without))


# -- output -----------------------------------------------------------------------


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_rows(rows: Sequence[ResultRow], path: str | Path) -> Path:
    return _write_csv(Path(path), ROW_HEADER, [r.csv_row() for r in sorted(rows, key=ResultRow.sort_key)])


def write_summary(summary: Sequence[SummaryRow], path: str | Path) -> Path:
    return _write_csv(Path(path), SUMMARY_HEADER, [s.csv_row() for s in summary])


def write_ranking(summary: Sequence[SummaryRow], path: str | Path) -> Path:
    rows = [
        [i + 1, factor_label(s.factors), int(1 in s.factors), s.n, repr(s.mean_acc), repr(s.std_acc)]
        for i, s in enumerate(combo_ranking(summary))
    ]
    return _write_csv(Path(path), RANKING_HEADER, rows)


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_directory(out: str | Path, experiment: str, tag: str = "") -> Path:
    """``<out>/<experiment>/<tag or UTC timestamp>``."""
    name = tag or time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    return Path(out) / experiment / name


@dataclass
class SweepResult:
    rows: list[ResultRow]
    summary: list[SummaryRow]
    files: dict[str, Path] = field(default_factory=dict)


def run_and_write(spec: SweepSpec, out_dir: str | Path, progress=None, jobs: int = 1) -> SweepResult:
    rows = run_sweep(spec, progress, jobs)
    summary = summarize(rows)
    out = Path(out_dir)
    files = {"rows": write_rows(rows, out / "rows.csv"), "summary": write_summary(summary, out / "summary.csv")}
    if spec.kind == "combos":
        files["ranking"] = write_ranking(summary, out / "ranking.csv")
    return SweepResult(rows, summary, files)

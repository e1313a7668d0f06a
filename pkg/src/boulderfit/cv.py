"""K-fold experiment harness over the (model family, replacement level N,
latent dimension d) grid.

Per fold, grouping is rebuilt from the training attempts only: replacement
levels are thresholded on training counts and test-set climbers unseen in
training fall back to the REPLACEMENT row, so nothing about the held-out
fold leaks into the grouping. All grid cells share one fold split, which
pairs the model comparisons.
"""

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import t as t_dist

from . import logreg, metrics, pmf
from .data import (
    Dataset,
    FoldSplit,
    apply_problem_grouping,
    apply_replacement_level,
    with_reserved_groups,
)

DEFAULT_REPLACEMENT_LEVELS = (25, 50, 100, 250, 500, 1000)
DEFAULT_LATENT_DIMS = (1, 2, 3, 4, 5)
DEFAULT_MIN_PROBLEM_CLIMBERS = 10

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ExperimentGrid:
    replacement_levels: tuple = DEFAULT_REPLACEMENT_LEVELS
    latent_dims: tuple = DEFAULT_LATENT_DIMS
    include_logreg: bool = True
    k: int = 5
    seed: int = 0
    pmf_config: pmf.PmfConfig = pmf.PmfConfig(d=1)
    logreg_config: logreg.TrainConfig = logreg.TrainConfig()
    min_problem_climbers: int = DEFAULT_MIN_PROBLEM_CLIMBERS

    def __post_init__(self):
        if not self.replacement_levels:
            raise ValueError("replacement_levels must be nonempty")
        if not self.latent_dims and not self.include_logreg:
            raise ValueError("grid selects no models")
        if self.k < 2:
            raise ValueError("k must be >= 2")


@dataclass(frozen=True)
class CellSpec:
    """One grid point: a model family at one replacement level."""

    model: str  # "logreg" | "pmf"
    N: int
    d: Optional[int] = None
    pmf_config: pmf.PmfConfig = pmf.PmfConfig(d=1)
    logreg_config: logreg.TrainConfig = logreg.TrainConfig()
    min_problem_climbers: int = DEFAULT_MIN_PROBLEM_CLIMBERS

    def __post_init__(self):
        if self.model not in ("logreg", "pmf"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "pmf" and (self.d is None or self.d < 1):
            raise ValueError("pmf cells need a latent dimension d >= 1")

    @property
    def cell_id(self) -> str:
        d_part = "none" if self.d is None else str(self.d)
        return f"{self.model}_N{self.N}_d{d_part}"


@dataclass(frozen=True)
class CellResult:
    model: str
    N: int
    d: Optional[int]
    split: str
    per_fold: tuple
    mean: dict
    ci_halfwidth: dict


def confidence_interval(values: Sequence[float]) -> tuple:
    """Mean and 95% halfwidth t*(k-1) * s / sqrt(k) over k fold values."""
    values = np.asarray(values, dtype=np.float64)
    k = len(values)
    if k < 2:
        raise ValueError("confidence interval needs at least 2 values")
    mean = float(values.mean())
    s = float(values.std(ddof=1))
    tstar = float(t_dist.ppf(0.975, k - 1))
    return mean, tstar * s / np.sqrt(k)


def fold_training_dataset(d: Dataset, folds: FoldSplit, fold: int, spec: CellSpec) -> Dataset:
    """Grouped training dataset for one fold.

    Built from the training attempts only; the reserved fallback groups are
    always present so held-out entities can resolve.
    """
    train_attempts = [a for a, lab in zip(d.attempts, folds.assignments) if lab != fold]
    tds = Dataset.from_attempts(train_attempts)
    tds = apply_replacement_level(tds, spec.N)
    if spec.model == "pmf":
        tds = apply_problem_grouping(tds, spec.min_problem_climbers)
    return with_reserved_groups(tds, add_replacement=True, add_rare_problem=spec.model == "pmf")


def _fit_and_score(tds: Dataset, spec: CellSpec, test_attempts) -> tuple:
    if spec.model == "logreg":
        model = logreg.train_logreg(tds, spec.logreg_config)
        train_probs = logreg.score_attempts(model, tds.attempts)
        test_probs = logreg.score_attempts(model, test_attempts)
    else:
        cfg = dataclasses.replace(spec.pmf_config, d=spec.d)
        model = pmf.train_pmf(tds, cfg)
        train_probs = pmf.score_attempts(model, tds.attempts)
        test_probs = pmf.score_attempts(model, test_attempts)
    return train_probs, test_probs


def run_cell(d: Dataset, spec: CellSpec, folds: FoldSplit) -> tuple:
    """Train/evaluate one grid cell across all folds.

    Returns (train CellResult, test CellResult) aggregated with 95%
    confidence intervals. Folds whose test labels are single-class get no
    roc_auc; the aggregate uses the remaining folds.
    """
    reports = run_cell_folds(d, spec, folds)
    return aggregate_cell(spec, reports)


def run_cell_folds(d: Dataset, spec: CellSpec, folds: FoldSplit) -> dict:
    """Per-fold MetricsReports for one cell: {"train": [...], "test": [...]}."""
    out = {"train": [], "test": []}
    for fold in range(folds.k):
        tds = fold_training_dataset(d, folds, fold, spec)
        test_attempts = [a for a, lab in zip(d.attempts, folds.assignments) if lab == fold]
        train_probs, test_probs = _fit_and_score(tds, spec, test_attempts)
        train_ps = metrics.PredictionSet(
            tuple((a.outcome, p) for a, p in zip(tds.attempts, train_probs))
        )
        test_ps = metrics.PredictionSet(
            tuple((a.outcome, p) for a, p in zip(test_attempts, test_probs))
        )
        out["train"].append(metrics.evaluate(train_ps))
        out["test"].append(metrics.evaluate(test_ps))
    return out


def aggregate_cell(spec: CellSpec, reports: dict) -> tuple:
    results = []
    for split in SPLITS:
        per_fold = tuple(reports[split])
        mean = {}
        ci = {}
        for name in metrics.METRIC_NAMES:
            vals = [r.value(name) for r in per_fold if r.value(name) is not None]
            if not vals:
                mean[name] = None
                ci[name] = None
            elif len(vals) == 1:
                mean[name] = float(vals[0])
                ci[name] = None
            else:
                mean[name], ci[name] = confidence_interval(vals)
        results.append(
            CellResult(
                model=spec.model, N=spec.N, d=spec.d, split=split,
                per_fold=per_fold, mean=mean, ci_halfwidth=ci,
            )
        )
    return tuple(results)


def enumerate_cells(grid: ExperimentGrid) -> list:
    """Grid points in deterministic order: logreg per N, then pmf per (N, d)."""
    cells = []
    for N in sorted(grid.replacement_levels):
        if grid.include_logreg:
            cells.append(
                CellSpec(
                    model="logreg", N=N,
                    pmf_config=grid.pmf_config, logreg_config=grid.logreg_config,
                    min_problem_climbers=grid.min_problem_climbers,
                )
            )
        for d in sorted(grid.latent_dims):
            cells.append(
                CellSpec(
                    model="pmf", N=N, d=d,
                    pmf_config=grid.pmf_config, logreg_config=grid.logreg_config,
                    min_problem_climbers=grid.min_problem_climbers,
                )
            )
    return cells


def _run_cell_task(args) -> tuple:
    dataset, spec, folds = args
    return spec.cell_id, run_cell_folds(dataset, spec, folds)


def run_grid(d: Dataset, grid: ExperimentGrid, jobs: int = 1) -> list:
    """All cells of the grid against one shared fold split.

    Cells are independent; with jobs > 1 they run in worker processes. The
    returned list is ordered by (model, N, d, split) regardless of
    completion order.
    """
    from .data import split_folds

    folds = split_folds(d, grid.k, grid.seed)
    cells = enumerate_cells(grid)
    fold_reports = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for cell_id, reports in pool.map(_run_cell_task, [(d, spec, folds) for spec in cells]):
                fold_reports[cell_id] = reports
    else:
        for spec in cells:
            fold_reports[spec.cell_id] = run_cell_folds(d, spec, folds)
    results = []
    for spec in sorted(cells, key=_cell_sort_key):
        results.extend(aggregate_cell(spec, fold_reports[spec.cell_id]))
    return results


def _cell_sort_key(spec: CellSpec) -> tuple:
    return (spec.model, spec.N, -1 if spec.d is None else spec.d)


def write_results_csv(path, results: Sequence[CellResult]) -> None:
    """One row per (cell, split, metric): mean, CI halfwidth, fold values."""
    k = max(len(r.per_fold) for r in results)
    header = ["model", "N", "d", "split", "metric", "mean", "ci_halfwidth"]
    header += [f"fold_{i}" for i in range(k)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in _sorted_results(results):
            for name in metrics.METRIC_NAMES:
                row = [
                    r.model,
                    r.N,
                    "" if r.d is None else r.d,
                    r.split,
                    name,
                    _fmt(r.mean[name]),
                    _fmt(r.ci_halfwidth[name]),
                ]
                row += [_fmt(rep.value(name)) for rep in r.per_fold]
                row += [""] * (k - len(r.per_fold))
                writer.writerow(row)


def write_facet_csv(path, results: Sequence[CellResult], N: int) -> None:
    """Plot-ready slice of the results table for one replacement level."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "d", "split", "metric", "mean", "ci_halfwidth"])
        for r in _sorted_results(results):
            if r.N != N:
                continue
            for name in metrics.METRIC_NAMES:
                writer.writerow(
                    [r.model, "" if r.d is None else r.d, r.split, name,
                     _fmt(r.mean[name]), _fmt(r.ci_halfwidth[name])]
                )


def _sorted_results(results: Sequence[CellResult]) -> list:
    return sorted(
        results,
        key=lambda r: (r.model, r.N, -1 if r.d is None else r.d, SPLITS.index(r.split)),
    )


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))

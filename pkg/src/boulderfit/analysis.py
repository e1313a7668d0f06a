"""Interpretation of learned embeddings: PCA, correlations against climber
variables, and plot-ready projections.

PCA is an eigendecomposition of the sample covariance (divisor m-1). The
sign of each component is arbitrary, so the entry of largest magnitude is
made positive for reproducible output. Climber PCA runs on all model rows
except the REPLACEMENT row, which aggregates unrelated climbers.
"""

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import RARE_PROBLEM, REPLACEMENT, Dataset, problem_label
from .logreg import LogRegModel
from .pmf import PmfModel

# A correlation needs at least this many complete pairs to be reported.
MIN_COMPLETE_PAIRS = 3


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # (d, d), row k = k-th principal axis
    explained_variance_ratio: np.ndarray  # (d,), non-increasing, sums to 1
    scores: np.ndarray  # (m, d) projected coordinates
    center: np.ndarray  # (d,) mean subtracted before rotation
    degenerate: bool = False  # zero-variance input; ratios set uniform


def pca(embeddings: np.ndarray) -> PcaResult:
    """Center-then-rotate decomposition of an m x d point cloud."""
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("embeddings must be a 2-D array")
    m, d = X.shape
    if m < 2:
        raise ValueError(f"pca needs at least 2 points, got {m}")
    if d < 1:
        raise ValueError("pca needs at least 1 dimension")
    center = X.mean(axis=0)
    Xc = X - center
    cov = Xc.T @ Xc / (m - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order].T
    # sign convention: largest-magnitude entry of each axis is positive
    for k in range(d):
        if components[k, np.argmax(np.abs(components[k]))] < 0:
            components[k] = -components[k]
    scores = Xc @ components.T
    total = eigvals.sum()
    degenerate = total <= 0.0
    ratios = np.full(d, 1.0 / d) if degenerate else eigvals / total
    return PcaResult(
        components=components,
        explained_variance_ratio=ratios,
        scores=scores,
        center=center,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class ClimberVariables:
    """Per-climber-group covariates, aligned with a list of group labels.

    lr_coef and height_cm are optional per entry (None when unavailable).
    """

    labels: tuple
    lr_coef: tuple
    n_climbs: tuple
    p_success: tuple
    height_cm: tuple

    def __post_init__(self):
        n = len(self.labels)
        for name in ("lr_coef", "n_climbs", "p_success", "height_cm"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} is not aligned with labels")

    def columns(self) -> dict:
        """Variable name -> float array with NaN for missing entries.

        Variables that are missing everywhere are omitted.
        """
        out = {}
        for name in ("lr_coef", "n_climbs", "p_success", "height_cm"):
            vals = np.array(
                [np.nan if v is None else float(v) for v in getattr(self, name)],
                dtype=np.float64,
            )
            if not np.all(np.isnan(vals)):
                out[name] = vals
        return out


def climber_pca(model: PmfModel) -> tuple:
    """PCA of climber embeddings; returns (group labels, PcaResult).

    The REPLACEMENT row is excluded: it is a shared bucket, not a climber.
    """
    labels = [
        label
        for label in sorted(model.climber_index, key=model.climber_index.get)
        if label != REPLACEMENT
    ]
    rows = [model.climber_index[label] for label in labels]
    return tuple(labels), pca(model.U[rows])


def build_climber_variables(
    model: PmfModel,
    dataset: Dataset,
    labels: Sequence[str],
    logreg_model: Optional[LogRegModel] = None,
    heights: Optional[Sequence] = None,
) -> ClimberVariables:
    """Assemble covariates for the given climber groups from a reference
    dataset (attempt counts, success rates), an optional logistic-regression
    model (coefficients), and optional height metadata."""
    attempts_per = {label: 0 for label in labels}
    successes_per = {label: 0 for label in labels}
    for a in dataset.attempts:
        label = a.climber if a.climber in model.climber_index else REPLACEMENT
        if label in attempts_per:
            attempts_per[label] += 1
            successes_per[label] += a.outcome
    height_by_name = {}
    for meta in heights or []:
        if meta.height_cm is not None:
            height_by_name[meta.climber] = meta.height_cm
    lr = []
    n_climbs = []
    p_success = []
    height = []
    for label in labels:
        lr.append(logreg_model.beta_climber.get(label) if logreg_model else None)
        n_climbs.append(attempts_per[label])
        p_success.append(successes_per[label] / attempts_per[label] if attempts_per[label] else 0.0)
        height.append(height_by_name.get(label))
    return ClimberVariables(
        labels=tuple(labels),
        lr_coef=tuple(lr),
        n_climbs=tuple(n_climbs),
        p_success=tuple(p_success),
        height_cm=tuple(height),
    )


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple
    values: np.ndarray  # Pearson r, NaN where undefined
    counts: np.ndarray  # complete pairs used per entry


def correlation_matrix(scores: PcaResult, vars: ClimberVariables) -> CorrelationMatrix:
    """Pearson correlations over {PC1..PCd} plus the climber variables.

    Optional variables use pairwise-complete observations; entries backed
    by fewer than MIN_COMPLETE_PAIRS pairs are NaN. The diagonal is exactly
    1 and the matrix is symmetric.
    """
    if len(vars.labels) != scores.scores.shape[0]:
        raise ValueError("variables are not aligned with PCA scores")
    columns = {f"PC{k + 1}": scores.scores[:, k] for k in range(scores.scores.shape[1])}
    columns.update(vars.columns())
    labels = tuple(columns)
    size = len(labels)
    values = np.full((size, size), np.nan)
    counts = np.zeros((size, size), dtype=int)
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if j < i:
                continue
            mask = ~(np.isnan(columns[a]) | np.isnan(columns[b]))
            k = int(mask.sum())
            counts[i, j] = counts[j, i] = k
            if i == j:
                values[i, j] = 1.0
                continue
            if k < MIN_COMPLETE_PAIRS:
                continue
            x = columns[a][mask]
            y = columns[b][mask]
            if x.std() == 0.0 or y.std() == 0.0:
                continue
            r = float(np.corrcoef(x, y)[0, 1])
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(labels=labels, values=values, counts=counts)


def problem_projection(model: PmfModel, d: Dataset) -> list:
    """One row per problem column: label, PC coordinates, hold type,
    empirical success rate. Groups mixing both hold types (RARE_PROBLEM)
    are reported as 'mixed'."""
    labels = sorted(model.problem_index, key=model.problem_index.get)
    result = pca(model.V.T)
    holds = {label: set() for label in labels}
    attempts_per = {label: 0 for label in labels}
    successes_per = {label: 0 for label in labels}
    for a in d.attempts:
        ident = problem_label(*a.problem)
        label = ident if ident in model.problem_index else RARE_PROBLEM
        if label in holds:
            holds[label].add(a.hold_type.code)
            attempts_per[label] += 1
            successes_per[label] += a.outcome
    rows = []
    for label in labels:
        j = model.problem_index[label]
        seen = holds[label]
        hold = next(iter(seen)) if len(seen) == 1 else ("mixed" if seen else "")
        rate = successes_per[label] / attempts_per[label] if attempts_per[label] else None
        rows.append({"group": label, "coords": result.scores[j], "hold_type": hold, "success_rate": rate})
    return rows


def write_climber_pca_csv(path, labels, result: PcaResult, vars: ClimberVariables) -> None:
    d = result.scores.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group"] + [f"pc{k + 1}" for k in range(d)]
                        + ["lr_coef", "n_climbs", "p_success", "height_cm"])
        for i, label in enumerate(labels):
            writer.writerow(
                [label]
                + [repr(float(x)) for x in result.scores[i]]
                + [_opt(vars.lr_coef[i]), vars.n_climbs[i], repr(float(vars.p_success[i])), _opt(vars.height_cm[i])]
            )


def write_problem_pca_csv(path, rows) -> None:
    if not rows:
        raise ValueError("no problem rows to write")
    d = len(rows[0]["coords"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group"] + [f"pc{k + 1}" for k in range(d)] + ["hold_type", "success_rate"])
        for row in rows:
            writer.writerow(
                [row["group"]]
                + [repr(float(x)) for x in row["coords"]]
                + [row["hold_type"], _opt(row["success_rate"])]
            )


def write_correlations_csv(path, corr: CorrelationMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + list(corr.labels))
        for i, label in enumerate(corr.labels):
            writer.writerow([label] + [_opt(v) if not np.isnan(v) else "" for v in corr.values[i]])


def write_correlation_counts_csv(path, corr: CorrelationMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + list(corr.labels))
        for i, label in enumerate(corr.labels):
            writer.writerow([label] + [int(c) for c in corr.counts[i]])


def _opt(v) -> str:
    return "" if v is None else repr(float(v))


def write_scatter_svg(path, xs, ys, color_values=None, title: str = "") -> None:
    """Minimal scatter plot: points on a 640x640 canvas, optionally colored
    by a value in [0,1] (blue low, red high)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) != len(ys) or len(xs) == 0:
        raise ValueError("xs and ys must be nonempty and the same length")
    size, margin = 640, 40
    span = size - 2 * margin

    def scale(v):
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            return np.full(len(v), margin + span / 2)
        return margin + (v - lo) / (hi - lo) * span

    px = scale(xs)
    py = size - scale(ys)  # SVG y grows downward
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{size / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>')
    for i in range(len(xs)):
        if color_values is None:
            fill = "#1f77b4"
        else:
            c = min(max(float(color_values[i]), 0.0), 1.0)
            fill = f"rgb({int(255 * c)},80,{int(255 * (1 - c))})"
        parts.append(f'<circle cx="{px[i]:.1f}" cy="{py[i]:.1f}" r="3" fill="{fill}" fill-opacity="0.7"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")

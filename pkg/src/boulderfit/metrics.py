"""Binary-outcome evaluation metrics over (label, predicted probability) pairs.

accuracy = (TP+TN)/(TP+TN+FP+FN), F1 = 2TP/(2TP+FP+FN), Brier = mean squared
error of the probabilities, log loss = mean negative binary cross-entropy,
ROC AUC = probability a random positive outranks a random negative (ties
count 1/2), which equals the trapezoidal area under the ROC curve.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

# Probabilities are clamped to [EPS, 1-EPS] before taking logs.
EPS = 1e-12

METRIC_NAMES = ("accuracy", "f1", "brier", "log_loss", "roc_auc")


@dataclass(frozen=True)
class PredictionSet:
    pairs: tuple
    threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(y), float(p)) for y, p in self.pairs))
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0,1), got {self.threshold}")
        for y, p in self.pairs:
            if y not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {y}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0,1]")

    def labels(self) -> np.ndarray:
        return np.array([y for y, _ in self.pairs], dtype=np.float64)

    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.pairs], dtype=np.float64)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    brier: float
    log_loss: float
    roc_auc: Optional[float]
    tp: int
    tn: int
    fp: int
    fn: int

    def value(self, metric: str) -> Optional[float]:
        return getattr(self, metric)


def _require_nonempty(ps: PredictionSet):
    if not ps.pairs:
        raise ValueError("metrics are undefined on an empty prediction set")


def confusion_counts(ps: PredictionSet) -> tuple:
    """(TP, TN, FP, FN) with p >= threshold classified positive."""
    _require_nonempty(ps)
    y = ps.labels()
    pred = ps.probs() >= ps.threshold
    tp = int(np.sum((y == 1) & pred))
    tn = int(np.sum((y == 0) & ~pred))
    fp = int(np.sum((y == 0) & pred))
    fn = int(np.sum((y == 1) & ~pred))
    return tp, tn, fp, fn


def accuracy(ps: PredictionSet) -> float:
    tp, tn, fp, fn = confusion_counts(ps)
    return (tp + tn) / (tp + tn + fp + fn)


def f1(ps: PredictionSet) -> float:
    """F1 = 2TP/(2TP+FP+FN); defined as 0 when that denominator is 0."""
    tp, _, fp, fn = confusion_counts(ps)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def brier(ps: PredictionSet) -> float:
    _require_nonempty(ps)
    return float(np.mean((ps.probs() - ps.labels()) ** 2))


def log_loss(ps: PredictionSet) -> float:
    _require_nonempty(ps)
    p = np.clip(ps.probs(), EPS, 1.0 - EPS)
    y = ps.labels()
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def roc_auc(ps: PredictionSet) -> float:
    """Rank-statistic AUC with average ranks, so ties count half."""
    _require_nonempty(ps)
    y = ps.labels()
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0:
        raise ValueError("roc_auc undefined: no positive labels")
    if n_neg == 0:
        raise ValueError("roc_auc undefined: no negative labels")
    ranks = rankdata(ps.probs(), method="average")
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(ps: PredictionSet) -> MetricsReport:
    """All metrics in one report. roc_auc is None on single-class label sets."""
    tp, tn, fp, fn = confusion_counts(ps)
    try:
        auc = roc_auc(ps)
    except ValueError:
        auc = None
    return MetricsReport(
        accuracy=accuracy(ps),
        f1=f1(ps),
        brier=brier(ps),
        log_loss=log_loss(ps),
        roc_auc=auc,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
    )


def format_report(report: MetricsReport) -> str:
    """Flat key=value text, one metric per line."""
    lines = []
    for name in METRIC_NAMES:
        v = report.value(name)
        lines.append(f"{name}={'' if v is None else repr(float(v))}")
    for name in ("tp", "tn", "fp", "fn"):
        lines.append(f"{name}={getattr(report, name)}")
    return "\n".join(lines) + "\n"

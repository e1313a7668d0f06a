"""Synthetic attempt data with known ground truth.

Samples true embedding matrices, picks observed cells at a given density,
and draws Bernoulli outcomes from sigmoid(U_i . V_j). The truth record
keeps the generating matrices, the per-cell probabilities, and the Bayes
log loss (the mean NLL of the true probabilities on the sampled outcomes),
which is the floor any model can reach on that data.

Scales may be given per latent dimension, and v_shift moves the mean of
the problem vectors; a positive shift in one dimension makes that
dimension a shared "ability" axis that raises or lowers a climber's
success rate on most problems.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .data import AttemptRecord, Dataset, HoldType, Round, problem_label
from .logreg import sigmoid
from .rng import (
    STREAM_CELL,
    STREAM_PROBLEM_ATTRS,
    STREAM_TRUE_U,
    STREAM_TRUE_V,
    entity_rng,
)

logger = logging.getLogger(__name__)

_ROUNDS = (Round.QUALIFIER, Round.SEMIFINAL, Round.FINAL)
_HOLDS = (HoldType.TOP, HoldType.ZONE)


def _per_dim(value: Union[float, Sequence], d: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (d,)).copy()
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class SynthSpec:
    m_climbers: int
    n_problems: int
    d_true: int
    density: float = 1.0
    u_scale: Union[float, Sequence] = 1.0
    v_scale: Union[float, Sequence] = 1.0
    v_shift: Union[float, Sequence] = 0.0
    seed: int = 0
    round_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    hold_type_probs: tuple = (0.5, 0.5)
    competition_id: str = "SYNTH"
    year: int = 2021

    def __post_init__(self):
        if self.m_climbers < 1 or self.n_problems < 1:
            raise ValueError("m_climbers and n_problems must be >= 1")
        if self.d_true < 1:
            raise ValueError("d_true must be >= 1")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if np.any(_per_dim(self.u_scale, self.d_true, "u_scale") <= 0):
            raise ValueError("u_scale must be positive")
        if np.any(_per_dim(self.v_scale, self.d_true, "v_scale") <= 0):
            raise ValueError("v_scale must be positive")
        if len(self.round_probs) != 3 or abs(sum(self.round_probs) - 1.0) > 1e-9:
            raise ValueError("round_probs must be 3 probabilities summing to 1")
        if len(self.hold_type_probs) != 2 or abs(sum(self.hold_type_probs) - 1.0) > 1e-9:
            raise ValueError("hold_type_probs must be 2 probabilities summing to 1")


@dataclass(frozen=True)
class SynthTruth:
    U_true: np.ndarray
    V_true: np.ndarray
    bayes_log_loss: float
    cell_probabilities: Mapping[tuple, float]  # (climber label, problem label) -> true p


def _climber_name(i: int) -> str:
    return f"c{i:04d}"


def _problem_key(j: int) -> str:
    return f"p{j:04d}"


def generate(spec: SynthSpec) -> tuple:
    """Sample a dataset and its truth record. Deterministic per spec.seed.

    Climbers or problems that end up with zero observed attempts are
    dropped (with a log notice) rather than emitted empty.
    """
    m, n, d = spec.m_climbers, spec.n_problems, spec.d_true
    u_scale = _per_dim(spec.u_scale, d, "u_scale")
    v_scale = _per_dim(spec.v_scale, d, "v_scale")
    v_shift = _per_dim(spec.v_shift, d, "v_shift")

    U = np.empty((m, d))
    for i in range(m):
        U[i] = entity_rng(spec.seed, STREAM_TRUE_U, i).standard_normal(d) * u_scale
    V = np.empty((d, n))
    rounds = []
    holds = []
    for j in range(n):
        V[:, j] = entity_rng(spec.seed, STREAM_TRUE_V, j).standard_normal(d) * v_scale + v_shift
        attr_rng = entity_rng(spec.seed, STREAM_PROBLEM_ATTRS, j)
        rounds.append(_ROUNDS[attr_rng.choice(3, p=np.asarray(spec.round_probs))])
        holds.append(_HOLDS[attr_rng.choice(2, p=np.asarray(spec.hold_type_probs))])

    attempts = []
    cell_probs = {}
    nll_sum = 0.0
    for i in range(m):
        for j in range(n):
            cell_rng = entity_rng(spec.seed, STREAM_CELL, i * n + j)
            if cell_rng.random() >= spec.density:
                continue
            p = sigmoid(float(U[i] @ V[:, j]))
            y = 1 if cell_rng.random() < p else 0
            rec = AttemptRecord(
                competition_id=spec.competition_id,
                year=spec.year,
                round=rounds[j],
                climber=_climber_name(i),
                problem_key=_problem_key(j),
                hold_type=holds[j],
                outcome=y,
            )
            attempts.append(rec)
            cell_probs[(_climber_name(i), problem_label(*rec.problem))] = p
            nll_sum += -np.log(p) if y == 1 else -np.log(1.0 - p)

    if not attempts:
        raise ValueError("density too low: no cells were observed")
    dataset = Dataset.from_attempts(attempts)

    observed_rows = {a.climber for a in attempts}
    observed_cols = {a.problem_key for a in attempts}
    dropped_climbers = m - len(observed_rows)
    dropped_problems = n - len(observed_cols)
    if dropped_climbers or dropped_problems:
        logger.warning(
            "dropped %d climbers and %d problems with no observed attempts",
            dropped_climbers,
            dropped_problems,
        )

    truth = SynthTruth(
        U_true=U,
        V_true=V,
        bayes_log_loss=nll_sum / len(attempts),
        cell_probabilities=cell_probs,
    )
    return dataset, truth

"""Baseline model: logistic regression on one-hot round, hold-type and
climber-group features, trained by full-batch gradient descent.

    P(success) = sigmoid(beta0 + beta_round + beta_type + beta_climber)

The Qualifier round and the top hold are reference levels fixed at 0, which
makes the round/type coefficients identifiable next to the intercept.
Climber coefficients all start at 0 and the optimizer is deterministic, so
training is reproducible bit for bit.
"""

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .data import REPLACEMENT, Dataset, HoldType, Round

REFERENCE_ROUND = Round.QUALIFIER
REFERENCE_TYPE = HoldType.TOP

# Non-reference levels, in the order they occupy inside the parameter vector.
_FREE_ROUNDS = (Round.SEMIFINAL, Round.FINAL)
_FREE_TYPES = (HoldType.ZONE,)


def sigmoid(x):
    """Numerically stable logistic function, elementwise; scalar in, float out."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 2000
    seed: int = 0
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass(frozen=True)
class LogRegModel:
    beta0: float
    beta_round: Mapping[Round, float]
    beta_type: Mapping[HoldType, float]
    beta_climber: Mapping[str, float]
    reference_levels: tuple = (REFERENCE_ROUND, REFERENCE_TYPE)


@dataclass(frozen=True)
class _Encoded:
    y: np.ndarray
    round_idx: np.ndarray  # position in (reference,) + _FREE_ROUNDS
    type_idx: np.ndarray
    climber_idx: np.ndarray
    climber_labels: tuple


def _encode(d: Dataset) -> _Encoded:
    round_pos = {REFERENCE_ROUND: 0}
    for i, r in enumerate(_FREE_ROUNDS, start=1):
        round_pos[r] = i
    type_pos = {REFERENCE_TYPE: 0}
    for i, t in enumerate(_FREE_TYPES, start=1):
        type_pos[t] = i
    labels = tuple(sorted(d.climber_index, key=d.climber_index.get))
    return _Encoded(
        y=d.outcomes(),
        round_idx=np.array([round_pos[a.round] for a in d.attempts], dtype=np.intp),
        type_idx=np.array([type_pos[a.hold_type] for a in d.attempts], dtype=np.intp),
        climber_idx=d.climber_rows(),
        climber_labels=labels,
    )


def _unpack(theta: np.ndarray, m: int):
    beta0 = theta[0]
    rounds = np.concatenate(([0.0], theta[1 : 1 + len(_FREE_ROUNDS)]))
    types = np.concatenate(([0.0], theta[1 + len(_FREE_ROUNDS) : 1 + len(_FREE_ROUNDS) + len(_FREE_TYPES)]))
    climbers = theta[1 + len(_FREE_ROUNDS) + len(_FREE_TYPES) :]
    assert len(climbers) == m
    return beta0, rounds, types, climbers


def nll_and_gradient(theta: np.ndarray, enc: _Encoded) -> tuple:
    """Mean negative log likelihood and its gradient in theta.

    theta layout: [beta0, beta_S, beta_F, beta_zone, beta_climber...].
    Reference levels are excluded from theta, so the objective is smooth in
    every coordinate and suitable for finite-difference checks.
    """
    m = len(enc.climber_labels)
    beta0, rounds, types, climbers = _unpack(theta, m)
    z = beta0 + rounds[enc.round_idx] + types[enc.type_idx] + climbers[enc.climber_idx]
    b = len(enc.y)
    # log(1 + e^z) - y*z, computed without overflow
    nll = float(np.mean(np.logaddexp(0.0, z) - enc.y * z))
    res = (sigmoid(z) - enc.y) / b
    grad = np.empty_like(theta)
    grad[0] = res.sum()
    g_round = np.bincount(enc.round_idx, weights=res, minlength=1 + len(_FREE_ROUNDS))
    grad[1 : 1 + len(_FREE_ROUNDS)] = g_round[1:]
    g_type = np.bincount(enc.type_idx, weights=res, minlength=1 + len(_FREE_TYPES))
    grad[1 + len(_FREE_ROUNDS) : 1 + len(_FREE_ROUNDS) + len(_FREE_TYPES)] = g_type[1:]
    grad[1 + len(_FREE_ROUNDS) + len(_FREE_TYPES) :] = np.bincount(enc.climber_idx, weights=res, minlength=m)
    return nll, grad


def train_logreg(d: Dataset, cfg: TrainConfig = TrainConfig()) -> LogRegModel:
    """Fit by full-batch gradient descent from an all-zero start.

    Stops early once the loss decreases by no more than cfg.tolerance
    between epochs.
    """
    if not d.attempts:
        raise ValueError("cannot train on an empty dataset")
    enc = _encode(d)
    theta = np.zeros(1 + len(_FREE_ROUNDS) + len(_FREE_TYPES) + len(enc.climber_labels))
    prev = np.inf
    for _ in range(cfg.epochs):
        loss, grad = nll_and_gradient(theta, enc)
        theta = theta - cfg.learning_rate * grad
        if abs(prev - loss) <= cfg.tolerance:
            break
        prev = loss
    beta0, rounds, types, climbers = _unpack(theta, len(enc.climber_labels))
    beta_round = {REFERENCE_ROUND: 0.0}
    for i, r in enumerate(_FREE_ROUNDS, start=1):
        beta_round[r] = float(rounds[i])
    beta_type = {REFERENCE_TYPE: 0.0}
    for i, t in enumerate(_FREE_TYPES, start=1):
        beta_type[t] = float(types[i])
    beta_climber = {label: float(climbers[i]) for i, label in enumerate(enc.climber_labels)}
    return LogRegModel(beta0=float(beta0), beta_round=beta_round, beta_type=beta_type, beta_climber=beta_climber)


def _resolve_climber(model: LogRegModel, climber_group: str) -> float:
    if climber_group in model.beta_climber:
        return model.beta_climber[climber_group]
    if REPLACEMENT in model.beta_climber:
        return model.beta_climber[REPLACEMENT]
    raise KeyError(f"unknown climber group {climber_group!r} and model has no {REPLACEMENT} coefficient")


def predict_logreg(model: LogRegModel, round: Round, hold_type: HoldType, climber_group: str) -> float:
    """Success probability for one (round, hold type, climber group) cell.

    Unknown climber groups fall back to the REPLACEMENT coefficient; the
    round and hold-type vocabularies are closed and unknown values raise.
    """
    if round not in model.beta_round:
        raise KeyError(f"unknown round {round!r}")
    if hold_type not in model.beta_type:
        raise KeyError(f"unknown hold_type {hold_type!r}")
    z = model.beta0 + model.beta_round[round] + model.beta_type[hold_type] + _resolve_climber(model, climber_group)
    return sigmoid(z)


def score_attempts(model: LogRegModel, attempts) -> np.ndarray:
    """Vectorized predict_logreg over attempt records (raw climber names)."""
    coefs = np.array([_resolve_climber(model, a.climber) for a in attempts])
    rounds = np.array([model.beta_round[a.round] for a in attempts])
    types = np.array([model.beta_type[a.hold_type] for a in attempts])
    return sigmoid(model.beta0 + rounds + types + coefs)


def climber_coefficients(model: LogRegModel) -> dict:
    """Per-climber-group coefficients, for downstream correlation analysis."""
    return dict(model.beta_climber)


def save_logreg(model: LogRegModel, path) -> None:
    """Flat key=value text; floats use shortest round-trip representation."""
    lines = [f"beta0={model.beta0!r}"]
    for r in _FREE_ROUNDS:
        lines.append(f"round.{r.code}={model.beta_round[r]!r}")
    for t in _FREE_TYPES:
        lines.append(f"type.{t.code}={model.beta_type[t]!r}")
    for label, coef in model.beta_climber.items():
        if "\n" in label or "=" in label:
            raise ValueError(f"climber label {label!r} cannot be serialized")
        lines.append(f"climber.{label}={coef!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_logreg(path) -> LogRegModel:
    beta0 = 0.0
    beta_round = {REFERENCE_ROUND: 0.0}
    beta_type = {REFERENCE_TYPE: 0.0}
    beta_climber = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            key, value_s = line.split("=", 1)
            value = float(value_s)
            if key == "beta0":
                beta0 = value
            elif key.startswith("round."):
                beta_round[Round.from_code(key[len("round.") :])] = value
            elif key.startswith("type."):
                beta_type[HoldType.from_code(key[len("type.") :])] = value
            elif key.startswith("climber."):
                beta_climber[key[len("climber.") :]] = value
            else:
                raise ValueError(f"unrecognized model entry {key!r}")
    return LogRegModel(beta0=beta0, beta_round=beta_round, beta_type=beta_type, beta_climber=beta_climber)

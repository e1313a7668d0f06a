"""Probabilistic matrix factorization of the sparse climber-by-problem
outcome matrix.

Learns U (m x d) and V (d x n) so that sigmoid(U_i . V_j) predicts the
probability that climber row i completes problem column j. Only observed
cells contribute to the loss, which is the mean binary cross-entropy over
attempts. Optimization is Adam:

    m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
    mhat = m/(1-b1^t)           vhat = v/(1-b2^t)
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)

Initialization draws each row of U and each column of V from its own
counter-based stream, so the same (seed, entity) pair always gets the same
start regardless of matrix size.
"""

from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from .data import RARE_PROBLEM, REPLACEMENT, Dataset, problem_label
from .logreg import sigmoid
from .rng import STREAM_PMF_BATCH, STREAM_PMF_U, STREAM_PMF_V, entity_rng

FULL = "full"

# Same clamp as the metrics module: log arguments never reach 0.
EPS = 1e-12


@dataclass(frozen=True)
class PmfConfig:
    d: int
    epochs: int = 1000
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float = 0.1
    seed: int = 0
    batch_size: Union[int, str] = FULL

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"latent dimension must be >= 1, got {self.d}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("adam betas must be in (0,1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.batch_size != FULL and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ValueError(f"batch_size must be a positive integer or {FULL!r}")


@dataclass(frozen=True)
class PmfModel:
    U: np.ndarray  # m x d climber embeddings
    V: np.ndarray  # d x n problem embeddings
    d: int
    climber_index: Mapping[str, int]
    problem_index: Mapping[str, int]
    seed: int = 0

    def __post_init__(self):
        if self.U.shape != (len(self.climber_index), self.d):
            raise ValueError(f"U shape {self.U.shape} does not match (m={len(self.climber_index)}, d={self.d})")
        if self.V.shape != (self.d, len(self.problem_index)):
            raise ValueError(f"V shape {self.V.shape} does not match (d={self.d}, n={len(self.problem_index)})")
        if not (np.isfinite(self.U).all() and np.isfinite(self.V).all()):
            raise ValueError("embeddings contain non-finite entries")
        self.U.setflags(write=False)
        self.V.setflags(write=False)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), t=0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: PmfConfig) -> tuple:
    """One bias-corrected Adam update. Returns (new params, new state)."""
    if params.shape != grads.shape or params.shape != state.m.shape or params.shape != state.v.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}/{state.v.shape}"
        )
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grads**2
    mhat = m / (1.0 - cfg.adam_beta1**t)
    vhat = v / (1.0 - cfg.adam_beta2**t)
    new_params = params - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
    return new_params, AdamState(m=m, v=v, t=t)


def _resolve_rows_cols(climber_index, problem_index, attempts) -> tuple:
    rep = climber_index.get(REPLACEMENT)
    rare = problem_index.get(RARE_PROBLEM)
    rows = np.empty(len(attempts), dtype=np.intp)
    cols = np.empty(len(attempts), dtype=np.intp)
    for k, a in enumerate(attempts):
        i = climber_index.get(a.climber, rep)
        if i is None:
            raise KeyError(f"unknown climber {a.climber!r} and model has no {REPLACEMENT} row")
        label = problem_label(*a.problem)
        j = problem_index.get(label, rare)
        if j is None:
            raise KeyError(f"unknown problem {label!r} and model has no {RARE_PROBLEM} column")
        rows[k] = i
        cols[k] = j
    return rows, cols


def _encode_training(d: Dataset) -> tuple:
    return d.climber_rows(), d.problem_cols(), d.outcomes()


def _dots(U, V, rows, cols) -> np.ndarray:
    return np.einsum("ij,ij->i", U[rows], V[:, cols].T)


def _mean_bce(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, EPS, 1.0 - EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def pmf_loss(model: PmfModel, d: Dataset) -> float:
    """Mean clamped binary cross-entropy of the model over d's attempts.

    Attempts resolve against the model's own vocabularies (with REPLACEMENT
    and RARE_PROBLEM fallback), so d may be any dataset whose group labels
    the model knows, not just the training set.
    """
    if not d.attempts:
        raise ValueError("pmf_loss is undefined on an empty dataset")
    rows, cols = _resolve_rows_cols(model.climber_index, model.problem_index, d.attempts)
    p = sigmoid(_dots(model.U, model.V, rows, cols))
    return _mean_bce(d.outcomes(), p)


def loss_and_gradients(U: np.ndarray, V: np.ndarray, rows: np.ndarray, cols: np.ndarray, y: np.ndarray) -> tuple:
    """Mean BCE over the given cells plus gradients in U and V.

    Only the rows/columns that appear in (rows, cols) receive gradient;
    everything else stays exactly zero, which is what keeps unobserved
    cells out of the optimization.
    """
    z = _dots(U, V, rows, cols)
    p = sigmoid(z)
    loss = _mean_bce(y, p)
    res = (p - y) / len(y)
    gU = np.zeros_like(U)
    np.add.at(gU, rows, res[:, None] * V[:, cols].T)
    gVT = np.zeros_like(V.T)
    np.add.at(gVT, cols, res[:, None] * U[rows])
    return loss, gU, gVT.T


def _init_embeddings(m: int, n: int, cfg: PmfConfig) -> tuple:
    U = np.empty((m, cfg.d))
    for i in range(m):
        U[i] = entity_rng(cfg.seed, STREAM_PMF_U, i).normal(0.0, cfg.init_scale, cfg.d)
    V = np.empty((cfg.d, n))
    for j in range(n):
        V[:, j] = entity_rng(cfg.seed, STREAM_PMF_V, j).normal(0.0, cfg.init_scale, cfg.d)
    return U, V


def train_pmf(d: Dataset, cfg: PmfConfig) -> PmfModel:
    """Fit embeddings with Adam for cfg.epochs passes over the observed cells.

    Deterministic for fixed (d, cfg). batch_size=FULL (the default) takes
    one update per epoch from the full gradient; an integer batch_size
    shuffles attempts each epoch and updates per minibatch.
    """
    if not d.attempts:
        raise ValueError("cannot train on an empty dataset")
    if d.m < 1 or d.n < 1:
        raise ValueError("dataset must index at least one climber and one problem")
    rows, cols, y = _encode_training(d)
    U, V = _init_embeddings(d.m, d.n, cfg)
    state_u = AdamState.zeros_like(U)
    state_v = AdamState.zeros_like(V)
    shuffle_rng = None
    if cfg.batch_size != FULL:
        shuffle_rng = entity_rng(cfg.seed, STREAM_PMF_BATCH)
    for _ in range(cfg.epochs):
        if cfg.batch_size == FULL:
            _, gU, gV = loss_and_gradients(U, V, rows, cols, y)
            U, state_u = adam_step(U, gU, state_u, cfg)
            V, state_v = adam_step(V, gV, state_v, cfg)
        else:
            order = shuffle_rng.permutation(len(y))
            for start in range(0, len(y), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, gU, gV = loss_and_gradients(U, V, rows[idx], cols[idx], y[idx])
                U, state_u = adam_step(U, gU, state_u, cfg)
                V, state_v = adam_step(V, gV, state_v, cfg)
    return PmfModel(
        U=U,
        V=V,
        d=cfg.d,
        climber_index=dict(d.climber_index),
        problem_index=dict(d.problem_index),
        seed=cfg.seed,
    )


def predict_pmf(model: PmfModel, climber_group: str, problem_group: str) -> float:
    """sigmoid(U_i . V_j), with fallback to REPLACEMENT / RARE_PROBLEM."""
    i = model.climber_index.get(climber_group, model.climber_index.get(REPLACEMENT))
    if i is None:
        raise KeyError(f"unknown climber group {climber_group!r} and model has no {REPLACEMENT} row")
    j = model.problem_index.get(problem_group, model.problem_index.get(RARE_PROBLEM))
    if j is None:
        raise KeyError(f"unknown problem group {problem_group!r} and model has no {RARE_PROBLEM} column")
    return sigmoid(float(model.U[i] @ model.V[:, j]))


def score_attempts(model: PmfModel, attempts) -> np.ndarray:
    """Vectorized predict_pmf over attempt records."""
    rows, cols = _resolve_rows_cols(model.climber_index, model.problem_index, attempts)
    return sigmoid(_dots(model.U, model.V, rows, cols))


def save_pmf(model: PmfModel, path) -> None:
    """Header `pmf m n d seed`, then U rows, then V columns, one labeled
    line each, floats in shortest round-trip representation."""
    climbers = sorted(model.climber_index, key=model.climber_index.get)
    problems = sorted(model.problem_index, key=model.problem_index.get)
    for label in (*climbers, *problems):
        if "\t" in label or "\n" in label:
            raise ValueError(f"label {label!r} cannot be serialized")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"pmf {len(climbers)} {len(problems)} {model.d} {model.seed}\n")
        for i, label in enumerate(climbers):
            fh.write(label + "\t" + " ".join(repr(x) for x in model.U[i]) + "\n")
        for j, label in enumerate(problems):
            fh.write(label + "\t" + " ".join(repr(x) for x in model.V[:, j]) + "\n")


def load_pmf(path) -> PmfModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "pmf":
            raise ValueError(f"not a pmf model file: header {header!r}")
        m, n, d, seed = (int(x) for x in header[1:])
        U = np.empty((m, d))
        V = np.empty((d, n))
        climber_index = {}
        problem_index = {}
        for i in range(m):
            label, values = fh.readline().rstrip("\n").split("\t")
            climber_index[label] = i
            U[i] = [float(x) for x in values.split()]
        for j in range(n):
            label, values = fh.readline().rstrip("\n").split("\t")
            problem_index[label] = j
            V[:, j] = [float(x) for x in values.split()]
    return PmfModel(U=U, V=V, d=d, climber_index=climber_index, problem_index=problem_index, seed=seed)

"""Models of athlete performance on sparse binary attempt data from
bouldering competitions: a logistic-regression baseline, probabilistic
matrix factorization with latent embeddings, cross-validated evaluation
over a hyperparameter grid, and PCA-based analysis of the learned
embeddings. A synthetic generator with known ground truth makes the whole
pipeline verifiable end to end.
"""

__version__ = "0.1.0"

from .data import (
    RARE_PROBLEM,
    REPLACEMENT,
    AttemptRecord,
    ClimberMeta,
    Dataset,
    FoldSplit,
    HoldType,
    IngestError,
    Round,
    apply_problem_grouping,
    apply_replacement_level,
    ingest_attempts,
    ingest_heights,
    split_folds,
)
from .logreg import LogRegModel, TrainConfig, predict_logreg, sigmoid, train_logreg
from .metrics import MetricsReport, PredictionSet, evaluate, roc_auc
from .pmf import PmfConfig, PmfModel, pmf_loss, predict_pmf, train_pmf
from .cv import CellResult, CellSpec, ExperimentGrid, confidence_interval, run_cell, run_grid
from .analysis import PcaResult, correlation_matrix, pca, problem_projection
from .synth import SynthSpec, SynthTruth, generate

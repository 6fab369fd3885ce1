"""Continuous (Phase II) authentication: preprocessing, classifiers, enrollment, decisions."""

from atmas.auth.engine import (
    AuthDecision,
    EnrollmentDataInsufficient,
    ModelMissing,
    ModelRegistry,
    Verdict,
    authenticate_window,
    decision_threshold,
    enroll,
)
from atmas.auth.forest import (
    ALGORITHMS,
    DimensionError,
    ForestModel,
    TrainingError,
    train_forest,
    train_model,
)
from atmas.auth.metrics import ConfusionMatrix, compute_accuracy
from atmas.auth.preprocess import PreprocessStats, apply_preprocess, fit_preprocess

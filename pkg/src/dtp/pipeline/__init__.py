"""Model assembly, synthetic data, training and the ablation runner."""

from .config import ConfigError, DtpConfig
from .data import DegradationSpec, PairedSet, degrade, synthetic_pairs, train_test_sets
from .model import DtpModel, ForwardTrace
from .train import Adam, StepLog, TrainingDiverged, TrainResult, loss_terms, train

__all__ = [
    "Adam", "ConfigError", "DegradationSpec", "DtpConfig", "DtpModel", "ForwardTrace",
    "PairedSet", "StepLog", "TrainResult", "TrainingDiverged", "degrade", "loss_terms",
    "synthetic_pairs", "train", "train_test_sets",
]

"""Evidential deep learning for classification and annotation-distribution
estimation on data with ambiguous (tied-vote) labels."""

from .annotations import AnnotationSet, Dataset, Example, load_dataset, majority, soft_label
from .datagen import GenConfig, generate
from .dirichlet import DirichletPrediction, from_evidence
from .experiment import ExperimentConfig, Method, run_experiment
from .losses import LossKind, LossSpec, total_loss
from .metrics import MetricsReport

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "Dataset",
    "Example",
    "load_dataset",
    "majority",
    "soft_label",
    "GenConfig",
    "generate",
    "DirichletPrediction",
    "from_evidence",
    "ExperimentConfig",
    "Method",
    "run_experiment",
    "LossKind",
    "LossSpec",
    "total_loss",
    "MetricsReport",
]

"""Deep semi-supervised coupled concept factorization with dual label/structure constraints."""
from .baselines import ccf_fit, cf_fit
from .data import (
    DataMatrix,
    GroundTruth,
    SemiSupervisedSplit,
    generate_synthetic_blobs,
    load_dense_csv,
    load_idx,
    normalize_columns,
    split_semi_supervised,
)
from .evaluation import clustering_accuracy, evaluate_clustering, kmeans_cosine, pairwise_f_measure
from .factorization import Hyperparams
from .solver import FitResult, SolverConfig, fit, transform

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "GroundTruth",
    "SemiSupervisedSplit",
    "load_dense_csv",
    "load_idx",
    "normalize_columns",
    "split_semi_supervised",
    "generate_synthetic_blobs",
    "Hyperparams",
    "SolverConfig",
    "FitResult",
    "fit",
    "transform",
    "cf_fit",
    "ccf_fit",
    "kmeans_cosine",
    "clustering_accuracy",
    "pairwise_f_measure",
    "evaluate_clustering",
]

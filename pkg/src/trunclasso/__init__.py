"""Sparse linear regression from truncated samples.

The truncated-LASSO estimator, solved by projected stochastic gradient
descent, with the supporting truncated-Gaussian analytics, convex
subsolvers, synthetic data generator and verification harness.
"""

from .datagen import Dataset, estimate_alpha, generate_adversarial, generate_truncated, sparse_signal
from .psgd import RecoveryReport, SolverConfig, solve
from .tnormal import TruncatedGaussianView, TruncationSet

__all__ = [
    "Dataset",
    "RecoveryReport",
    "SolverConfig",
    "TruncatedGaussianView",
    "TruncationSet",
    "estimate_alpha",
    "generate_adversarial",
    "generate_truncated",
    "solve",
    "sparse_signal",
]

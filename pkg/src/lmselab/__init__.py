"""Logarithmic MSE loss laboratory.

A small float64 autodiff engine, the MSE / MAE / MSLE / LMSE losses and the
flip-and-log transform, a convolutional auto-encoder for one-class anomaly
detection on MNIST-format data, and numeric checks of the loss's properties.
"""
from .losses import (
    DEFAULT_EPS,
    LossDomainError,
    LossSpec,
    SurfaceGrid,
    fl_transform,
    grad_lmse,
    grad_mse,
    lmse,
    mae,
    mse,
    msle,
    surface_grid,
)
from .metrics import ScoreSet, anomaly_score, auroc, convergence_stats
from .model import CaeConfig, CaeModel, build_cae, forward
from .tensor import Tensor, conv2d, conv2d_transpose, matmul, no_grad

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_EPS", "LossDomainError", "LossSpec", "SurfaceGrid", "fl_transform",
    "grad_lmse", "grad_mse", "lmse", "mae", "mse", "msle", "surface_grid",
    "ScoreSet", "anomaly_score", "auroc", "convergence_stats",
    "CaeConfig", "CaeModel", "build_cae", "forward",
    "Tensor", "conv2d", "conv2d_transpose", "matmul", "no_grad",
]

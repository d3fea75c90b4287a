"""Robust L2,1-regularized linear label predictor.

The predictor ``P`` (``D x c``) is fitted by iterative reweighting: for a
fixed diagonal ``B`` the quadratic problem

    ||A_L - X_L^T P||^2 + ||P^T X (I - R)||^2 + tr(P^T B P)

has the closed-form solution ``(X_L X_L^T + X H X^T + B)^{-1} X_L A_L`` with
``H = (I - R)(I - R)^T``; ``B`` is then refreshed from the rows of ``P``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, ShapeError

EPSILON_ROW = 1e-8

__all__ = [
    "EPSILON_ROW",
    "LabelPredictor",
    "init_predictor",
    "update_row_sparsity_weights",
    "update_predictor",
    "predict_soft_labels",
    "predictor_objective",
    "l21_norm",
]


@dataclass(frozen=True)
class LabelPredictor:
    p: np.ndarray
    b_diag: np.ndarray
    epsilon_row: float = EPSILON_ROW


def _spd_solve(lhs, rhs):
    lhs = 0.5 * (lhs + lhs.T)
    try:
        return scipy.linalg.solve(lhs, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"label predictor system is not positive definite: {exc}") from exc


def init_predictor(x_labeled, a_labeled) -> LabelPredictor:
    """``P = (X_L X_L^T + I)^{-1} X_L A_L`` with ``B = I``."""
    x_labeled = np.asarray(x_labeled, dtype=float)
    a_labeled = np.asarray(a_labeled, dtype=float)
    if x_labeled.shape[1] != a_labeled.shape[0]:
        raise ShapeError(f"X_L has {x_labeled.shape[1]} columns but A_L has {a_labeled.shape[0]} rows")
    d = x_labeled.shape[0]
    p = _spd_solve(x_labeled @ x_labeled.T + np.eye(d), x_labeled @ a_labeled)
    return LabelPredictor(p, np.ones(d))


def update_row_sparsity_weights(p, epsilon_row=EPSILON_ROW) -> np.ndarray:
    """``b_i = 1 / (2 max(||p^i||, epsilon_row))``."""
    norms = np.linalg.norm(np.asarray(p, dtype=float), axis=1)
    return 1.0 / (2.0 * np.maximum(norms, epsilon_row))


def update_predictor(x, x_labeled, a_labeled, r_m, b_diag) -> np.ndarray:
    """Closed-form minimizer of the fixed-``B`` predictor problem."""
    for name, arr in (("X", x), ("X_L", x_labeled), ("A_L", a_labeled), ("R_M", r_m), ("B", b_diag)):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite entries in {name}")
    x = np.asarray(x, dtype=float)
    r_m = np.asarray(r_m, dtype=float)
    if r_m.shape != (x.shape[1], x.shape[1]):
        raise ShapeError(f"R_M must be {x.shape[1]}x{x.shape[1]}, got {r_m.shape}")
    e = x - x @ r_m  # X (I - R_M)
    lhs = x_labeled @ x_labeled.T + e @ e.T + np.diag(b_diag)
    return _spd_solve(lhs, x_labeled @ a_labeled)


def predict_soft_labels(x_unlabeled, p) -> np.ndarray:
    """Raw scores ``X_U^T P`` (``u x c``)."""
    x_unlabeled = np.asarray(x_unlabeled, dtype=float)
    p = np.asarray(p, dtype=float)
    if x_unlabeled.shape[1] == 0:
        return np.zeros((0, p.shape[1]))
    return x_unlabeled.T @ p


def l21_norm(p) -> float:
    return float(np.linalg.norm(p, axis=1).sum())


def predictor_objective(p, x, x_labeled, a_labeled, r_m, b_diag=None) -> float:
    """Value of the predictor problem.

    With ``b_diag`` the fixed-``B`` quadratic ``tr(P^T B P)`` is used as the
    penalty; without it the exact ``||P||_{2,1}``.
    """
    fit = np.sum((a_labeled - x_labeled.T @ p) ** 2)
    e = x - x @ r_m
    smooth = np.sum((p.T @ e) ** 2)
    if b_diag is None:
        pen = l21_norm(p)
    else:
        pen = float(np.sum(b_diag[:, None] * p * p))
    return float(fit + smooth + pen)

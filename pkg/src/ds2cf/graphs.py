"""Adaptive feature graph ``S^U`` and data graph ``S^V``.

Both graphs are learned by minimizing a self-reconstruction loss
``||Y - Y S||_F^2`` (``Y = U_M^T`` or ``V_M^T``) with the multiplicative rule
``S <- S * (Y^T Y) / (Y^T Y S)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import clipped_cosine_matrix
from .errors import NumericalError

GUARD = 1e-12

__all__ = [
    "DualGraphs",
    "init_feature_graph",
    "init_data_graph",
    "update_feature_graph",
    "update_data_graph",
    "graph_reconstruction_loss",
]


@dataclass(frozen=True)
class DualGraphs:
    s_u: np.ndarray
    s_v: np.ndarray


def init_feature_graph(x) -> np.ndarray:
    """Clipped cosine similarity between the feature rows of ``X``."""
    values = getattr(x, "values", x)
    return clipped_cosine_matrix(values)


def init_data_graph(x, split) -> np.ndarray:
    """Semi-supervised sample graph in working order ``[X_L, X_U]``.

    Labeled pairs get 1 for a shared class and 0 otherwise; any pair touching
    an unlabeled sample gets the clipped cosine of the two columns. ``x`` must
    already be in working order.
    """
    values = getattr(x, "values", x)
    s = clipped_cosine_matrix(values.T)
    l = split.l
    lab = split.labels
    s[:l, :l] = (lab[:, None] == lab[None, :]).astype(float)
    return s


def _mur(y_gram, s):
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        upd = s * y_gram / (y_gram @ s + GUARD)
    if not np.all(np.isfinite(upd)):
        i, k = np.argwhere(~np.isfinite(upd))[0]
        raise NumericalError(f"graph update produced non-finite entry ({i}, {k})")
    return upd


def update_feature_graph(u_m, s_u) -> np.ndarray:
    """One multiplicative step on ``S^U`` given the deep bases ``U_M`` (``D x r``)."""
    return _mur(u_m @ u_m.T, s_u)


def update_data_graph(v_m, s_v) -> np.ndarray:
    """One multiplicative step on ``S^V`` given the deep representation ``V_M`` (``N x r``)."""
    return _mur(v_m @ v_m.T, s_v)


def graph_reconstruction_loss(factor, s) -> float:
    """``||F^T - F^T S||_F^2`` for a factor ``F`` whose rows index the graph nodes."""
    ft = factor.T
    return float(np.sum((ft - ft @ s) ** 2))

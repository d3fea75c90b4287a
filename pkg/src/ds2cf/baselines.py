"""Single-layer concept factorization (CF) and constrained CF (CCF)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import build_label_indicator
from .data import DataMatrix, SemiSupervisedSplit
from .errors import NumericalError
from .factorization import GUARD, init_factors

__all__ = ["CfFactors", "CcfFactors", "cf_fit", "ccf_fit", "cf_objective", "ccf_label_matrix"]


@dataclass
class CfFactors:
    w: np.ndarray
    v: np.ndarray
    objective: list
    iterations: int
    converged: bool
    history: list | None = None


@dataclass
class CcfFactors:
    w: np.ndarray
    z: np.ndarray
    a_fixed: np.ndarray
    split: SemiSupervisedSplit
    objective: list
    iterations: int
    converged: bool
    history: list | None = None

    @property
    def v(self):
        """``A Z`` in working order ``[X_L, X_U]``."""
        return self.a_fixed @ self.z

    def representation(self):
        """``A Z`` with rows in the original sample order."""
        return self.v[self.split.inverse_order]


def cf_objective(x, w, v):
    """``||X - X W V^T||_F^2``."""
    with np.errstate(invalid="ignore", over="ignore"):
        return float(np.sum((x - (x @ w) @ v.T) ** 2))


def _check(val):
    if not np.isfinite(val):
        raise NumericalError("non-finite CF objective")
    return val


def cf_fit(x: DataMatrix, r, max_iters=200, tol=1e-3, seed=0, keep_history=False) -> CfFactors:
    """Concept factorization ``X ~ X W V^T`` by multiplicative updates.

    With ``K = X^T X``::

        W <- W * (K V) / (K W V^T V)
        V <- V * (K W) / (V W^T K W)
    """
    xv = getattr(x, "values", x)
    n = xv.shape[1]
    k = xv.T @ xv
    w, v = init_factors(1, ((n, r), (n, r)), seed)
    obj = [_check(cf_objective(xv, w, v))]
    history = [(w.copy(), v.copy())] if keep_history else None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        w_old, v_old = w, v
        w = w * (k @ v) / ((k @ w) @ (v.T @ v) + GUARD)
        kw = k @ w
        v = v * kw / (v @ (w.T @ kw) + GUARD)
        obj.append(_check(cf_objective(xv, w, v)))
        if keep_history:
            history.append((w.copy(), v.copy()))
        if np.sum((w - w_old) ** 2) <= tol and np.sum((v - v_old) ** 2) <= tol:
            converged = True
            break
    return CfFactors(w, v, obj, it, converged, history)


def ccf_label_matrix(split: SemiSupervisedSplit) -> np.ndarray:
    """``[A_L 0; 0 I_u]`` of shape ``(l+u) x (c+u)``."""
    l, u, c = split.l, split.u, split.c
    a = np.zeros((l + u, c + u))
    a[:l, :c] = build_label_indicator(split)
    a[l:, c:] = np.eye(u)
    return a


def ccf_fit(x: DataMatrix, split: SemiSupervisedSplit, r, max_iters=200, tol=1e-3, seed=0,
            keep_history=False) -> CcfFactors:
    """Constrained CF: CF with ``V = A Z`` and the hard label constraint ``A`` fixed.

    Works on the columns reordered to ``[X_L, X_U]``.
    """
    xv = split.reorder(x).values if isinstance(x, DataMatrix) else np.asarray(x)[:, split.order]
    k = xv.T @ xv
    a = ccf_label_matrix(split)
    ata = a.T @ a
    w, z = init_factors(1, ((split.n, r), (a.shape[1], r)), seed)
    obj = [_check(cf_objective(xv, w, a @ z))]
    history = [(w.copy(), a @ z)] if keep_history else None
    converged = False
    it = 0
    v = a @ z
    for it in range(1, max_iters + 1):
        w_old, v_old = w, v
        w = w * (k @ v) / ((k @ w) @ (v.T @ v) + GUARD)
        kw = k @ w
        z = z * (a.T @ kw) / (ata @ z @ (w.T @ kw) + GUARD)
        v = a @ z
        obj.append(_check(cf_objective(xv, w, v)))
        if keep_history:
            history.append((w.copy(), v.copy()))
        if np.sum((w - w_old) ** 2) <= tol and np.sum((v - v_old) ** 2) <= tol:
            converged = True
            break
    return CcfFactors(w, z, a, split, obj, it, converged, history)

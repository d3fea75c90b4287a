"""Layered coupled factorization: factor state, multiplicative updates, objective.

Layer ``m`` owns a basis-side factor ``W_m`` and a representation-side factor
``Z_m``. With the frozen prefixes ``Pi = W_1 ... W_{m-1}`` and
``Lam = Z_1 ... Z_{m-1}`` (identity for ``m = 1``)::

    U_M = X Pi W_m              deep bases            (D x r_m)
    V_M = A Lam Z_m             deep representation   (N x r_m)
    R_M = Pi W_m V_M^T          self-expressive coefficients (N x N)

and the objective is::

    ||X - X R_M||^2
      + alpha (||Q - R_M||^2 + ||R_M||^2)
      + beta  (||U_M^T - U_M^T S^U||^2 + ||V_M^T - V_M^T S^V||^2)
      + gamma (||A_L - X_L^T P||^2 + ||P^T X - P^T X R_M||^2 + ||P||_{2,1})

The multiplicative rules below use the gradient of that objective split into
nonnegative "descent" (numerator) and "ascent" (denominator) parts. All
gradients are halved, which leaves every ratio unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import NumericalError, ShapeError
from .predictor import l21_norm

GUARD = 1e-12
INIT_LOW, INIT_HIGH = 0.01, 1.01

__all__ = [
    "GUARD",
    "Hyperparams",
    "LayerStack",
    "LayerState",
    "ObjectiveBreakdown",
    "compute_prefix_products",
    "init_factors",
    "update_w",
    "update_z",
    "evaluate_objective",
]


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a finite nonnegative number, got {v}")


class LayerStack:
    """Factors ``W_1..W_M`` and ``Z_1..Z_M`` of a depth-``M`` network.

    ``W_1`` is ``N x r_1`` and ``Z_1`` is ``a_cols x r_1`` (``a_cols`` is the
    column count of the label constraint, ``2c`` in the semi-supervised
    model); deeper factors are ``r_{m-1} x r_m``.
    """

    def __init__(self, n_samples, a_cols, ranks):
        ranks = [int(r) for r in ranks]
        if not ranks or min(ranks) < 1:
            raise ShapeError("ranks must be a non-empty list of positive integers")
        self.n_samples = int(n_samples)
        self.a_cols = int(a_cols)
        self.ranks = ranks
        self.w = [None] * len(ranks)
        self.z = [None] * len(ranks)

    @property
    def depth(self) -> int:
        return len(self.ranks)

    def shapes(self, m):
        """Expected ``(W_m shape, Z_m shape)`` for 1-based layer ``m``."""
        r = self.ranks[m - 1]
        if m == 1:
            return (self.n_samples, r), (self.a_cols, r)
        prev = self.ranks[m - 2]
        return (prev, r), (prev, r)

    def set_layer(self, m, w, z):
        ws, zs = self.shapes(m)
        if w.shape != ws or z.shape != zs:
            raise ShapeError(f"layer {m} expects W {ws} and Z {zs}, got {w.shape} and {z.shape}")
        self.w[m - 1] = w
        self.z[m - 1] = z


def _product(mats):
    out = mats[0]
    for m in mats[1:]:
        if out.shape[1] != m.shape[0]:
            raise ShapeError(f"shape chain broken: {out.shape} x {m.shape}")
        out = out @ m
    return out


def compute_prefix_products(stack: LayerStack, m: int):
    """``(Pi_{m-1}, Lam_{m-1})``; ``(None, None)`` stands for the identities when ``m = 1``."""
    if not 1 <= m <= stack.depth:
        raise ShapeError(f"layer index {m} outside 1..{stack.depth}")
    if m == 1:
        return None, None
    if any(w is None for w in stack.w[: m - 1]) or any(z is None for z in stack.z[: m - 1]):
        raise ShapeError(f"layers before {m} are not initialized")
    return _product(stack.w[: m - 1]), _product(stack.z[: m - 1])


def init_factors(m, shapes, seed):
    """Random ``(W_m, Z_m)`` uniform on ``[0.01, 1.01)``, seeded by ``(seed, m)``."""
    w_shape, z_shape = shapes
    rng = np.random.default_rng([int(seed), int(m)])
    w = rng.uniform(INIT_LOW, INIT_HIGH, size=w_shape)
    z = rng.uniform(INIT_LOW, INIT_HIGH, size=z_shape)
    return w, z


def _lmul(prefix, mat):
    """``prefix^T @ mat`` with ``None`` standing for the identity."""
    return mat if prefix is None else prefix.T @ mat


def _rmul(prefix, mat):
    """``prefix @ mat`` with ``None`` standing for the identity."""
    return mat if prefix is None else prefix @ mat


def _rmul_left(x, pi):
    """``X Pi`` with ``None`` standing for the identity."""
    return x if pi is None else x @ pi


def _pos(a):
    return np.maximum(a, 0.0)


def _neg(a):
    return np.maximum(-a, 0.0)


@dataclass
class LayerState:
    """Factors of the layer being optimized plus its frozen prefixes."""

    pi_prev: np.ndarray | None
    lam_prev: np.ndarray | None
    w: np.ndarray
    z: np.ndarray

    def check(self, x, a):
        n = x.shape[1]
        if a.shape[0] != n:
            raise ShapeError(f"A has {a.shape[0]} rows, X has {n} columns")
        w_rows = n if self.pi_prev is None else self.pi_prev.shape[1]
        z_rows = a.shape[1] if self.lam_prev is None else self.lam_prev.shape[1]
        if self.pi_prev is not None and self.pi_prev.shape[0] != n:
            raise ShapeError(f"Pi has {self.pi_prev.shape[0]} rows, expected {n}")
        if self.lam_prev is not None and self.lam_prev.shape[0] != a.shape[1]:
            raise ShapeError(f"Lam has {self.lam_prev.shape[0]} rows, expected {a.shape[1]}")
        if self.w.shape[0] != w_rows or self.z.shape[0] != z_rows:
            raise ShapeError(
                f"factor shapes W {self.w.shape} / Z {self.z.shape} do not fit prefixes "
                f"({w_rows} and {z_rows} rows expected)"
            )
        if self.w.shape[1] != self.z.shape[1]:
            raise ShapeError("W_m and Z_m must share the layer rank")

    def pi(self):
        """``Pi_m = Pi_{m-1} W_m`` (``N x r``)."""
        return _rmul(self.pi_prev, self.w)

    def basis(self, x):
        """``U_M = X Pi_m`` (``D x r``)."""
        return x @ self.pi()

    def representation(self, a):
        """``V_M = A Lam_{m-1} Z_m`` (``N x r``)."""
        return a @ _rmul(self.lam_prev, self.z)

    def coefficient(self, a):
        """``R_M = Pi_m V_M^T`` (``N x N``)."""
        return self.pi() @ self.representation(a).T


def _finish(old, numer, denom, what):
    new = old * numer / (denom + GUARD)
    if not np.all(np.isfinite(new)):
        raise NumericalError(f"{what} update produced non-finite entries")
    if np.any(new < 0):
        raise NumericalError(f"internal invariant failure: negative entry in {what}")
    return new


def update_w(state: LayerState, x, a, q, s_u, p, hyper: Hyperparams, kx=None):
    """One multiplicative step on ``W_m`` with everything else fixed."""
    state.check(x, a)
    kx = x.T @ x if kx is None else kx
    pi, w = state.pi_prev, state.w
    v = state.representation(a)
    vtv = v.T @ v
    pw = _rmul(pi, w)

    numer = _lmul(pi, kx @ v)
    denom = _lmul(pi, kx @ pw) @ vtv
    if hyper.alpha:
        numer = numer + hyper.alpha * _lmul(pi, q @ v)
        denom = denom + 2.0 * hyper.alpha * _lmul(pi, pw) @ vtv
    if hyper.beta:
        y = _rmul_left(x, pi)
        u = y @ w
        numer = numer + hyper.beta * (y.T @ (s_u @ u + s_u.T @ u))
        denom = denom + hyper.beta * (y.T @ (u + s_u @ (s_u.T @ u)))
    if hyper.gamma:
        xp_pi = _lmul(pi, x.T @ p)  # Pi^T X^T P
        lin = xp_pi @ ((x.T @ p).T @ v)
        quad = xp_pi @ xp_pi.T
        numer = numer + hyper.gamma * (_pos(lin) + _neg(quad) @ w @ vtv)
        denom = denom + hyper.gamma * (_pos(quad) @ w @ vtv + _neg(lin))
    return _finish(w, numer, denom, "W")


def update_z(state: LayerState, x, a, q, s_v, p, hyper: Hyperparams, kx=None):
    """One multiplicative step on ``Z_m``; reads the current (already updated) ``W_m``."""
    state.check(x, a)
    kx = x.T @ x if kx is None else kx
    z = state.z
    g = _rmul_left(a, state.lam_prev)  # A Lam_{m-1}
    gtg = g.T @ g
    pm = state.pi()

    numer = g.T @ (kx @ pm)
    denom = gtg @ z @ (pm.T @ (kx @ pm))
    if hyper.alpha:
        numer = numer + hyper.alpha * (g.T @ (q.T @ pm))
        denom = denom + 2.0 * hyper.alpha * (gtg @ z @ (pm.T @ pm))
    if hyper.beta:
        v = g @ z
        numer = numer + hyper.beta * (g.T @ (s_v @ v + s_v.T @ v))
        denom = denom + hyper.beta * (g.T @ (v + s_v @ (s_v.T @ v)))
    if hyper.gamma:
        xp = x.T @ p
        lin = (g.T @ xp) @ (xp.T @ pm)
        pxp = pm.T @ xp
        quad = pxp @ pxp.T
        numer = numer + hyper.gamma * (_pos(lin) + gtg @ z @ _neg(quad))
        denom = denom + hyper.gamma * (gtg @ z @ _pos(quad) + _neg(lin))
    return _finish(z, numer, denom, "Z")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Every addend of the objective (unweighted) and the weighted total."""

    recon: float
    structure_fit: float
    structure_norm: float
    graph_u: float
    graph_v: float
    label_fit: float
    label_smooth: float
    l21: float
    total: float

    @property
    def structure(self) -> float:
        return self.structure_fit + self.structure_norm

    @property
    def dualgraph(self) -> float:
        return self.graph_u + self.graph_v

    @property
    def predictor(self) -> float:
        return self.label_fit + self.label_smooth + self.l21

    def terms(self) -> dict:
        return {
            "recon": self.recon,
            "structure_fit": self.structure_fit,
            "structure_norm": self.structure_norm,
            "graph_u": self.graph_u,
            "graph_v": self.graph_v,
            "label_fit": self.label_fit,
            "label_smooth": self.label_smooth,
            "l21": self.l21,
        }


def evaluate_objective(state: LayerState, x, a, q, s_u, s_v, p, x_labeled, a_labeled,
                       hyper: Hyperparams) -> ObjectiveBreakdown:
    pm = state.pi()
    u = x @ pm
    v = state.representation(a)
    r = pm @ v.T
    xr = u @ v.T  # X R_M
    recon = float(np.sum((x - xr) ** 2))
    s_fit = float(np.sum((q - r) ** 2))
    s_norm = float(np.sum(r ** 2))
    g_u = float(np.sum((u.T - u.T @ s_u) ** 2))
    g_v = float(np.sum((v.T - v.T @ s_v) ** 2))
    l_fit = float(np.sum((a_labeled - x_labeled.T @ p) ** 2))
    l_smooth = float(np.sum((p.T @ x - p.T @ xr) ** 2))
    l21 = l21_norm(p)
    total = (
        recon
        + hyper.alpha * (s_fit + s_norm)
        + hyper.beta * (g_u + g_v)
        + hyper.gamma * (l_fit + l_smooth + l21)
    )
    return ObjectiveBreakdown(recon, s_fit, s_norm, g_u, g_v, l_fit, l_smooth, l21, float(total))

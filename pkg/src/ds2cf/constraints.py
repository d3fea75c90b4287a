"""Label constraint ``A`` and block-diagonal structure constraint ``Q``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "LabelConstraint",
    "StructureConstraint",
    "SoftLabelFallbackWarning",
    "cosine_similarity",
    "clipped_cosine_matrix",
    "build_label_indicator",
    "normalize_soft_labels",
    "assemble_label_constraint",
    "build_structure_constraint_labeled",
    "update_structure_constraint_unlabeled",
    "assemble_structure_constraint",
]


class SoftLabelFallbackWarning(RuntimeWarning):
    """A soft-label row had no positive score and was replaced by ``1/c``."""


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def clipped_cosine_matrix(rows: np.ndarray) -> np.ndarray:
    """``max(cos(row_i, row_j), 0)`` for all pairs; unit diagonal even for zero rows."""
    rows = np.asarray(rows, dtype=float)
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = rows / safe[:, None]
    s = unit @ unit.T
    np.clip(s, 0.0, 1.0, out=s)
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return s


@dataclass(frozen=True)
class LabelConstraint:
    a_labeled: np.ndarray
    a_unlabeled: np.ndarray

    @property
    def c(self) -> int:
        return self.a_labeled.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """Block-diagonal ``(l+u) x 2c`` assembly ``[A_L 0; 0 A_U]``."""
        l, c = self.a_labeled.shape
        u = self.a_unlabeled.shape[0]
        a = np.zeros((l + u, 2 * c))
        a[:l, :c] = self.a_labeled
        a[l:, c:] = self.a_unlabeled
        return a


@dataclass(frozen=True)
class StructureConstraint:
    q_labeled: np.ndarray
    q_unlabeled: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return assemble_structure_constraint(self.q_labeled, self.q_unlabeled)


def build_label_indicator(split) -> np.ndarray:
    """One-hot ``l x c`` matrix ``A_L`` in the order of ``split.labeled_indices``."""
    a = np.zeros((split.l, split.c))
    a[np.arange(split.l), split.labels - 1] = 1.0
    return a


def normalize_soft_labels(raw, *, return_fallbacks=False):
    """Clip scores at zero and normalize each row to sum to one.

    Rows whose clipped sum is zero fall back to the uniform row ``1/c`` and
    raise a :class:`SoftLabelFallbackWarning`.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ShapeError("soft labels must be a 2-D array")
    clipped = np.maximum(raw, 0.0)
    sums = clipped.sum(axis=1)
    dead = sums <= 0
    out = np.empty_like(clipped)
    out[~dead] = clipped[~dead] / sums[~dead, None]
    n_dead = int(dead.sum())
    if n_dead:
        out[dead] = 1.0 / raw.shape[1]
        warnings.warn(
            f"{n_dead} soft-label row(s) had no positive score; using uniform rows",
            SoftLabelFallbackWarning,
            stacklevel=2,
        )
    if return_fallbacks:
        return out, n_dead
    return out


def assemble_label_constraint(a_labeled, a_unlabeled) -> LabelConstraint:
    a_labeled = np.asarray(a_labeled, dtype=float)
    a_unlabeled = np.asarray(a_unlabeled, dtype=float)
    if a_unlabeled.size == 0:
        a_unlabeled = a_unlabeled.reshape(0, a_labeled.shape[1])
    if a_labeled.ndim != 2 or a_unlabeled.ndim != 2 or a_labeled.shape[1] != a_unlabeled.shape[1]:
        raise ShapeError(
            f"label blocks need equal column counts, got {a_labeled.shape} and {a_unlabeled.shape}"
        )
    return LabelConstraint(a_labeled, a_unlabeled)


def build_structure_constraint_labeled(split) -> np.ndarray:
    """Block-diagonal all-ones ``Q_L`` (one block per class)."""
    lab = split.labels
    return (lab[:, None] == lab[None, :]).astype(float)


def update_structure_constraint_unlabeled(v_unlabeled) -> np.ndarray:
    """``Q_U`` as the clipped cosine similarity between unlabeled representation rows."""
    return clipped_cosine_matrix(v_unlabeled)


def assemble_structure_constraint(q_labeled, q_unlabeled) -> np.ndarray:
    l, u = q_labeled.shape[0], q_unlabeled.shape[0]
    q = np.zeros((l + u, l + u))
    q[:l, :l] = q_labeled
    q[l:, l:] = q_unlabeled
    return q

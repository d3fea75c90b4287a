"""Dataset representation, loaders, normalization and semi-supervised splitting.

Samples are stored as *columns* (``D x N``) throughout the package; loaders
convert from whatever orientation the file uses.
"""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConsistencyError,
    DegenerateInputError,
    DomainError,
    FormatError,
    InputError,
    ParseError,
)

__all__ = [
    "DataMatrix",
    "GroundTruth",
    "SemiSupervisedSplit",
    "load_dense_csv",
    "load_idx",
    "normalize_columns",
    "split_semi_supervised",
    "generate_synthetic_blobs",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    """Dense nonnegative ``D x N`` matrix, one sample per column."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DomainError(f"data matrix must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("data matrix contains non-finite entries")
        if np.any(v < 0):
            i, j = np.argwhere(v < 0)[0]
            raise DomainError(f"negative feature value {v[i, j]} at feature {i}, sample {j}")
        object.__setattr__(self, "values", v)

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def columns(self, idx) -> "DataMatrix":
        return DataMatrix(self.values[:, np.asarray(idx, dtype=int)])


@dataclass(frozen=True)
class GroundTruth:
    """True class per column.

    ``labels`` are contiguous ids ``1..K``; ``class_ids[k-1]`` is the raw id
    (as found in the source file) of class ``k``.
    """

    labels: np.ndarray
    class_ids: np.ndarray = None

    def __post_init__(self):
        lab = _frozen(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise InputError("labels must be one-dimensional")
        k = int(lab.max()) if lab.size else 0
        if lab.size and (lab.min() < 1 or set(np.unique(lab).tolist()) != set(range(1, k + 1))):
            raise InputError("class ids must be contiguous 1..K")
        object.__setattr__(self, "labels", lab)
        ids = np.arange(1, k + 1) if self.class_ids is None else self.class_ids
        ids = _frozen(ids, dtype=np.int64)
        if ids.shape != (k,):
            raise InputError("class_ids must list one raw id per class")
        object.__setattr__(self, "class_ids", ids)

    @classmethod
    def from_raw(cls, raw) -> "GroundTruth":
        """Remap arbitrary integer labels onto ``1..K`` (sorted by raw id)."""
        raw = np.asarray(raw).astype(np.int64)
        ids, inv = np.unique(raw, return_inverse=True)
        return cls(inv.reshape(-1) + 1, ids)

    @property
    def K(self) -> int:
        return len(self.class_ids)

    @property
    def raw_labels(self) -> np.ndarray:
        return self.class_ids[self.labels - 1]

    def subset(self, idx) -> "GroundTruth":
        return GroundTruth.from_raw(self.raw_labels[np.asarray(idx, dtype=int)])


@dataclass(frozen=True)
class SemiSupervisedSplit:
    """Labeled/unlabeled partition of the columns of a data matrix.

    ``labeled_indices`` are grouped by class (then ascending index) so that the
    working matrix ``X[:, order]`` has the layout ``[X_L, X_U]`` with each
    class occupying a contiguous block of ``X_L``.
    """

    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray
    labels: np.ndarray
    c: int
    _inverse: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        li = _frozen(self.labeled_indices, dtype=np.int64)
        ui = _frozen(self.unlabeled_indices, dtype=np.int64)
        lab = _frozen(self.labels, dtype=np.int64)
        if lab.shape != li.shape:
            raise InputError("one label per labeled index is required")
        n = li.size + ui.size
        allidx = np.concatenate([li, ui])
        if n and not np.array_equal(np.sort(allidx), np.arange(n)):
            raise InputError("labeled and unlabeled indices must partition 0..N-1")
        if lab.size and (lab.min() < 1 or lab.max() > self.c):
            raise InputError(f"labels must lie in 1..{self.c}")
        missing = set(range(1, self.c + 1)) - set(lab.tolist())
        if missing:
            raise InputError(f"classes without a labeled sample: {sorted(missing)}")
        if np.any(np.diff(lab) < 0):
            raise InputError("labeled indices must be grouped by class")
        object.__setattr__(self, "labeled_indices", li)
        object.__setattr__(self, "unlabeled_indices", ui)
        object.__setattr__(self, "labels", lab)
        inv = np.empty(n, dtype=np.int64)
        inv[allidx] = np.arange(n)
        inv.setflags(write=False)
        object.__setattr__(self, "_inverse", inv)

    @property
    def l(self) -> int:  # noqa: E743
        return self.labeled_indices.size

    @property
    def u(self) -> int:
        return self.unlabeled_indices.size

    @property
    def n(self) -> int:
        return self.l + self.u

    @property
    def order(self) -> np.ndarray:
        """Original column index of each working-order position."""
        return np.concatenate([self.labeled_indices, self.unlabeled_indices])

    @property
    def inverse_order(self) -> np.ndarray:
        """Working-order position of each original column."""
        return self._inverse

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c + 1)[1:]

    def reorder(self, x: DataMatrix) -> DataMatrix:
        """Permute columns into the ``[X_L, X_U]`` working layout."""
        if x.N != self.n:
            raise InputError(f"split covers {self.n} samples but matrix has {x.N}")
        return x.columns(self.order)


def _parse_float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"non-numeric field {tok!r}", line=lineno) from None


def load_dense_csv(path, orientation="rows-are-samples", label_column=None):
    """Load a dense numeric CSV file.

    Parameters
    ----------
    path : str or Path
    orientation : {"rows-are-samples", "columns-are-samples"}
    label_column : {None, "first", "last"} or int
        Position of an integer label field within each sample row. Only valid
        with ``rows-are-samples``.

    Returns
    -------
    (DataMatrix, GroundTruth or None)
    """
    if orientation not in ("rows-are-samples", "columns-are-samples"):
        raise InputError(f"unknown orientation {orientation!r}")
    if label_column is not None and orientation != "rows-are-samples":
        raise InputError("a label column requires rows-are-samples orientation")

    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            if rec[0].lstrip().startswith("#"):
                continue
            if not rows and width is None:
                try:
                    [float(t) for t in rec]
                except ValueError:
                    # header row
                    width = len(rec)
                    continue
            if width is None:
                width = len(rec)
            if len(rec) != width:
                raise ParseError(f"expected {width} fields, found {len(rec)}", line=lineno)
            vals = [_parse_float(t, lineno) for t in rec]
            rows.append(vals)
    if not rows:
        raise ParseError("no numeric rows found")
    table = np.asarray(rows, dtype=np.float64)

    truth = None
    if label_column is not None:
        pos = {"first": 0, "last": table.shape[1] - 1}.get(label_column, label_column)
        pos = int(pos)
        raw = table[:, pos]
        if np.any(raw != np.round(raw)):
            raise ParseError("label column contains non-integer values")
        truth = GroundTruth.from_raw(raw.astype(np.int64))
        table = np.delete(table, pos, axis=1)

    if np.any(table < 0):
        r, c = np.argwhere(table < 0)[0]
        raise DomainError(f"negative feature value {table[r, c]} (row {r + 1}, field {c + 1})")
    values = table.T if orientation == "rows-are-samples" else table
    return DataMatrix(values), truth


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic):
    with _open_maybe_gzip(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    dims = struct.unpack(">" + "I" * ndim, data[4:hdr])
    count = int(np.prod(dims))
    payload = np.frombuffer(data, dtype=np.uint8, offset=hdr)
    if payload.size != count:
        raise FormatError(f"{path}: payload has {payload.size} bytes, header implies {count}")
    return payload.reshape(dims)


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair (the MNIST / Fashion-MNIST distribution format).

    Pixels are divided by 255 and every image is flattened row-major into one
    column. Gzip compression is detected from the file prefix.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    x = images.reshape(images.shape[0], -1).T.astype(np.float64) / 255.0
    return DataMatrix(x), GroundTruth.from_raw(labels.astype(np.int64))


def normalize_columns(x: DataMatrix) -> DataMatrix:
    """Scale every column to unit Euclidean norm."""
    norms = np.linalg.norm(x.values, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(f"column {zero[0]} is all zeros and cannot be normalized")
    return DataMatrix(x.values / norms)


def _labeled_count(proportion, n_k):
    # the tolerance absorbs products like 0.7 * 10 = 7.000000000000001
    return min(n_k, max(1, math.ceil(proportion * n_k - 1e-9)))


def split_semi_supervised(truth: GroundTruth, proportion: float, seed: int) -> SemiSupervisedSplit:
    """Choose ``ceil(proportion * n_k)`` labeled samples from every class.

    Selection is uniform without replacement, driven by
    ``numpy.random.default_rng(seed)``, visiting classes in order ``1..K``.
    """
    if not 0 < proportion <= 1:
        raise InputError(f"proportion must lie in (0, 1], got {proportion}")
    rng = np.random.default_rng(seed)
    labeled, labs = [], []
    for k in range(1, truth.K + 1):
        members = np.flatnonzero(truth.labels == k)
        if members.size == 0:
            raise InputError(f"class {k} has no samples")
        chosen = np.sort(rng.choice(members, size=_labeled_count(proportion, members.size), replace=False))
        labeled.append(chosen)
        labs.append(np.full(chosen.size, k))
    labeled = np.concatenate(labeled)
    unlabeled = np.setdiff1d(np.arange(truth.labels.size), labeled)
    return SemiSupervisedSplit(labeled, unlabeled, np.concatenate(labs), truth.K)


def generate_synthetic_blobs(k, per_class, dim, separation, noise, seed):
    """Nonnegative Gaussian blobs around scaled axis-aligned centers.

    Class ``j`` is centered at ``separation * e_j``; every entry gets
    ``|N(0, noise)|`` added. The result is column-normalized and the samples
    are ordered class by class.
    """
    if k < 2:
        raise InputError("need at least two classes")
    if dim < k:
        raise InputError("dim must be >= k")
    if per_class < 1:
        raise InputError("per_class must be positive")
    rng = np.random.default_rng(seed)
    centers = separation * np.eye(dim)[:, :k]
    x = np.repeat(centers, per_class, axis=1)
    if noise > 0:
        x = x + np.abs(rng.normal(0.0, noise, size=x.shape))
    labels = np.repeat(np.arange(1, k + 1), per_class)
    return normalize_columns(DataMatrix(x)), GroundTruth(labels)

"""Cosine K-means and clustering metrics (accuracy with optimal mapping, F-measure)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

__all__ = [
    "ClusteringResult",
    "MetricReport",
    "kmeans_cosine",
    "contingency",
    "best_map",
    "matched_count",
    "clustering_accuracy",
    "pairwise_f_measure",
    "class_f_measure",
    "evaluate_clustering",
]


@dataclass(frozen=True)
class ClusteringResult:
    assignment: np.ndarray  # cluster id in 1..K per sample
    centroids: np.ndarray   # unit-norm rows
    inertia: float
    inertia_history: tuple = ()


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    f_measure: float
    mapping: dict
    f_class: float | None = None


def _unit_rows(rows):
    norms = np.linalg.norm(rows, axis=1)
    out = np.zeros_like(rows)
    nz = norms > 0
    out[nz] = rows[nz] / norms[nz, None]
    return out


def _distances(unit, centroids):
    # zero rows have similarity 0 with everything, i.e. distance 1
    return 1.0 - unit @ centroids.T


def _plusplus(unit, k, rng):
    n = unit.shape[0]
    first = rng.integers(n)
    chosen = [first]
    d = np.clip(_distances(unit, unit[[first]])[:, 0], 0.0, None)
    for _ in range(1, k):
        weights = d.copy()
        weights[chosen] = 0.0
        total = weights.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = rng.choice(rest)
        else:
            nxt = rng.choice(n, p=weights / total)
        chosen.append(int(nxt))
        d = np.minimum(d, np.clip(_distances(unit, unit[[nxt]])[:, 0], 0.0, None))
    return unit[chosen].copy()


def _single_run(unit, k, max_iters, rng):
    n = unit.shape[0]
    cent = _plusplus(unit, k, rng)
    labels = None
    history = []
    for _ in range(max_iters):
        dist = _distances(unit, cent)
        new = np.argmin(dist, axis=1)
        pointd = dist[np.arange(n), new]
        # repair empty clusters by stealing the worst-fitting point from a cluster of size > 1
        for j in range(k):
            if np.any(new == j):
                continue
            sizes = np.bincount(new, minlength=k)
            cand = np.flatnonzero(sizes[new] > 1)
            far = cand[np.argmax(pointd[cand])]
            new[far] = j
            cent[j] = unit[far]
            pointd[far] = 0.0
        history.append(float(pointd.sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            m = unit[labels == j].sum(axis=0)
            norm = np.linalg.norm(m)
            if norm > 0:
                cent[j] = m / norm
    dist = _distances(unit, cent)
    inertia = float(dist[np.arange(n), labels].sum())
    history.append(inertia)
    return labels, cent, inertia, history


def kmeans_cosine(rows, k, restarts=30, max_iters=100, seed=0) -> ClusteringResult:
    """Spherical K-means: distance ``1 - cos``, centroids are renormalized means.

    Rows are normalized up front, so each centroid is the renormalized mean of
    unit vectors. Seeding is k-means++ on the cosine distance; the run with
    the lowest inertia over ``restarts`` seeded runs is returned.
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if k > n:
        raise InputError(f"cannot form {k} clusters from {n} samples")
    if k < 1:
        raise InputError("k must be positive")
    unit = _unit_rows(rows)
    best = None
    for rep in range(restarts):
        rng = np.random.default_rng([int(seed), rep])
        labels, cent, inertia, hist = _single_run(unit, k, max_iters, rng)
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, cent, inertia, hist)
    labels, cent, inertia, hist = best
    return ClusteringResult(labels + 1, cent, max(inertia, 0.0), tuple(hist))


def contingency(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise InputError("predicted and truth must have equal length")
    clusters, p_idx = np.unique(predicted, return_inverse=True)
    classes, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((clusters.size, classes.size), dtype=np.int64)
    np.add.at(table, (p_idx, t_idx), 1)
    return table, clusters, classes


def best_map(predicted, truth) -> dict:
    """Cluster-to-class mapping maximizing agreements (Hungarian algorithm)."""
    table, clusters, classes = contingency(predicted, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return {clusters[i].item(): classes[j].item() for i, j in zip(rows, cols)}


def matched_count(predicted, truth, mapping) -> int:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    mapped = np.array([mapping.get(p.item(), None) for p in predicted], dtype=object)
    return int(np.sum(mapped == truth))


def clustering_accuracy(predicted, truth) -> float:
    truth = np.asarray(truth)
    return matched_count(predicted, truth, best_map(predicted, truth)) / truth.size


def _pairs(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def pairwise_f_measure(predicted, truth) -> float:
    """F1 over unordered sample pairs (same cluster vs. same class)."""
    table, _, _ = contingency(predicted, truth)
    if np.asarray(truth).size < 2:
        raise InputError("pairwise F-measure needs at least two samples")
    tp = _pairs(table.ravel())
    same_cluster = _pairs(table.sum(axis=1))
    same_class = _pairs(table.sum(axis=0))
    precision = tp / same_cluster if same_cluster else 0.0
    recall = tp / same_class if same_class else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def class_f_measure(predicted, truth) -> float:
    """Macro-averaged per-class F1 after the optimal cluster-to-class mapping."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    mapping = best_map(predicted, truth)
    mapped = np.array([mapping.get(p.item(), -1) for p in predicted])
    scores = []
    for cls in np.unique(truth):
        tp = np.sum((mapped == cls) & (truth == cls))
        pp = np.sum(mapped == cls)
        ap = np.sum(truth == cls)
        prec = tp / pp if pp else 0.0
        rec = tp / ap if ap else 0.0
        scores.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return float(np.mean(scores))


def evaluate_clustering(predicted, truth, with_class_f=False) -> MetricReport:
    mapping = best_map(predicted, truth)
    acc = matched_count(predicted, truth, mapping) / np.asarray(truth).size
    return MetricReport(
        acc,
        pairwise_f_measure(predicted, truth),
        mapping,
        class_f_measure(predicted, truth) if with_class_f else None,
    )

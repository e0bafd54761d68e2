"""Cluster validity indices: C-index, Silhouette, Davies-Bouldin, and adjusted Rand index."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError


@dataclass
class MetricsReport:
    dataset: str
    k: int
    c_index: float
    silhouette: float
    davies_bouldin: float
    ari: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _pairwise(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(-1))


def _check(x, labels, min_points: int = 2):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise DataError(f"labels length {labels.shape} does not match {x.shape[0]} points")
    _, codes = np.unique(labels, return_inverse=True)
    if codes.max(initial=-1) < 1:
        raise DataError("cluster validity needs at least 2 clusters")
    if x.shape[0] < min_points:
        raise DataError(f"need at least {min_points} points")
    return x, codes


def c_index(x: np.ndarray, labels) -> float:
    """Hubert-Levin C-index: (S - S_min) / (S_max - S_min) over within-cluster distance sums; 0 is best."""
    x, codes = _check(x, labels, min_points=3)
    d = _pairwise(x)
    iu = np.triu_indices(x.shape[0], k=1)
    dist = d[iu]
    same = codes[iu[0]] == codes[iu[1]]
    n_w = int(same.sum())
    if n_w == 0:
        # all singletons: no within-cluster pairs, S = S_min = 0
        return 0.0
    s = dist[same].sum()
    ordered = np.sort(dist)
    s_min = ordered[:n_w].sum()
    s_max = ordered[-n_w:].sum()
    if s_max == s_min:
        return 0.0
    return float(np.clip((s - s_min) / (s_max - s_min), 0.0, 1.0))


def silhouette(x: np.ndarray, labels) -> float:
    x, codes = _check(x, labels)
    d = _pairwise(x)
    k = codes.max() + 1
    onehot = np.eye(k)[codes]
    sizes = onehot.sum(0)
    sums = d @ onehot  # n x k distance sums
    own = sizes[codes]
    a = np.where(own > 1, sums[np.arange(len(codes)), codes] / np.maximum(own - 1, 1), 0.0)
    mean_to = sums / sizes
    mean_to[np.arange(len(codes)), codes] = np.inf
    b = mean_to.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def davies_bouldin(x: np.ndarray, labels) -> float:
    """Mean over clusters of the worst (S_i + S_j) / M_ij ratio. Coincident centroids give +inf."""
    x, codes = _check(x, labels)
    k = codes.max() + 1
    centroids = np.array([x[codes == j].mean(0) for j in range(k)])
    scatter = np.array([np.linalg.norm(x[codes == j] - centroids[j], axis=1).mean() for j in range(k)])
    sep = _pairwise(centroids)
    total = 0.0
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if j == i:
                continue
            ratio = math.inf if sep[i, j] == 0 else (scatter[i] + scatter[j]) / sep[i, j]
            worst = max(worst, ratio)
        total += worst
    return float(total / k)


def adjusted_rand(labels_a, labels_b) -> float:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise DataError("adjusted_rand needs at least 2 labels")
    _, ca = np.unique(a, return_inverse=True)
    _, cb = np.unique(b, return_inverse=True)
    table = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(table, (ca, cb), 1)

    def pairs(v):
        v = np.asarray(v, dtype=np.float64)
        return float((v * (v - 1) / 2).sum())

    index = pairs(table)
    sum_a = pairs(table.sum(1))
    sum_b = pairs(table.sum(0))
    expected = sum_a * sum_b / (n * (n - 1) / 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        # both partitions trivial (all-one-cluster or all-singletons)
        return 1.0
    return float((index - expected) / (max_index - expected))


def evaluate(x: np.ndarray, labels, truth=None, dataset: str = "", k: int | None = None) -> MetricsReport:
    labels = np.asarray(labels)
    return MetricsReport(
        dataset=dataset,
        k=int(k if k is not None else np.unique(labels).size),
        c_index=c_index(x, labels),
        silhouette=silhouette(x, labels),
        davies_bouldin=davies_bouldin(x, labels),
        ari=None if truth is None else adjusted_rand(truth, labels),
    )

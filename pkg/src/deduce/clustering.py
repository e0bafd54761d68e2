"""Lloyd k-means with k-means++ seeding, seeded restarts, and a k sweep."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

INITS = ("kmeans++", "random")


@dataclass
class KmeansConfig:
    k: int = 2
    restarts: int = 100
    max_iters: int = 300
    tol: float = 1e-6
    seed: int = 0
    init: str = "kmeans++"

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1 or self.max_iters < 1:
            raise ConfigError("restarts and max_iters must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}, got {self.init!r}")


@dataclass
class ClusterResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    restart_index: int
    k: int
    n_iter: int = 0
    inertia_trace: list[float] = field(default_factory=list, repr=False)
    restart_inertias: list[float] = field(default_factory=list, repr=False)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _seed_centroids(x: np.ndarray, k: int, init: str, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    if init == "random":
        return x[rng.choice(n, size=k, replace=False)].copy()
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def _assign(x, centroids):
    d = _sq_dists(x, centroids)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(x.shape[0]), labels]


def _exact_inertia(x, centroids, labels) -> float:
    diff = x - centroids[labels]
    return float((diff * diff).sum())


def _lloyd(x: np.ndarray, k: int, cfg: KmeansConfig, rng: np.random.Generator):
    centroids = _seed_centroids(x, k, cfg.init, rng)
    labels, _ = _assign(x, centroids)
    inertia = _exact_inertia(x, centroids, labels)
    trace = [inertia]
    n_iter = 0
    for n_iter in range(1, cfg.max_iters + 1):
        new = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
        labels, dist = _assign(x, new)
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # reseed with the point farthest from its centroid, never emptying its donor cluster
            far = int(np.where(counts[labels] > 1, dist, -1.0).argmax())
            counts[labels[far]] -= 1
            counts[j] = 1
            new[j] = x[far]
            labels[far] = j
            dist[far] = 0.0
        for j in range(k):
            new[j] = x[labels == j].mean(axis=0)
        centroids = new
        prev, inertia = inertia, _exact_inertia(x, centroids, labels)
        trace.append(inertia)
        if prev - inertia <= cfg.tol * max(prev, np.finfo(float).tiny):
            break
    return labels, centroids, inertia, n_iter, trace


def kmeans(x: np.ndarray, cfg: KmeansConfig) -> ClusterResult:
    """Best-inertia result over ``cfg.restarts`` seeded Lloyd runs (ties go to the lower restart index)."""
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"kmeans needs a non-empty 2-D matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("kmeans input contains non-finite values")
    if cfg.k > x.shape[0]:
        raise ConfigError(f"k ({cfg.k}) exceeds the number of points ({x.shape[0]})")
    best = None
    inertias = []
    for r, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)):
        labels, centroids, inertia, n_iter, trace = _lloyd(x, cfg.k, cfg, np.random.default_rng(child))
        inertias.append(inertia)
        if best is None or inertia < best.inertia:
            best = ClusterResult(labels, centroids, inertia, r, cfg.k, n_iter, trace)
    best.restart_inertias = inertias
    return best


def sweep_k(x: np.ndarray, k_range: tuple[int, int], cfg: KmeansConfig) -> list[ClusterResult]:
    """Run :func:`kmeans` for every k in the inclusive range; seeds are derived per k."""
    lo, hi = k_range
    if lo > hi:
        raise ConfigError(f"empty k range {lo}..{hi}")
    if hi > np.asarray(x).shape[0]:
        raise ConfigError(f"max k ({hi}) exceeds the number of points")
    return [
        kmeans(x, replace(cfg, k=k, seed=int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0])))
        for k in range(lo, hi + 1)
    ]

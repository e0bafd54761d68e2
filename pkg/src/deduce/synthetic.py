"""Simulated multi-block datasets with a known shared cluster assignment."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_io import OmicsBlock, atomic_write_text, write_block
from .errors import ConfigError

SIZE_MODES = ("equal", "heterogeneous")
DEFAULT_BLOCK_NAMES = ("methylation", "mrna", "protein")


@dataclass
class SyntheticSpec:
    n_samples: int = 100
    n_clusters: int = 5
    size_mode: str = "equal"
    block_dims: list[int] = field(default_factory=lambda: [131, 100, 160])
    separation: float = 2.0
    noise_std: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1 or self.n_clusters < 1:
            raise ConfigError("n_samples and n_clusters must be positive")
        if self.n_clusters > self.n_samples:
            raise ConfigError(f"n_clusters ({self.n_clusters}) exceeds n_samples ({self.n_samples})")
        if self.size_mode not in SIZE_MODES:
            raise ConfigError(f"size_mode must be one of {SIZE_MODES}, got {self.size_mode!r}")
        if not self.block_dims or any(d < 1 for d in self.block_dims):
            raise ConfigError(f"block_dims must be positive integers, got {self.block_dims}")
        if not self.separation > 0 or not self.noise_std > 0:
            raise ConfigError("separation and noise_std must be positive")


@dataclass
class LabeledDataset:
    blocks: list[OmicsBlock]
    labels: np.ndarray

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return self.blocks[0].sample_ids


def cluster_sizes(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n, k = spec.n_samples, spec.n_clusters
    if spec.size_mode == "equal":
        sizes = np.full(k, n // k)
        sizes[: n % k] += 1
        return sizes
    while True:
        # largest-remainder apportionment of n * p
        share = n * rng.dirichlet(np.ones(k))
        sizes = np.floor(share).astype(np.int64)
        short = n - sizes.sum()
        sizes[np.argsort(sizes - share, kind="stable")[:short]] += 1
        if sizes.min() >= 1:
            return sizes


def generate(spec: SyntheticSpec) -> LabeledDataset:
    """Gaussian mixture whose cluster assignment is shared by every block.

    Cluster centers are drawn per block from N(0, separation^2); each sample
    is its cluster's center plus N(0, noise_std^2) noise.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sizes = cluster_sizes(spec, rng)
    labels = rng.permutation(np.repeat(np.arange(spec.n_clusters), sizes))
    width = len(str(spec.n_samples - 1))
    ids = tuple(f"s{i:0{width}d}" for i in range(spec.n_samples))

    names = list(DEFAULT_BLOCK_NAMES) if len(spec.block_dims) == 3 else []
    names += [f"block{i}" for i in range(len(names), len(spec.block_dims))]
    blocks = []
    for name, dim in zip(names, spec.block_dims):
        centers = rng.normal(0.0, spec.separation, size=(spec.n_clusters, dim))
        values = centers[labels] + rng.normal(0.0, spec.noise_std, size=(spec.n_samples, dim))
        features = tuple(f"{name}_{j}" for j in range(dim))
        blocks.append(OmicsBlock(name, ids, features, values))
    return LabeledDataset(blocks, labels.astype(np.int64))


def write_labels(sample_ids, labels, path: str | os.PathLike) -> None:
    lines = ["sample_id,label"] + [f"{s},{int(l)}" for s, l in zip(sample_ids, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_dataset(data: LabeledDataset, out_dir: str | os.PathLike) -> list[Path]:
    """One CSV per block plus ``labels.csv``; returns the block paths in order."""
    out_dir = Path(out_dir)
    paths = []
    for block in data.blocks:
        p = out_dir / f"{block.name}.csv"
        write_block(block, p)
        paths.append(p)
    write_labels(data.sample_ids, data.labels, out_dir / "labels.csv")
    return paths

"""Loading, standardizing, fusing and augmenting multi-block feature matrices."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

ORIENTATIONS = ("samples-rows", "features-rows")


@dataclass(frozen=True)
class OmicsBlock:
    name: str
    sample_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if values.ndim != 2 or values.shape != (len(self.sample_ids), len(self.feature_names)):
            raise DataError(
                f"block {self.name!r}: values shape {values.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.feature_names)} features"
            )
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise DataError(f"block {self.name!r}: duplicate sample ids")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FusedDataset:
    sample_ids: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    block_offsets: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        offsets = tuple((str(n), int(s), int(w)) for n, s, w in self.block_offsets)
        pos = 0
        for name, start, width in offsets:
            if start != pos or width <= 0:
                raise DataError(f"block offsets do not partition the columns (at {name!r})")
            pos += width
        if values.ndim != 2 or values.shape != (len(self.sample_ids), pos):
            raise DataError(f"fused values shape {values.shape} inconsistent with offsets/ids")
        values.setflags(write=False)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "block_offsets", offsets)

    @property
    def block_dims(self) -> list[int]:
        return [w for _, _, w in self.block_offsets]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AugmentConfig:
    noise_std: float = 0.1
    mask_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= self.mask_rate < 1:
            raise ValueError(f"mask_rate must be in [0, 1), got {self.mask_rate}")


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_rows(path: Path) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = fh.readline()
            fh.seek(0)
            return list(csv.reader(fh, delimiter=_sniff_delimiter(header)))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read file ({exc})") from exc


def load_block(path: str | os.PathLike, name: str | None = None, orientation: str = "samples-rows") -> OmicsBlock:
    """Parse a delimited text matrix into an :class:`OmicsBlock`.

    Comma or tab delimiter is chosen from the header line. The first column
    holds sample IDs (``samples-rows``) or feature names (``features-rows``,
    the layout of the TCGA benchmark exports). Empty cells are imputed with
    their column mean.
    """
    path = Path(path)
    if orientation not in ORIENTATIONS:
        raise DataError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    rows = [r for r in _read_rows(path) if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DataError(f"{path}: header needs an id column and at least one data column")
    if not body:
        raise DataError(f"{path}: no data rows")

    row_ids = []
    grid = np.empty((len(body), len(header) - 1))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        row_ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                grid[r, c] = np.nan
                continue
            try:
                grid[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at line {line}, column {c + 2} ({header[c + 1]!r})"
                ) from None
            if not np.isfinite(grid[r, c]):
                raise DataError(f"{path}: non-finite value at line {line}, column {c + 2}")
    col_ids = [h.strip() for h in header[1:]]

    if orientation == "features-rows":
        sample_ids, feature_names, values = col_ids, row_ids, grid.T.copy()
        id_kind = "sample id (header)"
    else:
        sample_ids, feature_names, values = row_ids, col_ids, grid
        id_kind = "sample id"
    seen: dict[str, int] = {}
    for i, sid in enumerate(sample_ids):
        if sid in seen:
            raise DataError(f"{path}: duplicate {id_kind} {sid!r} (positions {seen[sid] + 1} and {i + 1})")
        seen[sid] = i

    missing = np.isnan(values)
    if missing.any():
        empty_cols = np.flatnonzero(missing.all(axis=0))
        if empty_cols.size:
            j = int(empty_cols[0])
            raise DataError(f"{path}: feature {feature_names[j]!r} is entirely missing; cannot impute")
        col_means = np.nanmean(values, axis=0)
        values = np.where(missing, col_means, values)

    return OmicsBlock(name or path.stem, tuple(sample_ids), tuple(feature_names), values)


def write_block(block: OmicsBlock, path: str | os.PathLike, delimiter: str = ",") -> None:
    """Write a block in the samples-rows layout ``load_block`` reads back exactly."""
    lines = [delimiter.join(["sample_id", *block.feature_names])]
    for sid, row in zip(block.sample_ids, block.values):
        lines.append(delimiter.join([sid, *(repr(float(v)) for v in row)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def standardize(block: OmicsBlock) -> OmicsBlock:
    """Z-score each column with the population standard deviation; constant columns become 0."""
    n = block.values.shape[0]
    if n < 2:
        raise DataError(f"block {block.name!r}: standardize needs at least 2 samples, got {n}")
    mean = block.values.mean(axis=0)
    centered = block.values - mean
    std = np.sqrt((centered**2).mean(axis=0))
    # relative threshold so float noise in a constant column does not blow up
    scale = np.maximum(np.abs(mean), 1.0)
    const = std <= 1e-12 * scale
    out = np.where(const, 0.0, centered / np.where(const, 1.0, std))
    return OmicsBlock(block.name, block.sample_ids, block.feature_names, out)


def fuse(blocks: Sequence[OmicsBlock]) -> FusedDataset:
    """Inner-join blocks on sample ID (first block's order) and concatenate columns."""
    if not blocks:
        raise DataError("fuse needs at least one block")
    common = set(blocks[0].sample_ids)
    for b in blocks[1:]:
        common &= set(b.sample_ids)
    ids = [s for s in blocks[0].sample_ids if s in common]
    if not ids:
        raise DataError("blocks share no sample ids")
    parts, offsets, start = [], [], 0
    for b in blocks:
        index = {s: i for i, s in enumerate(b.sample_ids)}
        parts.append(b.values[[index[s] for s in ids]])
        width = b.values.shape[1]
        offsets.append((b.name, start, width))
        start += width
    return FusedDataset(tuple(ids), np.hstack(parts), tuple(offsets))


def make_views(batch: np.ndarray, cfg: AugmentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Two independently augmented copies of ``batch``: Gaussian noise, then entry masking.

    Row ``i`` of both views forms the positive pair.
    """
    batch = np.asarray(batch, dtype=np.float64)
    views = []
    for stream in np.random.SeedSequence(cfg.seed).spawn(2):
        rng = np.random.default_rng(stream)
        view = batch.copy()
        if cfg.noise_std > 0:
            view += rng.normal(0.0, cfg.noise_std, size=batch.shape)
        if cfg.mask_rate > 0:
            view[rng.random(batch.shape) < cfg.mask_rate] = 0.0
        views.append(view)
    return views[0], views[1]

"""Pipeline stages and their on-disk artifacts."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import ClusterResult, sweep_k
from .config import PipelineConfig, from_dict
from .data_io import FusedDataset, atomic_write_text, fuse, load_block, standardize
from .errors import ConfigError, DataError
from .metrics import MetricsReport, evaluate
from .nn_core import ParamStore
from .smae import SmaeConfig, embed
from .synthetic import generate, write_dataset
from .trainer import TrainReport, train

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class LoadedData:
    dataset: FusedDataset
    truth: np.ndarray | None
    name: str


def read_labels(path: str | os.PathLike) -> dict[str, int]:
    """``sample_id,label`` CSV -> mapping."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"{path}: cannot read labels ({exc})") from exc
    try:
        return {r["sample_id"]: int(r["label"]) for r in rows}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: expected columns sample_id,label ({exc})") from exc


def load_data(cfg: PipelineConfig, out_dir: Path | None = None) -> LoadedData:
    """Standardized, fused data plus ground truth when available.

    Synthetic data is also written under ``out_dir/data`` when a directory is given.
    """
    if cfg.synthetic is not None:
        data = generate(cfg.synthetic)
        if out_dir is not None:
            write_dataset(data, out_dir / "data")
        blocks, truth, name = data.blocks, data.labels, f"synthetic-{cfg.synthetic.size_mode}-K{cfg.synthetic.n_clusters}"
    else:
        names = cfg.data.names or [None] * len(cfg.data.inputs)
        blocks = [load_block(p, n, cfg.data.orientation) for p, n in zip(cfg.data.inputs, names)]
        truth, name = None, "+".join(b.name for b in blocks)
    ds = fuse([standardize(b) for b in blocks])
    if cfg.synthetic is None and cfg.data.labels:
        mapping = read_labels(cfg.data.labels)
        missing = [s for s in ds.sample_ids if s not in mapping]
        if missing:
            raise DataError(f"{cfg.data.labels}: no label for sample {missing[0]!r}")
        truth = np.array([mapping[s] for s in ds.sample_ids])
    elif truth is not None:
        index = {s: i for i, s in enumerate(blocks[0].sample_ids)}
        truth = truth[[index[s] for s in ds.sample_ids]]
    return LoadedData(ds, truth, name)


def resolve_smae(cfg: PipelineConfig, ds: FusedDataset) -> SmaeConfig:
    """Concrete encoder config: embed_dim defaults to K for synthetic data and 10 otherwise."""
    enc = cfg.smae
    k_default = cfg.synthetic.n_clusters if cfg.synthetic is not None else cfg.k_range[1]
    embed_dim = enc.embed_dim or (cfg.synthetic.n_clusters if cfg.synthetic is not None else 10)
    smae = SmaeConfig(
        block_dims=ds.block_dims,
        d_model=enc.d_model,
        n_heads=enc.n_heads,
        dropout_rate=enc.dropout_rate,
        embed_dim=embed_dim,
        n_clusters=enc.n_clusters or max(k_default, 2),
        mlp_hidden=enc.mlp_hidden,
    )
    try:
        smae.validate()
    except ConfigError as exc:
        raise ConfigError(f"smae: {exc}") from exc
    return smae


def _fmt(v: float) -> str:
    return repr(float(v))


def write_embeddings(path: Path, sample_ids, z: np.ndarray) -> None:
    header = ["sample_id"] + [f"e{j}" for j in range(z.shape[1])]
    lines = [",".join(header)] + [",".join([s, *map(_fmt, row)]) for s, row in zip(sample_ids, z)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_embeddings(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    block = load_block(path, "embeddings")
    return list(block.sample_ids), np.array(block.values)


def write_cluster_labels(path: Path, sample_ids, results: list[ClusterResult]) -> None:
    lines = ["sample_id,k,label"]
    for res in results:
        lines += [f"{s},{res.k},{int(l)}" for s, l in zip(sample_ids, res.labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_cluster_labels(path: str | os.PathLike) -> dict[int, dict[str, int]]:
    out: dict[int, dict[str, int]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                out.setdefault(int(row["k"]), {})[row["sample_id"]] = int(row["label"])
    except OSError as exc:
        raise DataError(f"{path}: cannot read labels ({exc})") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: expected columns sample_id,k,label ({exc})") from exc
    return out


def _json_number(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def write_metrics(out_dir: Path, reports: list[MetricsReport], formats=("csv", "json"), stem: str = "metrics") -> None:
    """One row per k. Absent ARI is an empty CSV cell / JSON null; infinite DB is written as ``inf``."""
    if "csv" in formats:
        lines = ["dataset,k,c_index,silhouette,davies_bouldin,ari"]
        for r in reports:
            ari = "" if r.ari is None else _fmt(r.ari)
            lines.append(f"{r.dataset},{r.k},{_fmt(r.c_index)},{_fmt(r.silhouette)},{_fmt(r.davies_bouldin)},{ari}")
        atomic_write_text(out_dir / f"{stem}.csv", "\n".join(lines) + "\n")
    if "json" in formats:
        rows = [{k: _json_number(v) if isinstance(v, float) else v for k, v in r.as_dict().items()} for r in reports]
        atomic_write_text(out_dir / f"{stem}.json", json.dumps(rows, indent=2) + "\n")


def cluster_stage(z: np.ndarray, cfg: PipelineConfig) -> list[ClusterResult]:
    lo, hi = cfg.k_range
    if hi > z.shape[0]:
        raise ConfigError(f"k_range upper bound {hi} exceeds the number of samples {z.shape[0]}")
    return sweep_k(z, (lo, hi), cfg.kmeans)


def evaluate_stage(z, labelings, truth, name: str) -> list[MetricsReport]:
    """Metrics for each ``(k, labels)`` pair."""
    return [evaluate(z, labels, truth, dataset=name, k=k) for k, labels in labelings]


def write_manifest(out_dir: Path, cfg: PipelineConfig, smae: SmaeConfig | None, extra: dict | None = None) -> None:
    doc = {
        "version": __version__,
        "config": cfg.to_dict(),
        "resolved": {"smae": None if smae is None else dataclasses.asdict(smae), **(extra or {})},
    }
    atomic_write_text(out_dir / MANIFEST, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def config_from_manifest(raw: dict) -> dict:
    """Accept either a plain config mapping or a run manifest written by :func:`write_manifest`."""
    if "config" in raw and "resolved" in raw:
        return raw["config"]
    return raw


@dataclass
class RunResult:
    params: ParamStore
    smae: SmaeConfig
    report: TrainReport
    embeddings: np.ndarray
    clusters: list[ClusterResult]
    metrics: list[MetricsReport]
    out_dir: Path


def run_pipeline(cfg: PipelineConfig) -> RunResult:
    """simulate/load -> train -> embed -> cluster -> evaluate, writing every artifact under ``cfg.out``."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    loaded = load_data(cfg, out)
    ds = loaded.dataset
    if cfg.k_range[1] > ds.n_samples:
        raise ConfigError(f"k_range upper bound {cfg.k_range[1]} exceeds the number of samples {ds.n_samples}")
    smae = resolve_smae(cfg, ds)
    write_manifest(out, cfg, smae)
    log.info("training on %s: %d samples, blocks %s", loaded.name, ds.n_samples, ds.block_dims)
    params, report = train(ds, smae, cfg.train, out / "checkpoint.npz", out / "loss_curve.csv")
    atomic_write_text(
        out / "train_report.json",
        json.dumps(
            {"stopped_epoch": report.stopped_epoch, "early_stopped": report.early_stopped,
             "wall_time_seconds": report.wall_time, "checkpoint": "checkpoint.npz"},
            indent=2,
        ) + "\n",
    )
    z, _ = embed(np.asarray(ds.values), params, smae)
    write_embeddings(out / "embeddings.csv", ds.sample_ids, z)
    results = cluster_stage(z, cfg)
    write_cluster_labels(out / "labels.csv", ds.sample_ids, results)
    reports = evaluate_stage(z, [(r.k, r.labels) for r in results], loaded.truth, loaded.name)
    write_metrics(out, reports, cfg.formats)
    return RunResult(params, smae, report, z, results, reports, out)


ABLATION_KINDS = ("dcl", "infonce")


def run_ablation(cfg: PipelineConfig) -> dict[str, RunResult]:
    """Run the pipeline once per instance-loss kind and write a side-by-side table."""
    out = Path(cfg.out)
    runs = {}
    for kind in ABLATION_KINDS:
        sub = replace(cfg, out=str(out / kind), train=replace(cfg.train, loss=replace(cfg.train.loss, instance_kind=kind)))
        log.info("ablation: instance loss %s", kind)
        runs[kind] = run_pipeline(sub)
    header = "loss_kind,k,c_index,silhouette,davies_bouldin,ari,first_loss,final_loss,loss_ratio,epochs"
    lines = [header]
    rows = []
    for kind, run in runs.items():
        first, final = run.report.total_loss[0], run.report.total_loss[-1]
        for m in run.metrics:
            row = dict(loss_kind=kind, k=m.k, c_index=m.c_index, silhouette=m.silhouette,
                       davies_bouldin=m.davies_bouldin, ari=m.ari, first_loss=first, final_loss=final,
                       loss_ratio=final / first, epochs=run.report.stopped_epoch)
            rows.append(row)
            lines.append(",".join("" if v is None else (_fmt(v) if isinstance(v, float) else str(v)) for v in row.values()))
    atomic_write_text(out / "ablation.csv", "\n".join(lines) + "\n")
    json_rows = [{k: _json_number(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows]
    atomic_write_text(out / "ablation.json", json.dumps(json_rows, indent=2) + "\n")
    return runs


def replay(manifest_path: str | os.PathLike, out: str) -> RunResult:
    """Re-run a pipeline from its manifest into a new output directory."""
    raw = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg = from_dict(config_from_manifest(raw))
    return run_pipeline(replace(cfg, out=out))

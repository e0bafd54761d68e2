"""Command-line front end.

Every subcommand reads an optional ``--config`` (YAML or JSON, or a run
manifest) and then applies ``KEY=VALUE`` overrides with dotted keys, e.g.
``deduce pipeline --config run.yaml train.lr=0.003 kmeans.restarts=1000``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .clustering import sweep_k
from .config import PipelineConfig, apply_override, from_dict, load_config, parse_k_range
from .errors import ConfigError, DataError, DeduceError
from .pipeline import (
    config_from_manifest,
    evaluate_stage,
    load_data,
    read_cluster_labels,
    read_embeddings,
    read_labels,
    resolve_smae,
    run_ablation,
    run_pipeline,
    write_cluster_labels,
    write_embeddings,
    write_manifest,
    write_metrics,
)
from .smae import embed, load_checkpoint
from .synthetic import SyntheticSpec, generate, write_dataset
from .trainer import train

log = logging.getLogger("deduce")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON config or a run manifest")
    p.add_argument("--seed", type=int, help="seed for simulation, training and k-means")
    p.add_argument("--out", help="output directory")
    p.add_argument("--restarts", type=int, help="k-means restarts per k")
    p.add_argument("--k-range", help="inclusive k range, e.g. 2..6")
    p.add_argument("--input", action="append", default=[], metavar="PATH", help="omics block file (repeatable)")
    p.add_argument("--orientation", choices=["samples-rows", "features-rows"])
    p.add_argument("--truth", help="ground-truth labels CSV (sample_id,label)")
    p.add_argument("-q", "--quiet", action="store_true")
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="dotted config overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deduce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic multi-omics dataset")
    _common(p)

    p = sub.add_parser("train", help="train the encoder; writes checkpoint and loss curve")
    _common(p)

    p = sub.add_parser("embed", help="embed data with a trained checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("cluster", help="k-means sweep over an embedding CSV")
    _common(p)
    p.add_argument("--embeddings", required=True)

    p = sub.add_parser("evaluate", help="cluster-validity report for embeddings + labels")
    _common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True, help="labels CSV (sample_id,k,label)")

    p = sub.add_parser("ablate", help="run the pipeline with DCL and InfoNCE instance losses")
    _common(p)

    p = sub.add_parser("pipeline", help="simulate/load, train, embed, cluster and evaluate")
    _common(p)
    return parser


def resolve_config(args: argparse.Namespace, need_data: bool = True) -> PipelineConfig:
    raw = config_from_manifest(load_config(args.config))
    for item in args.overrides:
        apply_override(raw, item)
    if args.input:
        raw.setdefault("data", {})["inputs"] = list(args.input)
        raw["synthetic"] = None
    if args.orientation:
        raw.setdefault("data", {})["orientation"] = args.orientation
    if args.truth:
        raw.setdefault("data", {})["labels"] = args.truth
    cfg = from_dict(raw)
    if need_data and not cfg.data.inputs and cfg.synthetic is None:
        cfg.synthetic = SyntheticSpec()
    if args.seed is not None:
        if cfg.synthetic is not None:
            cfg.synthetic.seed = args.seed
        cfg.train.seed = args.seed
        cfg.kmeans.seed = args.seed
    if args.out:
        cfg.out = args.out
    if args.restarts is not None:
        cfg.kmeans.restarts = args.restarts
    if args.k_range:
        cfg.k_range = parse_k_range(args.k_range)
    if need_data:
        cfg.validate()
    else:
        cfg.kmeans.validate()
    return cfg


def cmd_simulate(args) -> None:
    cfg = resolve_config(args)
    if cfg.synthetic is None:
        raise ConfigError("simulate needs a synthetic section (or no data inputs)")
    paths = write_dataset(generate(cfg.synthetic), cfg.out)
    for p in paths:
        print(p)
    print(Path(cfg.out) / "labels.csv")


def cmd_train(args) -> None:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    loaded = load_data(cfg, out)
    smae = resolve_smae(cfg, loaded.dataset)
    write_manifest(out, cfg, smae)
    _, report = train(loaded.dataset, smae, cfg.train, out / "checkpoint.npz", out / "loss_curve.csv")
    print(f"trained {report.stopped_epoch} epochs, final loss {report.total_loss[-1]:.6f} -> {out / 'checkpoint.npz'}")


def cmd_embed(args) -> None:
    cfg = resolve_config(args)
    params, smae = load_checkpoint(args.checkpoint)
    loaded = load_data(cfg)
    if loaded.dataset.block_dims != smae.block_dims:
        raise DataError(f"data block dims {loaded.dataset.block_dims} do not match checkpoint {smae.block_dims}")
    z, _ = embed(np.asarray(loaded.dataset.values), params, smae)
    path = Path(cfg.out) / "embeddings.csv"
    write_embeddings(path, loaded.dataset.sample_ids, z)
    print(path)


def cmd_cluster(args) -> None:
    cfg = resolve_config(args, need_data=False)
    ids, z = read_embeddings(args.embeddings)
    lo, hi = cfg.k_range
    if not 2 <= lo <= hi <= len(ids):
        raise ConfigError(f"k range {lo}..{hi} must lie within [2, {len(ids)}]")
    results = sweep_k(z, (lo, hi), cfg.kmeans)
    path = Path(cfg.out) / "labels.csv"
    write_cluster_labels(path, ids, results)
    for r in results:
        print(f"k={r.k} inertia={r.inertia:.6g} restart={r.restart_index}")


def cmd_evaluate(args) -> None:
    cfg = resolve_config(args, need_data=False)
    ids, z = read_embeddings(args.embeddings)
    by_k = read_cluster_labels(args.labels)
    truth = None
    truth_path = args.truth or cfg.data.labels
    if truth_path:
        mapping = read_labels(truth_path)
        try:
            truth = np.array([mapping[s] for s in ids])
        except KeyError as exc:
            raise DataError(f"{truth_path}: no label for sample {exc.args[0]!r}") from None
    labelings = []
    for k in sorted(by_k):
        try:
            labelings.append((k, np.array([by_k[k][s] for s in ids])))
        except KeyError as exc:
            raise DataError(f"{args.labels}: k={k} has no label for sample {exc.args[0]!r}") from None
    reports = evaluate_stage(z, labelings, truth, Path(args.embeddings).stem)
    write_metrics(Path(cfg.out), reports, cfg.formats)
    _print_metrics(reports)


def _print_metrics(metrics) -> None:
    for r in metrics:
        ari = "n/a" if r.ari is None else f"{r.ari:.4f}"
        print(f"k={r.k} c_index={r.c_index:.4f} silhouette={r.silhouette:.4f} davies_bouldin={r.davies_bouldin:.4f} ari={ari}")


def cmd_pipeline(args) -> None:
    cfg = resolve_config(args)
    run = run_pipeline(cfg)
    print(f"artifacts in {run.out_dir}")
    _print_metrics(run.metrics)


def cmd_ablate(args) -> None:
    cfg = resolve_config(args)
    runs = run_ablation(cfg)
    for kind, run in runs.items():
        print(f"[{kind}] epochs={run.report.stopped_epoch} loss {run.report.total_loss[0]:.4f} -> {run.report.total_loss[-1]:.4f}")
        _print_metrics(run.metrics)
    print(Path(cfg.out) / "ablation.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except DeduceError as exc:
        print(f"deduce {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"deduce {args.command}: numerical error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Simulated benchmark: K in {5, 10, 15} x {equal, heterogeneous} sizes over several seeds.

Writes one row per (mode, K, seed) with ARI, C-index, Silhouette and Davies-Bouldin
at k = K, plus the training length, to ``<out>/benchmark.csv``.

    python scripts/simulated_benchmark.py --out runs/benchmark --seeds 0 1 2
"""

import argparse
import csv
import logging
import time
from pathlib import Path

from deduce.config import from_dict
from deduce.pipeline import run_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/benchmark")
    ap.add_argument("--clusters", type=int, nargs="+", default=[5, 10, 15])
    ap.add_argument("--modes", nargs="+", default=["equal", "heterogeneous"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--separation", type=float, default=4.0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--restarts", type=int, default=100)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = ["mode", "K", "seed", "ari", "c_index", "silhouette", "davies_bouldin", "epochs", "seconds"]
    with open(out / "benchmark.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for mode in args.modes:
            for k in args.clusters:
                for seed in args.seeds:
                    cfg = from_dict({
                        "synthetic": {"n_samples": 100, "n_clusters": k, "size_mode": mode,
                                      "separation": args.separation, "seed": seed},
                        "train": {"epochs": args.epochs, "seed": seed},
                        "kmeans": {"restarts": args.restarts, "seed": seed},
                        "k_range": [k, k],
                        "out": str(out / f"{mode}-K{k}-s{seed}"),
                    })
                    start = time.perf_counter()
                    run = run_pipeline(cfg)
                    m = run.metrics[0]
                    row = dict(mode=mode, K=k, seed=seed, ari=m.ari, c_index=m.c_index, silhouette=m.silhouette,
                               davies_bouldin=m.davies_bouldin, epochs=run.report.stopped_epoch,
                               seconds=round(time.perf_counter() - start, 2))
                    writer.writerow(row)
                    fh.flush()
                    print(", ".join(f"{key}={val:.4f}" if isinstance(val, float) else f"{key}={val}" for key, val in row.items()))


if __name__ == "__main__":
    main()

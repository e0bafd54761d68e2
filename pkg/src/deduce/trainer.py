"""Training loop: augment, encode both views with shared weights, joint loss, Adam."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data_io import AugmentConfig, FusedDataset, atomic_write_text, make_views
from .errors import ConfigError, DataError, NumericalError
from .losses import LossConfig, total_loss
from .nn_core import AdamState, ParamStore, adam_step
from .smae import SmaeConfig, backward_pair, forward_pair, init_params, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 200
    lr: float = 3e-3
    weight_decay: float = 0.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    early_stop_window: int = 10
    early_stop_delta: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.early_stop_window < 1 or not self.early_stop_delta > 0:
            raise ConfigError("early_stop_window must be >= 1 and early_stop_delta > 0")
        self.loss.validate()


@dataclass
class TrainReport:
    instance_loss: list[float] = field(default_factory=list)
    cluster_loss: list[float] = field(default_factory=list)
    total_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    early_stopped: bool = False
    wall_time: float = 0.0
    checkpoint: str | None = None

    def loss_curve_csv(self) -> str:
        lines = ["epoch,instance_loss,cluster_loss,total_loss"]
        for e, (ld, lc, lt) in enumerate(zip(self.instance_loss, self.cluster_loss, self.total_loss), start=1):
            lines.append(f"{e},{ld!r},{lc!r},{lt!r}")
        return "\n".join(lines) + "\n"


def plateaued(history_d: list[float], history_c: list[float], window: int, delta: float) -> bool:
    """True once both losses moved less than ``delta`` (relative to their window mean) for ``window`` epochs."""
    if len(history_d) < window + 1:
        return False
    for hist in (history_d, history_c):
        recent = np.asarray(hist[-(window + 1) :])
        scale = max(abs(recent[1:].mean()), 1e-12)
        if (np.abs(np.diff(recent)) / scale >= delta).any():
            return False
    return True


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing batch with fewer than 2 rows is dropped."""
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in batches if b.size >= 2]


def train_step(x: np.ndarray, params: ParamStore, cfg: SmaeConfig, tcfg: TrainConfig, rng: np.random.Generator):
    """Forward, backward and one Adam update on one batch; returns (LossBreakdown, ViewPair)."""
    v1, v2 = make_views(x, replace(tcfg.augment, seed=int(rng.integers(2**32))))
    pair = forward_pair(v1, v2, params, cfg, training=True, rng=rng)
    breakdown, grads = total_loss(pair.inst1, pair.inst2, pair.clus1, pair.clus2, tcfg.loss)
    backward_pair(pair, grads, params, cfg)
    return breakdown, pair


def train(
    dataset: FusedDataset,
    cfg: SmaeConfig,
    tcfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    loss_curve_path: str | Path | None = None,
    params: ParamStore | None = None,
) -> tuple[ParamStore, TrainReport]:
    tcfg.validate()
    cfg.validate()
    x = np.asarray(dataset.values)
    n = x.shape[0]
    if n < 2:
        raise DataError(f"training needs at least 2 samples, got {n}")
    if list(dataset.block_dims) != list(cfg.block_dims):
        raise ConfigError(f"dataset block dims {dataset.block_dims} differ from encoder config {cfg.block_dims}")
    batch_size = min(tcfg.batch_size, n)
    if params is None:
        params = init_params(cfg, seed=tcfg.seed)
    state = AdamState()
    report = TrainReport()
    start = time.perf_counter()

    for epoch in range(1, tcfg.epochs + 1):
        rng = np.random.default_rng([tcfg.seed, epoch])
        sums = np.zeros(3)
        batches = epoch_batches(n, batch_size, rng)
        for b, idx in enumerate(batches):
            bd, _ = train_step(x[idx], params, cfg, tcfg, rng)
            if not np.isfinite(bd.total):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
            adam_step(params, state, tcfg.lr, tcfg.weight_decay)
            sums += (bd.instance, bd.cluster, bd.total)
        if not params.all_finite():
            raise NumericalError(f"non-finite parameter after epoch {epoch}")
        ld, lc, lt = (sums / len(batches)).tolist()
        report.instance_loss.append(ld)
        report.cluster_loss.append(lc)
        report.total_loss.append(lt)
        report.stopped_epoch = epoch
        log.info("epoch %d  L_D=%.5f  L_C=%.5f  L=%.5f", epoch, ld, lc, lt)
        if plateaued(report.instance_loss, report.cluster_loss, tcfg.early_stop_window, tcfg.early_stop_delta):
            report.early_stopped = True
            log.info("early stop at epoch %d", epoch)
            break

    report.wall_time = time.perf_counter() - start
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, cfg)
        report.checkpoint = str(checkpoint_path)
    if loss_curve_path is not None:
        atomic_write_text(loss_curve_path, report.loss_curve_csv())
    return params, report

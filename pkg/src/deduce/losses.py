"""Decoupled / InfoNCE contrastive losses, the cluster-level loss, and the joint objective.

Each loss returns its value and the gradients with respect to its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

INSTANCE_KINDS = ("dcl", "infonce")
ENTROPY_VIEWS = ("one", "both")
ANCHOR_VIEWS = ("one", "both")


@dataclass
class LossConfig:
    tau_instance: float = 0.5
    tau_cluster: float = 1.0
    entropy_weight: float = 2.0
    instance_kind: str = "dcl"
    entropy_views: str = "both"
    anchor_views: str = "both"

    def validate(self) -> None:
        if not (self.tau_instance > 0 and self.tau_cluster > 0):
            raise ConfigError("temperatures must be > 0")
        if self.entropy_weight < 0:
            raise ConfigError("entropy_weight must be >= 0")
        if self.instance_kind not in INSTANCE_KINDS:
            raise ConfigError(f"instance_kind must be one of {INSTANCE_KINDS}, got {self.instance_kind!r}")
        if self.entropy_views not in ENTROPY_VIEWS:
            raise ConfigError(f"entropy_views must be one of {ENTROPY_VIEWS}")
        if self.anchor_views not in ANCHOR_VIEWS:
            raise ConfigError(f"anchor_views must be one of {ANCHOR_VIEWS}")


@dataclass
class LossBreakdown:
    instance: float
    cluster: float
    entropy: float
    total: float


def cosine_sim_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("cosine similarity of a zero-norm row")
    return (a / na) @ (b / nb).T


def anchor_losses(z1: np.ndarray, z2: np.ndarray, tau: float, kind: str = "dcl") -> np.ndarray:
    """Per-anchor contrastive losses, shape (2N,): view-1 anchors first, then view-2.

    ``dcl`` drops the self term and the positive pair from the denominator;
    ``infonce`` keeps every intra- and cross-view term.
    """
    losses, _ = _contrast(z1, z2, tau, kind)
    return losses


def _contrast(z1, z2, tau, kind):
    n = z1.shape[0]
    z = np.vstack([z1, z2])
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    if (norm == 0).any():
        raise ValueError("contrastive loss of a zero-norm row")
    u = z / norm
    logits = (u @ u.T) / tau
    pos = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    rows = np.arange(2 * n)
    keep = np.ones((2 * n, 2 * n), dtype=bool)
    if kind == "dcl":
        keep[rows, rows] = False
        keep[rows, pos] = False
    elif kind != "infonce":
        raise ConfigError(f"unknown contrastive kind {kind!r}")
    masked = np.where(keep, logits, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    e = np.where(keep, np.exp(masked - top), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    losses = -logits[rows, pos] + np.log(denom[:, 0]) + top[:, 0]
    return losses, (u, norm, e / denom, pos, rows)


def contrastive_loss(z1: np.ndarray, z2: np.ndarray, tau: float, kind: str = "dcl", anchors: str = "both"):
    """Mean anchor loss over rows of ``z1``/``z2`` with cosine similarity; returns (loss, dz1, dz2)."""
    n = z1.shape[0]
    if n < 2:
        raise ValueError(f"contrastive loss needs at least 2 rows, got {n}")
    losses, (u, norm, soft, pos, rows) = _contrast(z1, z2, tau, kind)
    active = rows if anchors == "both" else rows[:n]
    weight = 1.0 / active.size
    g = np.zeros_like(soft)
    g[active] = soft[active] * weight
    g[active, pos[active]] -= weight
    du = (g + g.T) @ u / tau
    dz = (du - u * (du * u).sum(axis=1, keepdims=True)) / norm
    return float(losses[active].mean()), dz[:n], dz[n:]


def instance_loss(wb1: np.ndarray, wb2: np.ndarray, cfg: LossConfig):
    """Contrast of instance embeddings; returns (L_D, d_wb1, d_wb2)."""
    return contrastive_loss(wb1, wb2, cfg.tau_instance, cfg.instance_kind, cfg.anchor_views)


def entropy_term(wc: np.ndarray, weight: float):
    """``weight * sum_k P_k log P_k`` for the column-mass marginal P; returns (value, d_wc)."""
    p = wc.mean(axis=0)
    safe = np.maximum(p, 1e-300)
    plogp = np.where(p > 0, p * np.log(safe), 0.0)
    dp = weight * (np.log(safe) + 1.0)
    return float(weight * plogp.sum()), np.broadcast_to(dp / wc.shape[0], wc.shape).copy()


def cluster_loss(wc1: np.ndarray, wc2: np.ndarray, cfg: LossConfig):
    """Column-wise (labels-as-features) contrast plus the marginal entropy term.

    Returns ``(L_C, entropy_part, d_wc1, d_wc2)``.
    """
    k = wc1.shape[1]
    if k < 2:
        raise ValueError(f"cluster loss needs at least 2 clusters, got {k}")
    contrast, dcol1, dcol2 = contrastive_loss(wc1.T, wc2.T, cfg.tau_cluster, cfg.instance_kind, "both")
    d1, d2 = dcol1.T.copy(), dcol2.T.copy()
    if cfg.entropy_views == "one":
        ent, de1 = entropy_term(wc1, cfg.entropy_weight)
        d1 += de1
    else:
        e1, de1 = entropy_term(wc1, cfg.entropy_weight / 2)
        e2, de2 = entropy_term(wc2, cfg.entropy_weight / 2)
        ent = e1 + e2
        d1 += de1
        d2 += de2
    return contrast + ent, ent, d1, d2


def total_loss(inst1, inst2, clus1, clus2, cfg: LossConfig):
    """Joint objective L = L_D + L_C; returns (LossBreakdown, (d_inst1, d_inst2, d_clus1, d_clus2))."""
    ld, di1, di2 = instance_loss(inst1, inst2, cfg)
    lc, ent, dc1, dc2 = cluster_loss(clus1, clus2, cfg)
    return LossBreakdown(ld, lc, ent, ld + lc), (di1, di2, dc1, dc2)

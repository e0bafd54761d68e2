"""Symmetric multi-head attention encoder with instance and cluster projection heads.

Each sample becomes a short token sequence, one token per omics block, so
attention mixes information across modalities within a sample. The same
:class:`ParamStore` encodes both augmented views.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .nn_core import (
    ParamStore,
    dropout,
    dropout_backward,
    layer_norm,
    layer_norm_backward,
    linear,
    linear_backward,
    relu,
    relu_backward,
    softmax_rows,
    softmax_rows_backward,
)


@dataclass
class SmaeConfig:
    block_dims: list[int]
    d_model: int = 256
    n_heads: int = 8
    dropout_rate: float = 0.1
    embed_dim: int = 10
    n_clusters: int = 5
    mlp_hidden: int = 256

    def __post_init__(self):
        self.block_dims = [int(d) for d in self.block_dims]

    def validate(self) -> None:
        if not self.block_dims or any(d < 1 for d in self.block_dims):
            raise ConfigError(f"block_dims must be positive, got {self.block_dims}")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model ({self.d_model}) must be a positive multiple of n_heads ({self.n_heads})")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if self.n_clusters < 2:
            raise ConfigError("n_clusters must be >= 2")
        if self.mlp_hidden < 1:
            raise ConfigError("mlp_hidden must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must be in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def offsets(self) -> list[tuple[int, int]]:
        out, start = [], 0
        for w in self.block_dims:
            out.append((start, w))
            start += w
        return out


@dataclass
class ViewPair:
    features1: np.ndarray
    features2: np.ndarray
    inst1: np.ndarray
    inst2: np.ndarray
    clus1: np.ndarray
    clus2: np.ndarray
    caches: tuple = field(default=(), repr=False)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(cfg: SmaeConfig, seed: int = 0) -> ParamStore:
    cfg.validate()
    rng = np.random.default_rng(seed)
    d, hid = cfg.d_model, cfg.mlp_hidden
    p = ParamStore()

    def dense(name, fan_in, fan_out, bias=True):
        p.add(f"{name}.W", _xavier(rng, fan_in, fan_out))
        if bias:
            p.add(f"{name}.b", np.zeros((1, fan_out)))

    for m, w in enumerate(cfg.block_dims):
        dense(f"pe{m}", w, d)
    for name in ("attn.q", "attn.k", "attn.v", "attn.o"):
        dense(name, d, d, bias=False)
    dense("ffn.1", d, hid)
    dense("ffn.2", hid, d)
    for name in ("norm1", "norm2"):
        p.add(f"{name}.g", np.ones((1, d)))
        p.add(f"{name}.b", np.zeros((1, d)))
    for head, width in (("inst", cfg.embed_dim), ("clus", cfg.n_clusters)):
        dense(f"{head}.1", d, hid)
        dense(f"{head}.2", hid, hid)
        dense(f"{head}.3", hid, width)
    return p


def _dense_backward(params: ParamStore, name: str, dy: np.ndarray, cache, bias: bool = True) -> np.ndarray:
    dx, dw, db = linear_backward(dy, cache)
    params.accumulate(f"{name}.W", dw)
    if bias:
        params.accumulate(f"{name}.b", db)
    return dx


# position encoding


def position_encode(x: np.ndarray, params: ParamStore, cfg: SmaeConfig):
    """Map each block slice of the fused rows through its own linear layer: N x M x d_model."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != sum(cfg.block_dims):
        raise DataError(f"input shape {x.shape} does not match block dims {cfg.block_dims}")
    tokens = np.empty((x.shape[0], len(cfg.block_dims), cfg.d_model))
    caches = []
    for m, (start, width) in enumerate(cfg.offsets):
        tokens[:, m], c = linear(x[:, start : start + width], params[f"pe{m}.W"], params[f"pe{m}.b"])
        caches.append(c)
    return tokens, (x.shape, caches)


def position_encode_backward(dtokens: np.ndarray, cache, params: ParamStore, cfg: SmaeConfig) -> np.ndarray:
    shape, caches = cache
    dx = np.empty(shape)
    for m, (start, width) in enumerate(cfg.offsets):
        dx[:, start : start + width] = _dense_backward(params, f"pe{m}", dtokens[:, m], caches[m])
    return dx


# attention block


def _split_heads(t: np.ndarray, h: int) -> np.ndarray:
    n, m, d = t.shape
    return t.reshape(n, m, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(t: np.ndarray) -> np.ndarray:
    n, h, m, dk = t.shape
    return t.transpose(0, 2, 1, 3).reshape(n, m, h * dk)


def multi_head_attention(
    tokens: np.ndarray,
    params: ParamStore,
    cfg: SmaeConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Scaled dot-product self-attention over each sample's tokens, then a feed-forward pair.

    Both sub-layers are residual and followed by layer normalization.

    Returns ``(out, cache)``; ``cache["attn"]`` holds the N x h x M x M weights.
    """
    if tokens.ndim != 3 or tokens.shape[2] != cfg.d_model:
        raise DataError(f"tokens shape {tokens.shape} does not match d_model {cfg.d_model}")
    h = cfg.n_heads
    q, cq = linear(tokens, params["attn.q.W"])
    k, ck = linear(tokens, params["attn.k.W"])
    v, cv = linear(tokens, params["attn.v.W"])
    qh, kh, vh = _split_heads(q, h), _split_heads(k, h), _split_heads(v, h)
    scale = 1.0 / np.sqrt(cfg.d_k)
    attn, _ = softmax_rows(qh @ kh.transpose(0, 1, 3, 2) * scale)
    mixed = _merge_heads(attn @ vh)
    o, co = linear(mixed, params["attn.o.W"])
    o, drop1 = dropout(o, cfg.dropout_rate, training, rng)
    h1, cn1 = layer_norm(tokens + o, params["norm1.g"], params["norm1.b"])

    f, cf1 = linear(h1, params["ffn.1.W"], params["ffn.1.b"])
    f, relu_mask = relu(f)
    f, cf2 = linear(f, params["ffn.2.W"], params["ffn.2.b"])
    f, drop2 = dropout(f, cfg.dropout_rate, training, rng)
    out, cn2 = layer_norm(h1 + f, params["norm2.g"], params["norm2.b"])
    cache = dict(
        cq=cq, ck=ck, cv=cv, qh=qh, kh=kh, vh=vh, attn=attn, scale=scale, co=co,
        drop1=drop1, cn1=cn1, cf1=cf1, relu=relu_mask, cf2=cf2, drop2=drop2, cn2=cn2,
    )
    return out, cache


def _norm_backward(params: ParamStore, name: str, dy: np.ndarray, cache) -> np.ndarray:
    dx, dg, db = layer_norm_backward(dy, cache)
    params.accumulate(f"{name}.g", dg)
    params.accumulate(f"{name}.b", db)
    return dx


def multi_head_attention_backward(dout: np.ndarray, cache, params: ParamStore, cfg: SmaeConfig) -> np.ndarray:
    dsum2 = _norm_backward(params, "norm2", dout, cache["cn2"])
    dh1 = dsum2.copy()
    df = dropout_backward(dsum2, cache["drop2"])
    df = _dense_backward(params, "ffn.2", df, cache["cf2"])
    df = relu_backward(df, cache["relu"])
    dh1 += _dense_backward(params, "ffn.1", df, cache["cf1"])

    dsum1 = _norm_backward(params, "norm1", dh1, cache["cn1"])
    dtokens = dsum1.copy()
    do = dropout_backward(dsum1, cache["drop1"])
    dmixed = _dense_backward(params, "attn.o", do, cache["co"], bias=False)
    dyh = _split_heads(dmixed, cfg.n_heads)
    attn, qh, kh, vh, scale = cache["attn"], cache["qh"], cache["kh"], cache["vh"], cache["scale"]
    dattn = dyh @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dyh
    ds = softmax_rows_backward(dattn, attn) * scale
    dqh = ds @ kh
    dkh = ds.transpose(0, 1, 3, 2) @ qh
    dtokens += _dense_backward(params, "attn.q", _merge_heads(dqh), cache["cq"], bias=False)
    dtokens += _dense_backward(params, "attn.k", _merge_heads(dkh), cache["ck"], bias=False)
    dtokens += _dense_backward(params, "attn.v", _merge_heads(dvh), cache["cv"], bias=False)
    return dtokens


# encoder


def encode(
    view: np.ndarray,
    params: ParamStore,
    cfg: SmaeConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Fused rows -> N x d_model features (position encode, attention block, mean over tokens)."""
    tokens, cpe = position_encode(view, params, cfg)
    out, cattn = multi_head_attention(tokens, params, cfg, training, rng)
    return out.mean(axis=1), (cpe, cattn, out.shape[1])


def encode_backward(dfeatures: np.ndarray, cache, params: ParamStore, cfg: SmaeConfig) -> np.ndarray:
    cpe, cattn, n_tokens = cache
    dout = np.repeat(dfeatures[:, None, :] / n_tokens, n_tokens, axis=1)
    dtokens = multi_head_attention_backward(dout, cattn, params, cfg)
    return position_encode_backward(dtokens, cpe, params, cfg)


# projection heads


def _mlp(x: np.ndarray, params: ParamStore, head: str):
    h, c1 = linear(x, params[f"{head}.1.W"], params[f"{head}.1.b"])
    h, r1 = relu(h)
    h, c2 = linear(h, params[f"{head}.2.W"], params[f"{head}.2.b"])
    h, r2 = relu(h)
    z, c3 = linear(h, params[f"{head}.3.W"], params[f"{head}.3.b"])
    return z, (c1, r1, c2, r2, c3)


def _mlp_backward(dz: np.ndarray, cache, params: ParamStore, head: str) -> np.ndarray:
    c1, r1, c2, r2, c3 = cache
    d = _dense_backward(params, f"{head}.3", dz, c3)
    d = _dense_backward(params, f"{head}.2", relu_backward(d, r2), c2)
    return _dense_backward(params, f"{head}.1", relu_backward(d, r1), c1)


def instance_project(features: np.ndarray, params: ParamStore):
    """Three-layer MLP then L2 row normalization. An all-zero row maps to the first basis vector."""
    z, cmlp = _mlp(features, params, "inst")
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    zero = norm[:, 0] == 0.0
    u = z / np.where(norm == 0.0, 1.0, norm)
    if zero.any():
        u[zero] = 0.0
        u[zero, 0] = 1.0
    return u, (cmlp, u, norm, zero)


def instance_project_backward(du: np.ndarray, cache, params: ParamStore) -> np.ndarray:
    cmlp, u, norm, zero = cache
    dz = (du - u * (du * u).sum(axis=1, keepdims=True)) / np.where(norm == 0.0, 1.0, norm)
    dz[zero] = 0.0
    return _mlp_backward(dz, cmlp, params, "inst")


def cluster_project(features: np.ndarray, params: ParamStore):
    """Three-layer MLP then row softmax: soft cluster assignments."""
    z, cmlp = _mlp(features, params, "clus")
    p, _ = softmax_rows(z)
    return p, (cmlp, p)


def cluster_project_backward(dp: np.ndarray, cache, params: ParamStore) -> np.ndarray:
    cmlp, p = cache
    return _mlp_backward(softmax_rows_backward(dp, p), cmlp, params, "clus")


# both views


def forward_pair(
    view1: np.ndarray,
    view2: np.ndarray,
    params: ParamStore,
    cfg: SmaeConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ViewPair:
    outs = []
    caches = []
    for view in (view1, view2):
        feats, cenc = encode(view, params, cfg, training, rng)
        inst, cinst = instance_project(feats, params)
        clus, cclus = cluster_project(feats, params)
        outs.append((feats, inst, clus))
        caches.append((cenc, cinst, cclus))
    (f1, b1, c1), (f2, b2, c2) = outs
    return ViewPair(f1, f2, b1, b2, c1, c2, caches=tuple(caches))


def backward_pair(pair: ViewPair, grads, params: ParamStore, cfg: SmaeConfig) -> None:
    """Accumulate parameter gradients given d(loss)/d(inst1, inst2, clus1, clus2)."""
    dinst1, dinst2, dclus1, dclus2 = grads
    for (cenc, cinst, cclus), dinst, dclus in zip(pair.caches, (dinst1, dinst2), (dclus1, dclus2)):
        dfeat = instance_project_backward(dinst, cinst, params)
        dfeat += cluster_project_backward(dclus, cclus, params)
        encode_backward(dfeat, cenc, params, cfg)


def embed(x: np.ndarray, params: ParamStore, cfg: SmaeConfig, batch_size: int = 1024):
    """Eval-mode instance embeddings and cluster probabilities for all rows of ``x``."""
    inst, clus = [], []
    for start in range(0, x.shape[0], batch_size):
        feats, _ = encode(x[start : start + batch_size], params, cfg, training=False)
        inst.append(instance_project(feats, params)[0])
        clus.append(cluster_project(feats, params)[0])
    return np.vstack(inst), np.vstack(clus)


# checkpoints

_CONFIG_KEY = "__smae_config__"


def save_checkpoint(path: str | os.PathLike, params: ParamStore, cfg: SmaeConfig) -> None:
    """Write params and config to an ``.npz`` archive via temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **{_CONFIG_KEY: np.array(json.dumps(asdict(cfg)))}, **params.values)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike) -> tuple[ParamStore, SmaeConfig]:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc})") from exc
    with archive:
        cfg = SmaeConfig(**json.loads(str(archive[_CONFIG_KEY])))
        params = ParamStore()
        for name in archive.files:
            if name != _CONFIG_KEY:
                params.add(name, archive[name])
    expected = init_params(cfg, seed=0)
    if set(expected) != set(params) or any(expected[n].shape != params[n].shape for n in expected):
        raise DataError(f"{path}: checkpoint parameters do not match its config")
    return params, cfg

"""Small differentiable kernels with hand-written backward passes.

Every forward function returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache. Parameter gradients are returned
to the caller, who accumulates them into a :class:`ParamStore`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError


class ParamStore:
    """Named parameter matrices with same-shape gradient buffers."""

    def __init__(self) -> None:
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self.values.items():
            out.add(name, value.copy())
        return out

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.values.values())

    def n_parameters(self) -> int:
        return sum(v.size for v in self.values.values())


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None):
    """y = x @ weight + bias over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} does not match weight {weight.shape}")
    y = x @ weight
    if bias is not None:
        if bias.shape[-1] != weight.shape[1]:
            raise ValueError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        y = y + bias.reshape(-1)
    return y, (x, weight)


def linear_backward(dy: np.ndarray, cache):
    """Returns (dx, dweight, dbias); leading axes of ``x`` are summed out."""
    x, weight = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dweight = x2.T @ dy2
    dbias = dy2.sum(axis=0, keepdims=True)
    dx = dy @ weight.T
    return dx, dweight, dbias


def softmax_rows(x: np.ndarray):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return y, y


def softmax_rows_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    # J^T v for each row: y * (v - <v, y>)
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * gain.reshape(-1) + bias.reshape(-1), (xhat, inv, gain)


def layer_norm_backward(dy: np.ndarray, cache):
    """Returns (dx, dgain, dbias)."""
    xhat, inv, gain = cache
    d = xhat.shape[-1]
    dgain = (dy * xhat).reshape(-1, d).sum(axis=0, keepdims=True)
    dbias = dy.reshape(-1, d).sum(axis=0, keepdims=True)
    dxhat = dy * gain.reshape(-1)
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | int | None = None):
    """Inverted dropout: survivors are scaled by 1/(1-rate) so eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    rng = np.random.default_rng(rng)
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * scale, scale


def dropout_backward(dy: np.ndarray, scale: np.ndarray | None) -> np.ndarray:
    return dy if scale is None else dy * scale


def adam_step(params: ParamStore, state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """One Adam update in place, with decoupled weight decay, then zero the gradients."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, value in params.values.items():
        g = params.grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            value -= lr * weight_decay * value
        value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.zero_grad()


def grad_check(
    fn: Callable[[ParamStore], float],
    params: ParamStore,
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn(params)`` must return the scalar loss and accumulate its analytic
    gradient into ``params.grads``. With ``max_coords`` set, at most that many
    randomly chosen coordinates per parameter are probed.
    """
    rng = np.random.default_rng(seed)
    params.zero_grad()
    base = fn(params)
    if not np.isfinite(base):
        raise NumericalError("grad_check: loss is not finite")
    analytic = {k: g.copy() for k, g in params.grads.items()}
    worst = 0.0
    for name, value in params.values.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        grad_flat = analytic[name].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = fn(params)
            flat[i] = old - h
            down = fn(params)
            flat[i] = old
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericalError(f"grad_check: non-finite loss perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * h)
            err = abs(grad_flat[i] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    params.zero_grad()
    return worst

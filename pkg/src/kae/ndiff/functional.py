"""Fused differentiable ops with hand-written backward passes."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, _make


def _softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    p = _softmax_np(x.data, axis)

    def bw(g):
        x._accumulate(p * (g - np.sum(g * p, axis=axis, keepdims=True)))

    return _make(p, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    out = _log_softmax_np(x.data, axis)

    def bw(g):
        x._accumulate(g - np.exp(out) * np.sum(g, axis=axis, keepdims=True))

    return _make(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            x._accumulate(
                inv
                * (
                    dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
                )
            )

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), bw)


def attention_weights(q: np.ndarray, k: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ np.swapaxes(k, -1, -2)) * scale
    if mask is not None:
        mask = np.broadcast_to(mask, scores.shape)
        if np.any(mask.all(axis=-1)):
            raise ValueError("attention row with every key masked")
        scores = np.where(mask, -np.inf, scores)
    return _softmax_np(scores, -1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d) with masked keys removed) @ v.

    ``mask`` is boolean, True where a key is disallowed, broadcastable to
    ``(..., Lq, Lk)``.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    a = attention_weights(q.data, k.data, mask)
    out = a @ v.data

    def bw(g):
        if v.requires_grad:
            v._accumulate(np.swapaxes(a, -1, -2) @ g)
        da = g @ np.swapaxes(v.data, -1, -2)
        ds = a * (da - np.sum(da * a, axis=-1, keepdims=True)) * scale
        if q.requires_grad:
            q._accumulate(ds @ k.data)
        if k.requires_grad:
            k._accumulate(np.swapaxes(ds, -1, -2) @ q.data)

    return _make(out, (q, k, v), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def bw(g):
        x._accumulate(g * keep)

    return _make(x.data * keep, (x,), bw)


def pick(logp: Tensor, labels: np.ndarray) -> Tensor:
    """``logp[..., labels]`` along the last axis (labels has logp.shape[:-1])."""
    labels = np.asarray(labels)
    idx = tuple(np.indices(labels.shape)) + (labels,)

    def bw(g):
        full = np.zeros_like(logp.data)
        full[idx] = g
        logp._accumulate(full)

    return _make(logp.data[idx], (logp,), bw)

"""Parameterized layers composed from autograd primitives.

A "layer" here is a pure function of ``(params, inputs)``; parameters are
plain dicts of named Tensors produced by the ``init_*`` helpers.  All layers
accept either a single sequence ``(T, C)`` or a batch ``(B, T, C)``; the
dropout RNG is owned by the caller's training context.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tz
from .errors import ConfigError, ShapeError
from .tensor import Tensor


def _uniform(rng: np.random.Generator, limit: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_linear(rng: np.random.Generator, in_dim: int, out_dim: int, dtype=np.float32):
    """Glorot-uniform weight, zero bias."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return {
        "W": Tensor(_uniform(rng, limit, (in_dim, out_dim), dtype), requires_grad=True),
        "b": Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True),
    }


def init_conv1d(rng: np.random.Generator, in_ch: int, out_ch: int, kernel_size: int,
                dtype=np.float32):
    """He-uniform kernel (fan_in = in_ch * kernel_size), zero bias."""
    limit = np.sqrt(6.0 / (in_ch * kernel_size))
    return {
        "kernel": Tensor(_uniform(rng, limit, (out_ch, in_ch, kernel_size), dtype),
                         requires_grad=True),
        "bias": Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True),
    }


def init_layer_norm(dim: int, dtype=np.float32):
    return {
        "gamma": Tensor(np.ones(dim, dtype=dtype), requires_grad=True),
        "beta": Tensor(np.zeros(dim, dtype=dtype), requires_grad=True),
    }


def init_attention(rng: np.random.Generator, d_model: int, dtype=np.float32):
    out = {}
    for proj in ("q", "k", "v", "o"):
        lin = init_linear(rng, d_model, d_model, dtype)
        out[f"W{proj}"] = lin["W"]
        out[f"b{proj}"] = lin["b"]
    return out


def linear_forward(x: Tensor, p: dict) -> Tensor:
    """y = x @ W + b over the trailing dimension."""
    W, b = p["W"], p["b"]
    if x.shape[-1] != W.shape[0]:
        raise ShapeError("linear", "trailing dim does not match weight rows",
                         x.shape, W.shape)
    if x.ndim == 1:
        return tz.reshape(tz.matmul(tz.reshape(x, (1, -1)), W) + b, (W.shape[1],))
    return tz.matmul(x, W) + b


def conv1d_causal(x: Tensor, p: dict, dilation: int = 1) -> Tensor:
    """Length-preserving causal convolution: left-pad by (K-1)*dilation zeros.

    Output at time t depends only on inputs at times <= t.
    """
    if dilation < 1:
        raise ConfigError(f"dilation must be >= 1, got {dilation}")
    if x.shape[-2] == 0:
        raise ShapeError("conv1d_causal", "empty time axis", x.shape)
    k = p["kernel"].shape[2]
    left = (k - 1) * dilation
    pad = [(0, 0)] * x.ndim
    pad[-2] = (left, 0)
    out = tz.conv1d(tz.pad_constant(x, pad), p["kernel"], stride=1, dilation=dilation)
    return out + p["bias"]


def layer_norm(x: Tensor, p: dict, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing dim (population variance), scale and shift."""
    mu = tz.reduce_mean(x, axis=-1, keepdims=True)
    xc = x - tz.broadcast_to(mu, x.shape)
    var = tz.reduce_mean(xc * xc, axis=-1, keepdims=True)
    inv = tz.reciprocal(tz.sqrt(var + Tensor(np.asarray(eps, dtype=x.dtype))))
    return xc * tz.broadcast_to(inv, x.shape) * p["gamma"] + p["beta"]


def multi_head_self_attention(x: Tensor, p: dict, n_heads: int) -> Tensor:
    """Bidirectional scaled dot-product attention within one sequence.

    No mask: the encoder models full context inside each segment.
    """
    d_model = x.shape[-1]
    if d_model % n_heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by n_heads {n_heads}")
    d_head = d_model // n_heads

    def split_heads(t: Tensor) -> Tensor:
        t = tz.reshape(t, (*t.shape[:-1], n_heads, d_head))
        nd = t.ndim
        perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)  # (..., H, T, d_head)
        return tz.transpose(t, perm)

    q = split_heads(linear_forward(x, {"W": p["Wq"], "b": p["bq"]}))
    k = split_heads(linear_forward(x, {"W": p["Wk"], "b": p["bk"]}))
    v = split_heads(linear_forward(x, {"W": p["Wv"], "b": p["bv"]}))

    kt_perm = tuple(range(q.ndim - 2)) + (q.ndim - 1, q.ndim - 2)
    scores = tz.scale(tz.matmul(q, tz.transpose(k, kt_perm)), 1.0 / np.sqrt(d_head))
    attn = tz.softmax(scores, axis=-1)
    ctx = tz.matmul(attn, v)                          # (..., H, T, d_head)
    back = tuple(range(ctx.ndim - 3)) + (ctx.ndim - 2, ctx.ndim - 3, ctx.ndim - 1)
    ctx = tz.reshape(tz.transpose(ctx, back), (*x.shape[:-1], d_model))
    return linear_forward(ctx, {"W": p["Wo"], "b": p["bo"]})


def dropout(x: Tensor, p_drop: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train mode zeroes with prob p_drop, scales survivors."""
    if not 0.0 <= p_drop < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p_drop}")
    if mode == "eval":
        return x
    if mode != "train":
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ConfigError("train-mode dropout needs the caller's RNG")
    keep = (rng.random(x.shape) >= p_drop).astype(x.dtype) / (1.0 - p_drop)
    return tz.apply_mask(x, keep)


def sinusoidal_positional_encoding(T: int, d_model: int, dtype=np.float32) -> Tensor:
    """Alternating sin/cos position code with wavelength base 10000."""
    if d_model % 2 != 0:
        raise ConfigError(f"d_model must be even for sin/cos pairing, got {d_model}")
    pos = np.arange(T, dtype=np.float64)[:, None]
    inv_freq = np.power(10000.0, -np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    angles = pos * inv_freq[None, :]
    pe = np.empty((T, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return Tensor(pe.astype(dtype))

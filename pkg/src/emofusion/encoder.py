"""Intra-segment temporal fusion: a pre-norm Transformer encoder stack.

The encoder is stateless across calls: each segment is modeled in
isolation, so segments may be processed in any order (or on different
threads with shared read-only params) with bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers, tensor as tz
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class EncoderConfig:
    d_model: int = 512
    n_heads: int = 8
    n_layers: int = 4
    ffn_dim: int = 1024
    dropout: float = 0.3
    use_positional_encoding: bool = True
    max_len: int = 512

    def __post_init__(self):
        if min(self.d_model, self.n_heads, self.ffn_dim, self.max_len) < 1 or self.n_layers < 0:
            raise ConfigError("EncoderConfig dims must be positive (n_layers >= 0)")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


def init_encoder_params(rng: np.random.Generator, cfg: EncoderConfig, dtype=np.float32,
                        prefix: str = "") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for i in range(cfg.n_layers):
        base = f"{prefix}layer{i}"
        for ln in ("ln1", "ln2"):
            lp = layers.init_layer_norm(cfg.d_model, dtype)
            params[f"{base}.{ln}.gamma"] = lp["gamma"]
            params[f"{base}.{ln}.beta"] = lp["beta"]
        attn = layers.init_attention(rng, cfg.d_model, dtype)
        for k, v in attn.items():
            params[f"{base}.attn.{k}"] = v
        up = layers.init_linear(rng, cfg.d_model, cfg.ffn_dim, dtype)
        down = layers.init_linear(rng, cfg.ffn_dim, cfg.d_model, dtype)
        params[f"{base}.ffn.W1"] = up["W"]
        params[f"{base}.ffn.b1"] = up["b"]
        params[f"{base}.ffn.W2"] = down["W"]
        params[f"{base}.ffn.b2"] = down["b"]
    for name, p in params.items():
        p.name = name
    return params


def _sub(params: dict, base: str) -> dict:
    plen = len(base) + 1
    return {k[plen:]: v for k, v in params.items() if k.startswith(base + ".")}


def encoder_layer(x: Tensor, params: dict, cfg: EncoderConfig, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm: x + drop(attn(ln1(x))), then x + drop(ffn(ln2(x)))."""
    if x.shape[-1] != cfg.d_model:
        raise ShapeError("encoder_layer", f"trailing dim must be d_model={cfg.d_model}", x.shape)
    attn_in = layers.layer_norm(x, _sub(params, "ln1"))
    attn_out = layers.multi_head_self_attention(attn_in, _sub(params, "attn"), cfg.n_heads)
    x = x + layers.dropout(attn_out, cfg.dropout, mode, rng)

    ffn_in = layers.layer_norm(x, _sub(params, "ln2"))
    h = tz.relu(layers.linear_forward(ffn_in, {"W": params["ffn.W1"], "b": params["ffn.b1"]}))
    h = layers.linear_forward(h, {"W": params["ffn.W2"], "b": params["ffn.b2"]})
    return x + layers.dropout(h, cfg.dropout, mode, rng)


def encoder_forward(x: Tensor, params: dict, cfg: EncoderConfig, mode: str = "eval",
                    rng: np.random.Generator | None = None) -> Tensor:
    """Positional encoding (optional) followed by the layer stack."""
    T = x.shape[-2]
    if T > cfg.max_len:
        raise ConfigError(f"segment length {T} exceeds configured max_len {cfg.max_len}")
    if cfg.use_positional_encoding:
        x = x + layers.sinusoidal_positional_encoding(T, cfg.d_model, dtype=x.dtype)
    for i in range(cfg.n_layers):
        x = encoder_layer(x, _sub(params, f"layer{i}"), cfg, mode, rng)
    return x

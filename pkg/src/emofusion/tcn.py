"""Per-modality temporal encoder: stacked dilated-causal residual blocks.

Each temporal block is two causal convolutions (ReLU + dropout after each)
plus a skip connection; the skip uses a kernel-size-1 convolution whenever
the channel count changes, identity otherwise.  Output length always equals
input length; the block with dilation ``d`` and kernel ``k`` sees exactly
``2*(k-1)*d + 1`` past steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers, tensor as tz
from .errors import ConfigError
from .tensor import Tensor


@dataclass
class TcnConfig:
    in_dim: int
    channels: int = 256
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    dropout: float = 0.3

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.in_dim < 1 or self.channels < 1 or self.kernel_size < 1:
            raise ConfigError("TcnConfig dims must be positive")
        if any(d < 1 for d in self.dilations):
            raise ConfigError(f"dilations must all be >= 1, got {self.dilations}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def receptive_field(self) -> int:
        return 1 + 2 * (self.kernel_size - 1) * sum(self.dilations)


def init_tcn_params(rng: np.random.Generator, cfg: TcnConfig, dtype=np.float32,
                    prefix: str = "") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    c_in = cfg.in_dim
    for i in range(len(cfg.dilations)):
        base = f"{prefix}block{i}"
        for j, ch_in in ((1, c_in), (2, cfg.channels)):
            conv = layers.init_conv1d(rng, ch_in, cfg.channels, cfg.kernel_size, dtype)
            params[f"{base}.conv{j}.kernel"] = conv["kernel"]
            params[f"{base}.conv{j}.bias"] = conv["bias"]
        if c_in != cfg.channels:
            down = layers.init_conv1d(rng, c_in, cfg.channels, 1, dtype)
            params[f"{base}.down.kernel"] = down["kernel"]
            params[f"{base}.down.bias"] = down["bias"]
        c_in = cfg.channels
    for name, p in params.items():
        p.name = name
    return params


def _sub(params: dict, base: str) -> dict:
    plen = len(base) + 1
    return {k[plen:]: v for k, v in params.items() if k.startswith(base + ".")}


def temporal_block(x: Tensor, params: dict, dilation: int, cfg: TcnConfig,
                   mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
    """conv -> relu -> dropout, twice, plus (possibly projected) residual."""
    h = layers.conv1d_causal(x, _sub(params, "conv1"), dilation)
    h = layers.dropout(tz.relu(h), cfg.dropout, mode, rng)
    h = layers.conv1d_causal(h, _sub(params, "conv2"), dilation)
    h = layers.dropout(tz.relu(h), cfg.dropout, mode, rng)
    if "down.kernel" in params:
        res = layers.conv1d_causal(x, _sub(params, "down"), dilation=1)
    else:
        res = x
    return h + res


def tcn_forward(x: Tensor, cfg: TcnConfig, params: dict, mode: str = "eval",
                rng: np.random.Generator | None = None) -> Tensor:
    """Apply the configured temporal blocks in sequence; (…, T, in_dim) -> (…, T, channels)."""
    if x.shape[-1] != cfg.in_dim:
        raise ConfigError(f"input dim {x.shape[-1]} does not match TcnConfig.in_dim {cfg.in_dim}")
    h = x
    for i, d in enumerate(cfg.dilations):
        h = temporal_block(h, _sub(params, f"block{i}"), d, cfg, mode, rng)
    return h

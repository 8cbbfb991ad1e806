"""End-to-end fusion model: modality TCNs -> concat -> encoder -> task head.

One model serves exactly one task; the head emits 2 tanh-bounded values for
valence/arousal regression, 8 unnormalized logits for expression
classification, or 12 unnormalized logits for action-unit detection.
Checkpoints pair a TNSR parameter file with a plain-text ``key=value``
config sidecar; the loader cross-validates the two.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers, serialize, tensor as tz
from .encoder import EncoderConfig, encoder_forward, init_encoder_params
from .errors import ConfigError, DataFormatError, ShapeError
from .tcn import TcnConfig, init_tcn_params, tcn_forward
from .tensor import Tensor


class Task(enum.Enum):
    VA = "va"
    EXPR = "expr"
    AU = "au"

    @property
    def out_dim(self) -> int:
        return {Task.VA: 2, Task.EXPR: 8, Task.AU: 12}[self]

    @classmethod
    def parse(cls, text: str) -> "Task":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown task {text!r}; expected va, expr, or au") from None


@dataclass
class FusionConfig:
    visual_dim: int
    audio_dim: int
    task: Task
    visual_tcn: TcnConfig | None = None
    audio_tcn: TcnConfig | None = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mlp_hidden: int = 256

    def __post_init__(self):
        if self.visual_dim < 1 or self.audio_dim < 1 or self.mlp_hidden < 1:
            raise ConfigError("FusionConfig dims must be positive")
        if isinstance(self.task, str):
            self.task = Task.parse(self.task)
        if self.visual_tcn is None:
            self.visual_tcn = TcnConfig(in_dim=self.visual_dim)
        if self.audio_tcn is None:
            self.audio_tcn = TcnConfig(in_dim=self.audio_dim)
        if self.visual_tcn.in_dim != self.visual_dim:
            raise ConfigError("visual_tcn.in_dim must equal visual_dim")
        if self.audio_tcn.in_dim != self.audio_dim:
            raise ConfigError("audio_tcn.in_dim must equal audio_dim")

    @property
    def concat_dim(self) -> int:
        return self.visual_tcn.channels + self.audio_tcn.channels

    # --- key=value sidecar ---
    def to_kv(self) -> str:
        lines = [
            f"task={self.task.value}",
            f"visual_dim={self.visual_dim}",
            f"audio_dim={self.audio_dim}",
            f"mlp_hidden={self.mlp_hidden}",
        ]
        for name, t in (("visual_tcn", self.visual_tcn), ("audio_tcn", self.audio_tcn)):
            lines += [
                f"{name}.channels={t.channels}",
                f"{name}.kernel_size={t.kernel_size}",
                f"{name}.dilations={','.join(str(d) for d in t.dilations)}",
                f"{name}.dropout={t.dropout}",
            ]
        e = self.encoder
        lines += [
            f"encoder.d_model={e.d_model}",
            f"encoder.n_heads={e.n_heads}",
            f"encoder.n_layers={e.n_layers}",
            f"encoder.ffn_dim={e.ffn_dim}",
            f"encoder.dropout={e.dropout}",
            f"encoder.use_positional_encoding={int(e.use_positional_encoding)}",
            f"encoder.max_len={e.max_len}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "FusionConfig":
        kv: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"config sidecar line {lineno} is not key=value: {raw!r}")
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        try:
            def tcn_of(name: str, in_dim: int) -> TcnConfig:
                return TcnConfig(
                    in_dim=in_dim,
                    channels=int(kv[f"{name}.channels"]),
                    kernel_size=int(kv[f"{name}.kernel_size"]),
                    dilations=tuple(int(d) for d in kv[f"{name}.dilations"].split(",")),
                    dropout=float(kv[f"{name}.dropout"]),
                )
            visual_dim = int(kv["visual_dim"])
            audio_dim = int(kv["audio_dim"])
            return cls(
                visual_dim=visual_dim,
                audio_dim=audio_dim,
                task=Task.parse(kv["task"]),
                visual_tcn=tcn_of("visual_tcn", visual_dim),
                audio_tcn=tcn_of("audio_tcn", audio_dim),
                encoder=EncoderConfig(
                    d_model=int(kv["encoder.d_model"]),
                    n_heads=int(kv["encoder.n_heads"]),
                    n_layers=int(kv["encoder.n_layers"]),
                    ffn_dim=int(kv["encoder.ffn_dim"]),
                    dropout=float(kv["encoder.dropout"]),
                    use_positional_encoding=bool(int(kv["encoder.use_positional_encoding"])),
                    max_len=int(kv["encoder.max_len"]),
                ),
                mlp_hidden=int(kv["mlp_hidden"]),
            )
        except KeyError as exc:
            raise DataFormatError(f"config sidecar missing key {exc.args[0]!r}") from None


def init_model_params(rng: np.random.Generator, cfg: FusionConfig,
                      dtype=np.float32) -> dict[str, Tensor]:
    """All learnable weights, addressable by stable hierarchical names."""
    params: dict[str, Tensor] = {}
    params.update(init_tcn_params(rng, cfg.visual_tcn, dtype, prefix="visual_tcn."))
    params.update(init_tcn_params(rng, cfg.audio_tcn, dtype, prefix="audio_tcn."))
    if cfg.concat_dim != cfg.encoder.d_model:
        proj = layers.init_linear(rng, cfg.concat_dim, cfg.encoder.d_model, dtype)
        params["input_proj.W"] = proj["W"]
        params["input_proj.b"] = proj["b"]
    params.update(init_encoder_params(rng, cfg.encoder, dtype, prefix="encoder."))
    h1 = layers.init_linear(rng, cfg.encoder.d_model, cfg.mlp_hidden, dtype)
    h2 = layers.init_linear(rng, cfg.mlp_hidden, cfg.task.out_dim, dtype)
    params["head.W1"], params["head.b1"] = h1["W"], h1["b"]
    params["head.W2"], params["head.b2"] = h2["W"], h2["b"]
    for name, p in params.items():
        p.name = name
    return params


def _sub(params: dict, base: str) -> dict:
    plen = len(base) + 1
    return {k[plen:]: v for k, v in params.items() if k.startswith(base + ".")}


def concat_features(g_v: Tensor, g_a: Tensor) -> Tensor:
    """Channel-axis concatenation, visual first."""
    if g_v.shape[:-1] != g_a.shape[:-1]:
        raise ShapeError("concat_features", "sequence lengths differ", g_v.shape, g_a.shape)
    return tz.concat([g_v, g_a], axis=-1)


def fuse_forward(f_v: Tensor, f_a: Tensor, params: dict, cfg: FusionConfig,
                 mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
    """Per-frame task outputs for one segment (or a batch of segments).

    Inputs are (T, visual_dim) and (T, audio_dim), or (B, T, *) batches.
    """
    if f_v.shape[-1] != cfg.visual_dim:
        raise ShapeError("fuse_forward", f"visual dim must be {cfg.visual_dim}", f_v.shape)
    if f_a.shape[-1] != cfg.audio_dim:
        raise ShapeError("fuse_forward", f"audio dim must be {cfg.audio_dim}", f_a.shape)
    if f_v.shape[:-1] != f_a.shape[:-1]:
        raise ShapeError("fuse_forward", "modality sequence shapes differ", f_v.shape, f_a.shape)

    g_v = tcn_forward(f_v, cfg.visual_tcn, _sub(params, "visual_tcn"), mode, rng)
    g_a = tcn_forward(f_a, cfg.audio_tcn, _sub(params, "audio_tcn"), mode, rng)
    g_c = concat_features(g_v, g_a)
    if "input_proj.W" in params:
        g_c = layers.linear_forward(g_c, {"W": params["input_proj.W"], "b": params["input_proj.b"]})
    h = encoder_forward(g_c, _sub(params, "encoder"), cfg.encoder, mode, rng)

    y = tz.relu(layers.linear_forward(h, {"W": params["head.W1"], "b": params["head.b1"]}))
    y = layers.dropout(y, cfg.encoder.dropout, mode, rng)
    y = layers.linear_forward(y, {"W": params["head.W2"], "b": params["head.b2"]})
    if cfg.task is Task.VA:
        y = tz.tanh(y)
    return y


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _sidecar(path) -> Path:
    return Path(path).with_suffix(".cfg")


def save_checkpoint(path, params: dict[str, Tensor], cfg: FusionConfig) -> None:
    """Write ``<path>`` (TNSR params) plus ``<stem>.cfg`` (config sidecar)."""
    path = Path(path)
    serialize.save_params(path, params)
    _sidecar(path).write_text(cfg.to_kv())


def load_checkpoint(path, dtype=np.float32) -> tuple[dict[str, Tensor], FusionConfig]:
    """Load and cross-validate a checkpoint; params come back trainable."""
    path = Path(path)
    cfg = FusionConfig.from_kv(_sidecar(path).read_text())
    params = serialize.load_params(path, dtype=dtype)
    rng = np.random.default_rng(0)  # shapes only; values are overwritten
    expected = init_model_params(rng, cfg, dtype)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise DataFormatError(
            f"checkpoint/config mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}")
    for name, p in params.items():
        if p.shape != expected[name].shape:
            raise DataFormatError(
                f"checkpoint tensor {name!r} has shape {p.shape}, config implies {expected[name].shape}")
        p.requires_grad = True
    return params, cfg

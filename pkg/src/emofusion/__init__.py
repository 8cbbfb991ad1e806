"""Audio-visual fusion for continuous emotion recognition.

A desk-scale library: dilated-causal TCNs per modality, a Transformer
encoder over the concatenated streams, and task heads for valence/arousal
regression, 8-way expression classification, and 12-unit action-unit
detection — built on a minimal numpy reverse-mode autodiff core so every
gradient is checkable against finite differences.
"""

from .encoder import EncoderConfig, encoder_forward, encoder_layer, init_encoder_params
from .errors import (
    ConfigError,
    DataFormatError,
    EmofusionError,
    GraphError,
    NumericError,
    ShapeError,
    TrainingError,
)
from .gradcheck import GradientReport, finite_diff_check
from .layers import (
    conv1d_causal,
    dropout,
    layer_norm,
    linear_forward,
    multi_head_self_attention,
    sinusoidal_positional_encoding,
)
from .losses import au_loss, expr_loss, va_loss
from .metrics import ccc, format_report, macro_f1, multilabel_f1
from .model import (
    FusionConfig,
    Task,
    concat_features,
    fuse_forward,
    init_model_params,
    load_checkpoint,
    save_checkpoint,
)
from .serialize import load_params, save_params
from .tcn import TcnConfig, init_tcn_params, tcn_forward, temporal_block
from .tensor import Tensor, finite_diff_check as _unused_guard  # noqa: F401
from .tensor import primitive_forward, set_strict, zero_grad

__version__ = "0.1.0"

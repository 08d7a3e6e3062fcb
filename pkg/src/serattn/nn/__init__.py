from .layers import (
    BatchNorm1d,
    ChannelAttention,
    Conv1d,
    Dense,
    Flatten,
    MaxPool1d,
    ReLU,
    SpatialAttention,
    sigmoid,
)
from .model import (
    AttentionCNN,
    ModelConfig,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Tensor

__all__ = [
    "AttentionCNN", "BatchNorm1d", "ChannelAttention", "Conv1d", "Dense", "Flatten",
    "MaxPool1d", "ModelConfig", "ReLU", "SpatialAttention", "Tensor", "decode_checkpoint",
    "encode_checkpoint", "load_checkpoint", "save_checkpoint", "sigmoid",
]

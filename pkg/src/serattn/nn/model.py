"""The attention 1D-CNN and its binary checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DecodeError, ShapeError, StateError
from .layers import (
    BatchNorm1d,
    ChannelAttention,
    Conv1d,
    Dense,
    Flatten,
    MaxPool1d,
    ReLU,
    SpatialAttention,
)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int
    length: int = 20  # input length L (pooled MFCC vector by default)
    in_channels: int = 1
    channels: int = 256
    kernel: int = 7
    pool: int = 7
    n_blocks: int = 2
    dense_units: int = 64
    reduction: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if self.n_blocks < 1:
            raise ConfigError("need at least one conv block")
        if self.channels % self.reduction:
            raise ConfigError(f"channels ({self.channels}) not divisible by reduction ({self.reduction})")


class AttentionCNN:
    """conv-bn-relu-maxpool blocks -> channel attention -> spatial attention -> dense -> head."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.blocks = []
        c_in = cfg.in_channels
        for _ in range(cfg.n_blocks):
            self.blocks.append(
                (Conv1d(c_in, cfg.channels, cfg.kernel, rng), BatchNorm1d(cfg.channels), ReLU(), MaxPool1d(cfg.pool))
            )
            c_in = cfg.channels
        self.ca = ChannelAttention(cfg.channels, cfg.reduction, rng)
        self.sa = SpatialAttention(cfg.kernel, rng)
        self.flatten = Flatten()
        self.dense = Dense(cfg.channels * cfg.length, cfg.dense_units, rng)
        self.dense_act = ReLU()
        self.head = Dense(cfg.dense_units, cfg.n_classes, rng)
        self._forwarded = False

    # -- parameter access -------------------------------------------------------

    def named_layers(self):
        for i, (conv, bn, _, _) in enumerate(self.blocks, start=1):
            yield f"conv{i}", conv
            yield f"bn{i}", bn
        yield "ca", self.ca
        yield "sa", self.sa
        yield "dense", self.dense
        yield "head", self.head

    def parameters(self) -> dict[str, Tensor]:
        return {f"{ln}.{pn}": t for ln, layer in self.named_layers() for pn, t in layer.params().items()}

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (_, bn, _, _) in enumerate(self.blocks, start=1):
            out[f"bn{i}.running_mean"] = bn.running_mean
            out[f"bn{i}.running_var"] = bn.running_var
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: t.data.copy() for k, t in self.parameters().items()}
        state.update({k: v.copy() for k, v in self.buffers().items()})
        return state

    def load_state_dict(self, state: dict) -> None:
        params = self.parameters()
        expected = set(params) | set(self.buffers())
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in params.items():
            if state[k].shape != t.shape:
                raise ShapeError(f"{k}: shape {state[k].shape} != {t.shape}")
            t.data = np.array(state[k], dtype=np.float64)
        for i, (_, bn, _, _) in enumerate(self.blocks, start=1):
            bn.running_mean = np.array(state[f"bn{i}.running_mean"], dtype=np.float64)
            bn.running_var = np.array(state[f"bn{i}.running_var"], dtype=np.float64)

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.zero_grad()

    # -- passes -------------------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        expect = (self.cfg.in_channels, self.cfg.length)
        if x.ndim != 3 or x.shape[1:] != expect:
            raise ShapeError(f"model expects input (batch, {expect[0]}, {expect[1]}), got {x.shape}")
        for block in self.blocks:
            for layer in block:
                x = layer.forward(x, training)
        x = self.ca.forward(x)
        x = self.sa.forward(x)
        x = self.flatten.forward(x)
        x = self.dense_act.forward(self.dense.forward(x))
        self._forwarded = True
        return self.head.forward(x)

    __call__ = forward

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate ``dL/dlogits``; returns (and stores in ``.grad``) every parameter gradient."""
        if not self._forwarded:
            raise StateError("backward called before forward")
        self.zero_grad()
        g = self.head.backward(np.asarray(dlogits, dtype=np.float64))
        g = self.dense.backward(self.dense_act.backward(g))
        g = self.flatten.backward(g)
        g = self.sa.backward(g)
        g = self.ca.backward(g)
        for block in reversed(self.blocks):
            for layer in reversed(block):
                g = layer.backward(g)
        self.input_grad = g
        return {k: t.grad for k, t in self.parameters().items()}

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        from ..learn import softmax

        out = [softmax(self.forward(x[i : i + batch_size])) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.cfg.n_classes))


# -- checkpoint -------------------------------------------------------------------

CKPT_MAGIC = b"SERM"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHIII")


def encode_checkpoint(model: AttentionCNN) -> bytes:
    """Header (magic, version, J, L, r) then (name, rank, dims, f64 LE payload) per tensor."""
    cfg = model.cfg
    parts = [_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, cfg.n_classes, cfg.length, cfg.reduction)]
    for name, arr in model.state_dict().items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes, seed: int = 0) -> AttentionCNN:
    if len(data) < _CKPT_HEADER.size:
        raise DecodeError("checkpoint shorter than header")
    magic, version, J, L, r = _CKPT_HEADER.unpack_from(data, 0)
    if magic != CKPT_MAGIC:
        raise DecodeError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise DecodeError(f"unsupported checkpoint version {version}")
    pos = _CKPT_HEADER.size
    state = {}
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            end = pos + 8 * count
            if end > len(data):
                raise DecodeError(f"tensor {name!r} truncated")
            state[name] = np.frombuffer(data[pos:end], dtype="<f8").reshape(dims).astype(np.float64)
            pos = end
    except struct.error as exc:
        raise DecodeError(f"truncated checkpoint: {exc}") from None

    n_blocks = sum(1 for k in state if k.startswith("conv") and k.endswith(".weight"))
    try:
        conv1 = state["conv1.weight"]
        dense = state["dense.weight"]
        sa = state["sa.weight"]
    except KeyError as exc:
        raise DecodeError(f"checkpoint lacks tensor {exc}") from None
    cfg = ModelConfig(
        n_classes=J, length=L, in_channels=conv1.shape[1], channels=conv1.shape[0],
        kernel=sa.shape[2], n_blocks=n_blocks, dense_units=dense.shape[0], reduction=r, seed=seed,
    )
    model = AttentionCNN(cfg)
    model.load_state_dict(state)
    return model


def save_checkpoint(model: AttentionCNN, path) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def load_checkpoint(path) -> AttentionCNN:
    return decode_checkpoint(Path(path).read_bytes())

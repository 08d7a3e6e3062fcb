"""Layers with hand-written forward/backward passes.

Activations are plain float64 arrays shaped ``(batch, channels, length)``;
learnable parameters are :class:`Tensor` objects whose ``grad`` is filled by
``backward``.  Each layer caches what its backward pass needs during
``forward``; calling ``backward`` first raises :class:`StateError`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError, StateError
from .tensor import Tensor


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape))


class Layer:
    def __init__(self):
        self._cache = None

    def params(self) -> dict[str, Tensor]:
        return {}

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache


# -- functional conv kernels, shared by Conv1d and SpatialAttention ------------

def _conv_same_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    B, C, L = x.shape
    O, Cw, K = w.shape
    if C != Cw:
        raise ShapeError(f"conv expects {Cw} input channels, got {C}")
    if K % 2 != 1:
        raise ConfigError("'same' padding needs an odd kernel")
    pad = (K - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)  # (B, C, L, K)
    cols = cols.transpose(0, 2, 1, 3).reshape(B * L, C * K)
    y = cols @ w.reshape(O, C * K).T + b
    return y.reshape(B, L, O).transpose(0, 2, 1), cols


def _conv_same_backward(dy: np.ndarray, cols: np.ndarray, w: np.ndarray, x_shape):
    B, C, L = x_shape
    O, _, K = w.shape
    pad = (K - 1) // 2
    dy2 = dy.transpose(0, 2, 1).reshape(B * L, O)
    dw = (dy2.T @ cols).reshape(w.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ w.reshape(O, C * K)).reshape(B, L, C, K)
    dxp = np.zeros((B, C, L + K - 1))
    for k in range(K):
        dxp[:, :, k : k + L] += dcols[:, :, :, k].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + L], dw, db


class Conv1d(Layer):
    """Stride-1 cross-correlation with zero 'same' padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 7, rng=None):
        super().__init__()
        if kernel % 2 != 1:
            raise ConfigError("'same' padding needs an odd kernel")
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel
        self.weight = uniform_init(rng, (out_channels, in_channels, kernel), fan_in)
        self.bias = uniform_init(rng, (out_channels,), fan_in)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        y, cols = _conv_same_forward(x, self.weight.data, self.bias.data)
        self._cache = (cols, x.shape)
        return y

    def backward(self, dy):
        cols, shape = self._need_cache()
        dx, dw, db = _conv_same_backward(dy, cols, self.weight.data, shape)
        self.weight.accumulate(dw)
        self.bias.accumulate(db)
        return dx


class MaxPool1d(Layer):
    """Sliding max, stride 1, 'same' padding with -inf; ties go to the leftmost index."""

    def __init__(self, window: int = 7):
        super().__init__()
        if window % 2 != 1:
            raise ConfigError("max-pool window must be odd")
        self.window = window

    def forward(self, x, training=False):
        pad = (self.window - 1) // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)), constant_values=-np.inf)
        win = np.lib.stride_tricks.sliding_window_view(xp, self.window, axis=2)
        idx = win.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, (B, C, L) = self._need_cache()
        pad = (self.window - 1) // 2
        dxp = np.zeros((B, C, L + self.window - 1))
        for k in range(self.window):
            dxp[:, :, k : k + L] += np.where(idx == k, dy, 0.0)
        return dxp[:, :, pad : pad + L]


class BatchNorm1d(Layer):
    """Per-channel normalization over batch and length axes."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.gamma = Tensor(np.ones(channels))
        self.beta = Tensor(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps = eps
        self.momentum = momentum

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False):
        B, C, L = x.shape
        if B == 0:
            raise ShapeError("batch norm on an empty batch")
        if C != self.gamma.size:
            raise ShapeError(f"batch norm expects {self.gamma.size} channels, got {C}")
        if training:
            n = B * L
            if n < 2:
                raise ShapeError("training-mode batch norm needs at least two values per channel")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean
            self.running_var = (1 - m) * self.running_var + m * var * n / (n - 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        self._cache = (xhat, inv_std, training)
        return self.gamma.data[None, :, None] * xhat + self.beta.data[None, :, None]

    def backward(self, dy):
        xhat, inv_std, training = self._need_cache()
        self.gamma.accumulate((dy * xhat).sum(axis=(0, 2)))
        self.beta.accumulate(dy.sum(axis=(0, 2)))
        dxhat = dy * self.gamma.data[None, :, None]
        if not training:
            return dxhat * inv_std[None, :, None]
        n = dy.shape[0] * dy.shape[2]
        s1 = dxhat.sum(axis=(0, 2), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return inv_std[None, :, None] / n * (n * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    def forward(self, x, training=False):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache()


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = uniform_init(rng, (out_features, in_features), in_features)
        self.bias = uniform_init(rng, (out_features,), in_features)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ShapeError(f"dense expects (batch, {self.weight.shape[1]}), got {x.shape}")
        self._cache = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dy):
        x = self._need_cache()
        self.weight.accumulate(dy.T @ x)
        self.bias.accumulate(dy.sum(axis=0))
        return dy @ self.weight.data


class ChannelAttention(Layer):
    """Per-channel gate from average- and max-pooled descriptors through a shared MLP.

    ``M = sigmoid(W1 relu(W0 avg) + W1 relu(W0 max))``; output is ``x * M``.
    """

    def __init__(self, channels: int, reduction: int = 8, rng=None):
        super().__init__()
        if reduction < 1 or channels % reduction:
            raise ConfigError(f"channels ({channels}) must be divisible by reduction ({reduction})")
        rng = rng or np.random.default_rng(0)
        hidden = channels // reduction
        self.reduction = reduction
        self.w0 = uniform_init(rng, (hidden, channels), channels)
        self.w1 = uniform_init(rng, (channels, hidden), hidden)

    def params(self):
        return {"w0": self.w0, "w1": self.w1}

    def attention(self, x):
        return self._gate(x)[0]

    def _gate(self, x):
        avg = x.mean(axis=2)
        arg = x.argmax(axis=2)
        mx = np.take_along_axis(x, arg[:, :, None], axis=2)[:, :, 0]
        ha = np.maximum(avg @ self.w0.data.T, 0.0)
        hm = np.maximum(mx @ self.w0.data.T, 0.0)
        M = sigmoid(ha @ self.w1.data.T + hm @ self.w1.data.T)
        return M, (avg, mx, arg, ha, hm)

    def forward(self, x, training=False):
        if x.shape[1] != self.w0.shape[1]:
            raise ShapeError(f"channel attention expects {self.w0.shape[1]} channels, got {x.shape[1]}")
        M, parts = self._gate(x)
        self._cache = (x, M, parts)
        return x * M[:, :, None]

    def backward(self, dy):
        x, M, (avg, mx, arg, ha, hm) = self._need_cache()
        L = x.shape[2]
        dx = dy * M[:, :, None]
        dz = (dy * x).sum(axis=2) * M * (1.0 - M)
        self.w1.accumulate(dz.T @ ha + dz.T @ hm)
        dha = (dz @ self.w1.data) * (ha > 0)
        dhm = (dz @ self.w1.data) * (hm > 0)
        self.w0.accumulate(dha.T @ avg + dhm.T @ mx)
        dx += (dha @ self.w0.data)[:, :, None] / L
        np.put_along_axis(
            dx, arg[:, :, None],
            np.take_along_axis(dx, arg[:, :, None], axis=2) + (dhm @ self.w0.data)[:, :, None],
            axis=2,
        )
        return dx


class SpatialAttention(Layer):
    """Per-position gate: width-k conv over the [channel-mean; channel-max] map, then sigmoid."""

    def __init__(self, kernel: int = 7, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = uniform_init(rng, (1, 2, kernel), 2 * kernel)
        self.bias = uniform_init(rng, (1,), 2 * kernel)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def attention(self, x):
        return self._gate(x)[0][:, 0, :]

    def _gate(self, x):
        avg = x.mean(axis=1)
        arg = x.argmax(axis=1)
        mx = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :]
        pooled = np.stack([avg, mx], axis=1)
        z, cols = _conv_same_forward(pooled, self.weight.data, self.bias.data)
        return sigmoid(z), (pooled, arg, cols)

    def forward(self, x, training=False):
        if x.shape[2] < 1:
            raise ShapeError("spatial attention needs length >= 1")
        M, parts = self._gate(x)
        self._cache = (x, M, parts)
        return x * M

    def backward(self, dy):
        x, M, (pooled, arg, cols) = self._need_cache()
        C = x.shape[1]
        dx = dy * M
        dz = (dy * x).sum(axis=1, keepdims=True) * M * (1.0 - M)
        dpooled, dw, db = _conv_same_backward(dz, cols, self.weight.data, pooled.shape)
        self.weight.accumulate(dw)
        self.bias.accumulate(db)
        dx += dpooled[:, 0:1, :] / C
        np.put_along_axis(
            dx, arg[:, None, :],
            np.take_along_axis(dx, arg[:, None, :], axis=1) + dpooled[:, 1:2, :],
            axis=1,
        )
        return dx


class Flatten(Layer):
    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())

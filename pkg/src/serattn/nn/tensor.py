from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeError


class Tensor:
    """Dense float64 array with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad: Optional[np.ndarray] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        if grad is not None:
            self.grad = np.asarray(grad, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                raise ShapeError(f"grad shape {self.grad.shape} != data shape {self.data.shape}")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

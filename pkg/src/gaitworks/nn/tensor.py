"""Dense tensor container used as the engine's parameter currency.

Values live in a row-major float32 ndarray; an optional ``grad`` buffer of
identical shape accumulates gradients during a backward pass.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A named float32 buffer with an optional gradient slot."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, data, name: str = "", dtype=np.float32):
        arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        self.name = name
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {self.name or '?'} shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in tensor {self.name or '?'}")

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.data.shape}, grad={'yes' if self.grad is not None else 'no'})"

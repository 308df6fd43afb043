"""Stateful layers assembled from the functional kernels.

A layer owns its parameter tensors (and, for batch norm, running stats),
caches what its backward needs, and reports its output shape so a network
builder can chain layers without running data through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .tensor import Tensor

BN_EPS = 1e-3
BN_MOMENTUM = 0.99


@dataclass
class LayerSpec:
    """Declarative layer description; kind-specific fields are ignored elsewhere."""

    kind: str
    filters: int = 0
    kernel_size: int = 3
    stride: int = 2
    padding: str = "same"
    units: int = 0
    rate: float = 0.5

    KINDS = ("conv2d", "batchnorm", "relu", "flatten", "dense", "dropout", "softmax")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d":
            if self.filters < 1 or self.kernel_size < 1 or self.stride < 1:
                raise ValueError(f"bad conv2d spec: {self}")
            if self.padding not in ("same", "valid"):
                raise ValueError(f"bad conv2d padding: {self.padding!r}")
        if self.kind == "dense" and self.units < 1:
            raise ValueError(f"dense layer needs units >= 1, got {self.units}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "conv2d":
            d.update(filters=self.filters, kernel_size=self.kernel_size,
                     stride=self.stride, padding=self.padding)
        elif self.kind == "dense":
            d["units"] = self.units
        elif self.kind == "dropout":
            d["rate"] = self.rate
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        spec = cls(kind=d["kind"],
                   filters=d.get("filters", 0),
                   kernel_size=d.get("kernel_size", 3),
                   stride=d.get("stride", 2),
                   padding=d.get("padding", "same"),
                   units=d.get("units", 0),
                   rate=d.get("rate", 0.5))
        spec.validate()
        return spec


class Layer:
    kind = "?"

    def params(self) -> list[Tensor]:
        return []

    def state_tensors(self) -> list[Tensor]:
        return []

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, spec: LayerSpec, in_channels: int, rng: np.random.Generator):
        k, f = spec.kernel_size, spec.filters
        fan_in = k * k * in_channels
        limit = np.sqrt(6.0 / fan_in)
        self.spec = spec
        self.kernels = Tensor(rng.uniform(-limit, limit, (k, k, in_channels, f)), "conv.kernels")
        self.bias = Tensor(np.zeros(f), "conv.bias")
        self._cache = None

    def params(self):
        return [self.kernels, self.bias]

    def output_shape(self, shape):
        h, w, _ = shape
        s = self.spec.stride
        if self.spec.padding == "same":
            ho, wo = -(-h // s), -(-w // s)
        else:
            ho = (h - self.spec.kernel_size) // s + 1
            wo = (w - self.spec.kernel_size) // s + 1
        return (ho, wo, self.spec.filters)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.conv2d_forward(x, self.kernels.data, self.bias.data,
                                            self.spec.stride, self.spec.padding)
        return out

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("conv2d backward called before forward")
        dx, dk, db = F.conv2d_backward(dout, self._cache, self.kernels.data)
        self.kernels.accumulate_grad(dk)
        self.bias.accumulate_grad(db)
        return dx


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), "bn.gamma")
        self.beta = Tensor(np.zeros(channels), "bn.beta")
        self.running_mean = Tensor(np.zeros(channels), "bn.running_mean")
        self.running_var = Tensor(np.ones(channels), "bn.running_var")
        self._cache = None
        self._collector = None

    def params(self):
        return [self.gamma, self.beta]

    def state_tensors(self):
        return [self.running_mean, self.running_var]

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False, rng=None):
        out, self._cache, new_mean, new_var = F.batchnorm_forward(
            x, self.gamma.data, self.beta.data,
            "train" if train else "infer",
            self.running_mean.data, self.running_var.data,
            momentum=BN_MOMENTUM, eps=BN_EPS)
        if train:
            self.running_mean.data = new_mean
            self.running_var.data = new_var
        if self._collector is not None and train:
            c = x.shape[-1]
            flat = np.asarray(x).reshape(-1, c)
            m = flat.shape[0]
            self._collector["count"] += m
            self._collector["sum"] += flat.sum(axis=0, dtype=np.float64)
            self._collector["sumsq"] += np.einsum("ij,ij->j", flat, flat, dtype=np.float64)
        return out

    def begin_stat_collection(self) -> None:
        c = self.gamma.size
        self._collector = {"count": 0, "sum": np.zeros(c, np.float64),
                           "sumsq": np.zeros(c, np.float64)}

    def end_stat_collection(self) -> None:
        col = self._collector
        self._collector = None
        if not col or col["count"] == 0:
            return
        mean = col["sum"] / col["count"]
        var = np.clip(col["sumsq"] / col["count"] - mean * mean, 0.0, None)
        self.running_mean.data = mean.astype(self.running_mean.data.dtype)
        self.running_var.data = var.astype(self.running_var.data.dtype)

    def backward(self, dout):
        dx, dgamma, dbeta = F.batchnorm_backward(dout, self._cache)
        self.gamma.accumulate_grad(dgamma)
        self.beta.accumulate_grad(dbeta)
        return dx


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._cache = None

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._cache)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._cache = None

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.flatten_forward(x)
        return out

    def backward(self, dout):
        return F.flatten_backward(dout, self._cache)


class Dense(Layer):
    kind = "dense"

    def __init__(self, spec: LayerSpec, in_features: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / in_features)
        self.spec = spec
        self.weights = Tensor(rng.uniform(-limit, limit, (in_features, spec.units)), "dense.weights")
        self.bias = Tensor(np.zeros(spec.units), "dense.bias")
        self._cache = None

    def params(self):
        return [self.weights, self.bias]

    def output_shape(self, shape):
        return (self.spec.units,)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.dense_forward(x, self.weights.data, self.bias.data)
        return out

    def backward(self, dout):
        dx, dw, db = F.dense_backward(dout, self._cache, self.weights.data)
        self.weights.accumulate_grad(dw)
        self.bias.accumulate_grad(db)
        return dx


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self._cache = None

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.dropout(x, self.spec.rate, "train" if train else "infer", rng)
        return out

    def backward(self, dout):
        return F.dropout_backward(dout, self._cache)


class Softmax(Layer):
    kind = "softmax"

    def __init__(self):
        self._probs = None

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False, rng=None):
        self._probs = F.softmax(x)
        return self._probs

    def backward(self, dout):
        return F.softmax_backward(dout, self._probs)


def build_layer(spec: LayerSpec, input_shape: tuple, rng: np.random.Generator) -> Layer:
    spec.validate()
    if spec.kind == "conv2d":
        if len(input_shape) != 3:
            raise ValueError(f"conv2d expects an HxWxC input, got shape {input_shape}")
        return Conv2d(spec, input_shape[-1], rng)
    if spec.kind == "batchnorm":
        return BatchNorm(input_shape[-1])
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "flatten":
        return Flatten()
    if spec.kind == "dense":
        if len(input_shape) != 1:
            raise ValueError(f"dense expects a flat input, got shape {input_shape}")
        return Dense(spec, input_shape[0], rng)
    if spec.kind == "dropout":
        return Dropout(spec)
    if spec.kind == "softmax":
        return Softmax()
    raise ValueError(f"unknown layer kind {spec.kind!r}")

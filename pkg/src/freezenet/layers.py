"""Layers with hand-written forward and backward passes.

Batches are float64 arrays. Dense-style layers take ``N x features``;
temporal layers take ``N x channels x samples``. Every layer object caches
what its backward pass needs during ``forward(..., training=True)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, ModeError, ShapeError
from .tensor import Rng, rng_uniform_matrix

LOG_CLAMP = 1e-7
MASK_MODES = ("frozen", "sparse")


@dataclass
class Param:
    """A trainable array plus its gradient buffer.

    ``frozen`` is a boolean array (True = never updated) or None.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray | None = None
    frozen: np.ndarray | None = None


def uniform_init(rng: Rng, rows: int, cols: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return (2.0 * rng_uniform_matrix(rng, rows, cols) - 1.0) * bound


# --------------------------------------------------------------------------
# Dense
# --------------------------------------------------------------------------


def dense_forward(x, w, b) -> np.ndarray:
    """``y[n] = W x[n] + b`` for each row of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"dense_forward: x {x.shape}, W {w.shape}, b {b.shape}")
    return x @ w.T + b


def dense_backward(grad_y, x, w):
    """Gradients ``(grad_x, grad_W, grad_b)``; weight and bias grads are summed over the batch."""
    if grad_y.ndim != 2 or x.ndim != 2 or grad_y.shape[0] != x.shape[0]:
        raise ShapeError(f"dense_backward: grad_y {grad_y.shape}, x {x.shape}")
    if w.shape != (grad_y.shape[1], x.shape[1]):
        raise ShapeError(f"dense_backward: W {w.shape} inconsistent with grad_y {grad_y.shape}, x {x.shape}")
    grad_w = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    grad_x = grad_y @ w
    return grad_x, grad_w, grad_b


class Dense:
    """Plain fully connected layer ``W: out x in``; bias starts at zero."""

    def __init__(self, in_features: int, out_features: int, rng: Rng, name: str = "dense"):
        self.name = name
        self.W = Param(f"{name}.W", uniform_init(rng, out_features, in_features, in_features))
        self.b = Param(f"{name}.b", np.zeros(out_features))
        self._x = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x, training=False):
        if training:
            self._x = x
        return dense_forward(x, self.W.value, self.b.value)

    def _raw_backward(self, grad_y):
        return dense_backward(grad_y, self._x, self.W.value)

    def backward(self, grad_y):
        grad_x, grad_w, grad_b = self._raw_backward(grad_y)
        self.W.grad = grad_w
        self.b.grad = grad_b
        return grad_x


# --------------------------------------------------------------------------
# Weight-Freezing
# --------------------------------------------------------------------------


@dataclass
class MaskMatrix:
    """Fixed binary freeze mask; ``keep`` is True where the weight trains."""

    keep: np.ndarray
    threshold_t: float
    mode: str
    seed: int

    @property
    def frozen_fraction(self) -> float:
        return float(np.count_nonzero(~self.keep)) / self.keep.size


def make_mask(rows: int, cols: int, t: float, mode: str, seed: int) -> MaskMatrix:
    """Draw ``u ~ U[0, 1)`` row-major from ``Rng(seed)``; weight (i, j) is frozen iff ``u < t``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"threshold t must lie in [0, 1], got {t}")
    if mode not in MASK_MODES:
        raise ModeError(f"mask mode must be one of {MASK_MODES}, got {mode!r}")
    u = rng_uniform_matrix(Rng(seed), rows, cols)
    return MaskMatrix(keep=u >= t, threshold_t=float(t), mode=mode, seed=int(seed))


def apply_mask_to_grad(grad_w, mask: MaskMatrix) -> np.ndarray:
    if grad_w.shape != mask.keep.shape:
        raise ShapeError(f"gradient {grad_w.shape} does not match mask {mask.keep.shape}")
    return np.where(mask.keep, grad_w, 0.0)


class FrozenDense(Dense):
    """Fully connected layer whose masked weights never change.

    ``frozen`` mode keeps masked weights at their initial values and leaves the
    forward pass untouched. ``sparse`` mode pins masked weights to zero, which
    removes those connections from both passes. The bias is never masked.
    """

    def __init__(self, in_features, out_features, rng, mask: MaskMatrix, name="classifier"):
        super().__init__(in_features, out_features, rng, name=name)
        if mask.keep.shape != self.W.value.shape:
            raise ShapeError(f"{name}: mask {mask.keep.shape} does not match W {self.W.value.shape}")
        self.mask = mask
        self.W.frozen = ~mask.keep
        if mask.mode == "sparse":
            sparsify_weights(self)
        self.frozen_snapshot = self.W.value.copy()

    def backward(self, grad_y):
        grad_x, grad_w, grad_b = self._raw_backward(grad_y)
        self.W.grad = apply_mask_to_grad(grad_w, self.mask)
        self.b.grad = grad_b
        return grad_x

    def check_invariants(self) -> None:
        """Raise if a masked weight moved (frozen) or became nonzero (sparse)."""
        frozen = ~self.mask.keep
        w = self.W.value
        if self.mask.mode == "sparse":
            ok = not np.any(w[frozen] != 0.0)
        else:
            ok = np.array_equal(w[frozen], self.frozen_snapshot[frozen])
        if not ok:
            raise AssertionError(f"{self.name}: masked weights changed in {self.mask.mode} mode")


def sparsify_weights(layer: FrozenDense) -> None:
    """Zero every masked weight of a sparse-mode layer in place."""
    if layer.mask.mode != "sparse":
        raise ModeError(f"{layer.name}: sparsify_weights needs a sparse-mode mask, got {layer.mask.mode!r}")
    layer.W.value = np.where(layer.mask.keep, layer.W.value, 0.0)


# --------------------------------------------------------------------------
# Dropout
# --------------------------------------------------------------------------


def dropout_forward(v, p: float, training: bool, rng: Rng):
    """Inverted dropout. Returns ``(output, multiplier)``; the multiplier is reused by backward."""
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return v, None
    u = rng.uniform(v.size).reshape(v.shape)
    multiplier = np.where(u >= p, 1.0 / (1.0 - p), 0.0)
    return v * multiplier, multiplier


class Dropout:
    def __init__(self, p: float, rng: Rng, name="dropout"):
        if not 0.0 <= p < 1.0:
            raise DomainError(f"dropout probability must lie in [0, 1), got {p}")
        self.name = name
        self.p = p
        self.rng = rng
        self._multiplier = None

    def params(self):
        return []

    def forward(self, x, training=False):
        y, self._multiplier = dropout_forward(x, self.p, training, self.rng)
        return y

    def backward(self, grad_y):
        return grad_y if self._multiplier is None else grad_y * self._multiplier


# --------------------------------------------------------------------------
# Temporal convolution
# --------------------------------------------------------------------------


def _conv_out_len(length, kernel_len, stride):
    if length < kernel_len:
        raise ShapeError(f"conv1d: input length {length} is shorter than kernel {kernel_len}")
    return (length - kernel_len) // stride + 1


def _im2col(x, kernel_len, stride):
    n, c, length = x.shape
    out_len = _conv_out_len(length, kernel_len, stride)
    windows = sliding_window_view(x, kernel_len, axis=2)[:, :, : (out_len - 1) * stride + 1 : stride, :]
    # (N, C, L', k) -> (N, L', C, k) -> (N*L', C*k)
    return windows.transpose(0, 2, 1, 3).reshape(n * out_len, c * kernel_len), out_len


def conv1d_forward(x, kernels, bias, kernel_len: int, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation: ``y[n, o, t] = b[o] + sum_{c, j} K[o, c*k + j] x[n, c, t*stride + j]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or kernels.shape[1] != x.shape[1] * kernel_len or bias.shape != (kernels.shape[0],):
        raise ShapeError(f"conv1d_forward: x {x.shape}, kernels {kernels.shape}, k={kernel_len}")
    cols, out_len = _im2col(x, kernel_len, stride)
    y = cols @ kernels.T + bias
    return y.reshape(x.shape[0], out_len, kernels.shape[0]).transpose(0, 2, 1)


def conv1d_backward(grad_out, x, kernels, kernel_len: int, stride: int = 1, need_input_grad=True):
    """Exact gradients ``(grad_x, grad_kernels, grad_bias)`` of ``conv1d_forward``."""
    n, c, length = x.shape
    out_len = _conv_out_len(length, kernel_len, stride)
    if grad_out.shape != (n, kernels.shape[0], out_len):
        raise ShapeError(f"conv1d_backward: grad_out {grad_out.shape}, expected {(n, kernels.shape[0], out_len)}")
    cols, _ = _im2col(x, kernel_len, stride)
    g = grad_out.transpose(0, 2, 1).reshape(n * out_len, kernels.shape[0])
    grad_k = g.T @ cols
    grad_b = g.sum(axis=0)
    if not need_input_grad:
        return None, grad_k, grad_b
    grad_cols = (g @ kernels).reshape(n, out_len, c, kernel_len)
    grad_x = np.zeros_like(x)
    span = (out_len - 1) * stride + 1
    for j in range(kernel_len):
        grad_x[:, :, j : j + span : stride] += grad_cols[:, :, :, j].transpose(0, 2, 1)
    return grad_x, grad_k, grad_b


class Conv1d:
    def __init__(self, in_channels, out_channels, kernel_len, rng: Rng, stride=1, name="conv1d"):
        if kernel_len < 1 or stride < 1:
            raise ShapeError(f"{name}: kernel_len and stride must be >= 1")
        self.name = name
        self.kernel_len = kernel_len
        self.stride = stride
        fan_in = in_channels * kernel_len
        self.kernels = Param(f"{name}.kernels", uniform_init(rng, out_channels, fan_in, fan_in))
        self.bias = Param(f"{name}.bias", np.zeros(out_channels))
        self.need_input_grad = True
        self._x = None

    def params(self):
        return [self.kernels, self.bias]

    def forward(self, x, training=False):
        if training:
            self._x = x
        return conv1d_forward(x, self.kernels.value, self.bias.value, self.kernel_len, self.stride)

    def backward(self, grad_y):
        grad_x, self.kernels.grad, self.bias.grad = conv1d_backward(
            grad_y, self._x, self.kernels.value, self.kernel_len, self.stride, self.need_input_grad
        )
        return grad_x


class ChannelMix:
    """Dense map over the channel axis, applied at every time step: ``N x C x L -> N x S x L``."""

    def __init__(self, in_channels, out_channels, rng: Rng, name="channel_mix"):
        self.name = name
        self.W = Param(f"{name}.W", uniform_init(rng, out_channels, in_channels, in_channels))
        self.b = Param(f"{name}.b", np.zeros(out_channels))
        self._flat = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x, training=False):
        if x.ndim != 3:
            raise ShapeError(f"{self.name}: expected N x C x L input, got {x.shape}")
        n, c, length = x.shape
        flat = x.transpose(0, 2, 1).reshape(n * length, c)
        if training:
            self._flat = flat
            self._shape = x.shape
        y = dense_forward(flat, self.W.value, self.b.value)
        return y.reshape(n, length, -1).transpose(0, 2, 1)

    def backward(self, grad_y):
        n, c, length = self._shape
        g = grad_y.transpose(0, 2, 1).reshape(n * length, -1)
        grad_x, self.W.grad, self.b.grad = dense_backward(g, self._flat, self.W.value)
        return grad_x.reshape(n, length, c).transpose(0, 2, 1)


# --------------------------------------------------------------------------
# Activations and pooling
# --------------------------------------------------------------------------

ACTIVATIONS = ("relu", "elu", "square")


def activation_forward(x, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if kind == "square":
        return x * x
    raise DomainError(f"unknown activation {kind!r}")


def activation_backward(grad_y, x, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.where(x > 0, grad_y, 0.0)
    if kind == "elu":
        # derivative at exactly 0 is taken as 1
        return np.where(x >= 0, grad_y, grad_y * np.exp(np.minimum(x, 0.0)))
    if kind == "square":
        return 2.0 * x * grad_y
    raise DomainError(f"unknown activation {kind!r}")


def mean_pool_forward(x, width: int, stride: int) -> np.ndarray:
    length = x.shape[-1]
    out_len = _conv_out_len(length, width, stride)
    windows = sliding_window_view(x, width, axis=-1)[..., : (out_len - 1) * stride + 1 : stride, :]
    return windows.mean(axis=-1)


def mean_pool_backward(grad_y, input_shape, width: int, stride: int) -> np.ndarray:
    out_len = grad_y.shape[-1]
    span = (out_len - 1) * stride + 1
    grad_x = np.zeros(input_shape)
    share = grad_y / width
    for j in range(width):
        grad_x[..., j : j + span : stride] += share
    return grad_x


def log_mean_pool_forward(x, width: int, stride: int) -> np.ndarray:
    """``log(max(mean_pool(x), 1e-7))`` over the last axis."""
    return np.log(np.maximum(mean_pool_forward(x, width, stride), LOG_CLAMP))


def log_mean_pool_backward(grad_y, x, width: int, stride: int) -> np.ndarray:
    pooled = mean_pool_forward(x, width, stride)
    grad_pooled = np.where(pooled > LOG_CLAMP, grad_y / np.maximum(pooled, LOG_CLAMP), 0.0)
    return mean_pool_backward(grad_pooled, x.shape, width, stride)


class Activation:
    def __init__(self, kind: str, name="activation"):
        if kind not in ACTIVATIONS:
            raise DomainError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
        self.name = name
        self.kind = kind
        self._x = None

    def params(self):
        return []

    def forward(self, x, training=False):
        if training:
            self._x = x
        return activation_forward(x, self.kind)

    def backward(self, grad_y):
        return activation_backward(grad_y, self._x, self.kind)


class MeanPool:
    def __init__(self, width: int, stride: int | None = None, log: bool = False, name="pool"):
        self.name = name
        self.width = width
        self.stride = stride or width
        self.log = log
        self._x = None

    def params(self):
        return []

    def forward(self, x, training=False):
        if training:
            self._x = x
        if self.log:
            return log_mean_pool_forward(x, self.width, self.stride)
        return mean_pool_forward(x, self.width, self.stride)

    def backward(self, grad_y):
        if self.log:
            return log_mean_pool_backward(grad_y, self._x, self.width, self.stride)
        return mean_pool_backward(grad_y, self._x.shape, self.width, self.stride)


class Flatten:
    def __init__(self, name="flatten"):
        self.name = name
        self._shape = None

    def params(self):
        return []

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_y):
        return grad_y.reshape(self._shape)


# --------------------------------------------------------------------------
# Container
# --------------------------------------------------------------------------


@dataclass
class Sequential:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        # the first layer's input gradient is never used
        if self.layers and hasattr(self.layers[0], "need_input_grad"):
            self.layers[0].need_input_grad = False

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    @property
    def classifier(self):
        return self.layers[-1]

    def check_invariants(self) -> None:
        for layer in self.layers:
            if isinstance(layer, FrozenDense):
                layer.check_invariants()

"""Forward and backward passes for every layer type in the two network
architectures: grouped 2-D convolution, overlapping max pooling, fully
connected, ReLU, inverted dropout, and SoftMax with its cross-entropy
training loss.

Layers operate on batched ``[N, C, H, W]`` (or ``[N, K]``) arrays; a
single image ``[C, H, W]`` is promoted to a batch of one.  Each layer
caches what its backward pass needs, so one layer instance serves one
worker at a time.  Convolution runs as im2col + matrix product; the naive
direct-summation form lives in the test suite as an independent oracle.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ShapeError, StateError
from .rng import RngStream
from .tensor import DEFAULT_DTYPE, random_normal


def conv_output_size(extent: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent: floor((e + 2p - k) / s) + 1.  Raises if the kernel
    does not fit in the padded input."""
    if kernel > extent + 2 * padding:
        raise ShapeError(
            f"kernel {kernel} larger than padded input extent {extent + 2 * padding}"
        )
    return (extent + 2 * padding - kernel) // stride + 1


class Param:
    """A named parameter tensor and its current gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


def _promote(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim != rank:
        raise ShapeError(f"expected rank {rank} (or {rank - 1}) input, got rank {x.ndim}")
    return x, False


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather sliding windows of a padded [N, C, H, W] array into
    [N, C, kh, kw, oh, ow]."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols


class Conv2d:
    """Grouped 2-D convolution with per-output-channel bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: tuple[int, int],
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        dtype=DEFAULT_DTYPE,
        rng: RngStream | None = None,
        name: str = "conv",
    ):
        if stride < 1 or padding < 0:
            raise ConfigError(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
        if groups < 1 or in_channels % groups or out_channels % groups:
            raise ConfigError(
                f"groups={groups} must divide in_channels={in_channels} "
                f"and out_channels={out_channels}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kh, self.kw = kernel
        self.stride = stride
        self.padding = padding
        self.groups = groups
        fan_in = (in_channels // groups) * self.kh * self.kw
        shape = (out_channels, in_channels // groups, self.kh, self.kw)
        if rng is None:
            weights = np.zeros(shape, dtype=dtype)
        else:
            weights = random_normal(shape, 0.0, np.sqrt(2.0 / fan_in), rng, dtype=dtype)
        self.weights = Param(f"{name}.weights", weights)
        self.biases = Param(f"{name}.biases", np.zeros(out_channels, dtype=dtype))
        self.params = [self.weights, self.biases]
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x, squeeze = _promote(x, 4)
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {c}")
        oh = conv_output_size(h, self.kh, self.stride, self.padding)
        ow = conv_output_size(w, self.kw, self.stride, self.padding)
        if self.padding:
            p = self.padding
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        else:
            xp = x
        cols = _im2col(xp, self.kh, self.kw, self.stride, oh, ow)
        g = self.groups
        cg = self.in_channels // g
        og = self.out_channels // g
        k = cg * self.kh * self.kw
        cols_g = cols.reshape(n, g, k, oh * ow)
        w_g = self.weights.value.reshape(g, og, k)
        out = np.matmul(w_g[None], cols_g)  # [n, g, og, oh*ow]
        out = out.reshape(n, self.out_channels, oh, ow)
        out += self.biases.value[None, :, None, None]
        self._cache = (xp, x.shape, oh, ow, squeeze)
        return out[0] if squeeze else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("conv backward called before forward")
        xp, x_shape, oh, ow, squeeze = self._cache
        grad_out, _ = _promote(grad_out, 4)
        n = x_shape[0]
        if grad_out.shape != (n, self.out_channels, oh, ow):
            raise ShapeError(
                f"grad shape {grad_out.shape} != forward output {(n, self.out_channels, oh, ow)}"
            )
        g = self.groups
        cg = self.in_channels // g
        og = self.out_channels // g
        k = cg * self.kh * self.kw

        self.biases.grad[...] = grad_out.sum(axis=(0, 2, 3))

        # Recompute the column view rather than caching it: the padded input
        # is far smaller than its unfolded columns.
        cols_g = _im2col(xp, self.kh, self.kw, self.stride, oh, ow).reshape(n, g, k, oh * ow)
        go = grad_out.reshape(n, g, og, oh * ow)
        gw = np.matmul(go, cols_g.transpose(0, 1, 3, 2)).sum(axis=0)  # [g, og, k]
        self.weights.grad[...] = gw.reshape(self.weights.value.shape)

        w_g = self.weights.value.reshape(g, og, k)
        grad_cols = np.matmul(w_g.transpose(0, 2, 1)[None], go)  # [n, g, k, oh*ow]
        grad_cols = grad_cols.reshape(n, self.in_channels, self.kh, self.kw, oh, ow)
        grad_xp = np.zeros_like(xp)
        s = self.stride
        for i in range(self.kh):
            for j in range(self.kw):
                grad_xp[:, :, i : i + s * oh : s, j : j + s * ow : s] += grad_cols[:, :, i, j]
        if self.padding:
            p = self.padding
            grad_x = grad_xp[:, :, p:-p, p:-p]
        else:
            grad_x = grad_xp
        return grad_x[0] if squeeze else grad_x


class MaxPool2d:
    """Max pooling; gradient flows only to each window's winner.

    Ties are broken toward the lowest row-major flat index of the window.
    """

    def __init__(self, window: tuple[int, int], stride: int):
        self.wh, self.ww = window
        self.stride = stride
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x, squeeze = _promote(x, 4)
        n, c, h, w = x.shape
        oh = conv_output_size(h, self.wh, self.stride, 0)
        ow = conv_output_size(w, self.ww, self.stride, 0)
        win = _im2col(x, self.wh, self.ww, self.stride, oh, ow)
        win = win.reshape(n, c, self.wh * self.ww, oh, ow)
        arg = win.argmax(axis=2)
        out = np.take_along_axis(win, arg[:, :, None], axis=2)[:, :, 0]
        self._cache = (x.shape, arg, oh, ow, squeeze)
        return out[0] if squeeze else out

    @property
    def argmax_mask(self) -> np.ndarray | None:
        """Winner positions of the last forward pass, as flat window indices."""
        return None if self._cache is None else self._cache[1]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("pool backward called before forward")
        x_shape, arg, oh, ow, squeeze = self._cache
        grad_out, _ = _promote(grad_out, 4)
        grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
        s = self.stride
        for k in range(self.wh * self.ww):
            i, j = divmod(k, self.ww)
            sel = grad_out * (arg == k)
            grad_x[:, :, i : i + s * oh : s, j : j + s * ow : s] += sel
        return grad_x[0] if squeeze else grad_x


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x, squeeze = _promote(x, 4)
        self._shape = (x.shape, squeeze)
        out = x.reshape(x.shape[0], -1)
        return out[0] if squeeze else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._shape is None:
            raise StateError("flatten backward called before forward")
        shape, squeeze = self._shape
        grad = np.asarray(grad_out).reshape(shape)
        return grad[0] if squeeze else grad


class Dense:
    """Fully connected layer: out = x @ weights.T + biases."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        dtype=DEFAULT_DTYPE,
        rng: RngStream | None = None,
        name: str = "fc",
    ):
        self.in_features = in_features
        self.out_features = out_features
        shape = (out_features, in_features)
        if rng is None:
            weights = np.zeros(shape, dtype=dtype)
        else:
            weights = random_normal(shape, 0.0, np.sqrt(2.0 / in_features), rng, dtype=dtype)
        self.weights = Param(f"{name}.weights", weights)
        self.biases = Param(f"{name}.biases", np.zeros(out_features, dtype=dtype))
        self.params = [self.weights, self.biases]
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x, squeeze = _promote(x, 2)
        if x.shape[1] != self.in_features:
            raise ShapeError(f"expected {self.in_features} input features, got {x.shape[1]}")
        self._cache = (x, squeeze)
        out = x @ self.weights.value.T + self.biases.value
        return out[0] if squeeze else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("dense backward called before forward")
        x, squeeze = self._cache
        grad_out, _ = _promote(grad_out, 2)
        self.weights.grad[...] = grad_out.T @ x
        self.biases.grad[...] = grad_out.sum(axis=0)
        grad_x = grad_out @ self.weights.value
        return grad_x[0] if squeeze else grad_x


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x)
        self._mask = x > 0  # gradient at exactly 0 is defined as 0
        return np.where(self._mask, x, 0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise StateError("relu backward called before forward")
        return np.asarray(grad_out) * self._mask


class Dropout:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time,
    inference is an identity map."""

    def __init__(self, rate: float, rng: RngStream | None = None):
        if not 0 <= rate < 1:
            raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x)
        if not train or self.rate == 0:
            self._mask = None
            return x
        if self.rng is None:
            raise StateError("train-mode dropout requires an rng stream")
        keep = self.rng.generator.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_out = np.asarray(grad_out)
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """SoftMax of a logit vector, computed with max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if np.isnan(logits).any():
        raise InvalidArgumentError("softmax received NaN logits")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, true_class: int) -> tuple[float, np.ndarray]:
    """Loss -log softmax(logits)[true] and its gradient wrt the logits.

    The loss is evaluated in log-sum-exp form so it stays finite even for
    heavily saturated logits.
    """
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ShapeError(f"expected a logit vector, got rank {logits.ndim}")
    m = logits.shape[0]
    if not 0 <= int(true_class) < m:
        raise InvalidArgumentError(f"class index {true_class} out of range [0, {m})")
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise InvalidArgumentError("cross entropy received NaN logits")
    zmax = z.max()
    loss = np.log(np.exp(z - zmax).sum()) + zmax - z[int(true_class)]
    grad = softmax(logits)
    grad[int(true_class)] -= 1.0
    return float(loss), grad.astype(logits.dtype if logits.dtype.kind == "f" else np.float64)


def softmax_cross_entropy_batch(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean loss over a batch and the batch-averaged logit gradient."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.intp)
    n, m = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= m:
        raise InvalidArgumentError("class index out of range")
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise InvalidArgumentError("cross entropy received NaN logits")
    rows = np.arange(n)
    zmax = z.max(axis=1)
    lse = np.log(np.exp(z - zmax[:, None]).sum(axis=1)) + zmax
    loss = float((lse - z[rows, labels]).mean())
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype if logits.dtype.kind == "f" else np.float64)

"""Instantiate a trainable network from a declarative topology."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    Param,
    ReLU,
    softmax,
)
from .rng import RngStream
from .tensor import DEFAULT_DTYPE
from .topology import NetworkTopology, infer_shapes


class Network:
    """A linear stack of layer instances with shared forward/backward.

    Weights are drawn at construction from per-layer streams derived from
    ``rng``, so the same (topology, dtype, seed) always yields the same
    network.  The final softmax is not part of the stack: training couples
    it with the loss, inference applies it in :meth:`predict_proba`.
    """

    def __init__(self, topology: NetworkTopology, dtype=DEFAULT_DTYPE,
                 rng: RngStream | None = None):
        rng = rng or RngStream(0)
        self.topology = topology
        self.dtype = dtype
        shapes = infer_shapes(topology)  # also validates the chain
        self.layers = []
        current = tuple(topology.input_shape)
        for i, (spec, out_shape) in enumerate(zip(topology.layers, shapes)):
            if spec.kind == "conv":
                self.layers.append(Conv2d(
                    current[0], spec.out_channels, spec.kernel, spec.stride,
                    spec.padding, spec.groups, dtype=dtype,
                    rng=rng.derive(f"layer{i}.weights"), name=f"layer{i}",
                ))
            elif spec.kind == "pool":
                self.layers.append(MaxPool2d(spec.window, spec.stride))
            else:
                if len(current) != 1:
                    self.layers.append(Flatten())
                self.layers.append(Dense(int(np.prod(current)), spec.units, dtype=dtype,
                                         rng=rng.derive(f"layer{i}.weights"), name=f"layer{i}"))
            if spec.activation in ("relu", "relu+dropout"):
                self.layers.append(ReLU())
            if spec.activation == "relu+dropout":
                self.layers.append(Dropout(spec.dropout_rate, rng.derive(f"layer{i}.dropout")))
            current = out_shape
        self.params: list[Param] = [p for layer in self.layers
                                    for p in getattr(layer, "params", [])]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def _as_batch(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 3:  # [N, H, W] grayscale
            images = images[:, None]
        if images.ndim != 4:
            raise ShapeError(f"expected [N, H, W] or [N, C, H, W] images, got {images.shape}")
        x = images.astype(self.dtype)
        x -= self.dtype(self.topology.mean_offset)
        return x

    def predict_logits(self, images: np.ndarray, chunk: int = 128) -> np.ndarray:
        """Inference logits with the training mean offset applied."""
        x = self._as_batch(images)
        outs = [self.forward(x[i : i + chunk], train=False) for i in range(0, len(x), chunk)]
        return np.concatenate(outs, axis=0)

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return softmax(self.predict_logits(images))

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.predict_logits(images).argmax(axis=1)

"""Mini-batch SGD with momentum, weight decay and a step learning-rate
schedule.

Update rule, with decay folded into the gradient:

    v <- momentum * v - lr(iter) * (grad + weight_decay * w)
    w <- w + v

``lr(iter) = learning_rate * gamma ** floor(iter / step_size)``.  "Iteration"
always means one mini-batch step; gradients are batch-averaged so the
learning rate is insensitive to batch size.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, StateError
from .layers import softmax_cross_entropy_batch
from .network import Network
from .rng import RngStream


@dataclass(frozen=True)
class SgdConfig:
    batch_size: int
    iterations: int
    learning_rate: float
    momentum: float
    gamma: float
    step_size: int
    weight_decay: float
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgumentError("batch size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidArgumentError("momentum must be in [0, 1)")
        if not 0 < self.gamma <= 1:
            raise InvalidArgumentError("gamma must be in (0, 1]")
        if self.step_size < 1:
            raise InvalidArgumentError("step size must be >= 1")
        if self.weight_decay < 0:
            raise InvalidArgumentError("weight decay must be >= 0")
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be >= 0")

    def updated(self, **kwargs) -> "SgdConfig":
        return replace(self, **kwargs)


# Shipped defaults for full-scale training of each architecture; the small
# variant is the reduced regime used on small databases.
CAFFENET_SGD = SgdConfig(batch_size=256, iterations=2000, learning_rate=0.01,
                         momentum=0.9, gamma=0.1, step_size=500, weight_decay=0.001)
PROPOSED_SGD = SgdConfig(batch_size=128, iterations=4000, learning_rate=0.01,
                         momentum=0.9, gamma=0.1, step_size=1000, weight_decay=0.0005)
PROPOSED_SGD_SMALL = PROPOSED_SGD.updated(iterations=1300, step_size=220)

DEFAULT_CONFIGS = {"caffenet": CAFFENET_SGD, "proposed": PROPOSED_SGD}


def lr_at(config: SgdConfig, iteration: int) -> float:
    """Learning rate of the step schedule at a given iteration."""
    if iteration < 0:
        raise InvalidArgumentError("iteration must be >= 0")
    return config.learning_rate * config.gamma ** (iteration // config.step_size)


class OptimizerState:
    """Per-parameter velocity tensors and the iteration counter."""

    def __init__(self, params):
        self.velocities = [np.zeros_like(p) for p in params]
        self.iteration = 0


def sgd_step(params, grads, state: OptimizerState, config: SgdConfig) -> None:
    """One in-place momentum update over parallel lists of arrays."""
    if not (len(params) == len(grads) == len(state.velocities)):
        raise StateError("params, grads and velocities are not aligned")
    lr = lr_at(config, state.iteration)
    for w, g, v in zip(params, grads, state.velocities):
        if w.shape != g.shape or w.shape != v.shape:
            raise StateError(f"shape mismatch in update: {w.shape} vs {g.shape} vs {v.shape}")
        v *= config.momentum
        v -= lr * (g + config.weight_decay * w)
        w += v
    state.iteration += 1


def train(network: Network, images: np.ndarray, labels: np.ndarray,
          config: SgdConfig, rng: RngStream) -> np.ndarray:
    """Run ``config.iterations`` mini-batch steps and return the loss trace.

    Batches come from shuffled cyclic sampling (reshuffle on exhaustion);
    the topology's mean offset is applied to every batch.  Fully
    deterministic given the network, data and rng.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.intp)
    n = len(images)
    if n == 0:
        raise InvalidArgumentError("training set is empty")
    if len(labels) != n:
        raise InvalidArgumentError("images and labels differ in length")
    batch = min(config.batch_size, n)
    shuffle = rng.derive("shuffle").generator
    params = [p.value for p in network.params]
    state = OptimizerState(params)
    losses = np.empty(config.iterations, dtype=np.float64)
    order = shuffle.permutation(n)
    pos = 0
    for it in range(config.iterations):
        if pos + batch > n:
            order = shuffle.permutation(n)
            pos = 0
        idx = order[pos : pos + batch]
        pos += batch
        x = network._as_batch(images[idx])
        logits = network.forward(x, train=True)
        loss, grad = softmax_cross_entropy_batch(logits, labels[idx])
        network.backward(grad.astype(network.dtype))
        sgd_step(params, [p.grad for p in network.params], state, config)
        losses[it] = loss
    return losses


def write_loss_trace(path, losses, config: SgdConfig) -> None:
    """Export a loss trace as CSV: iteration, learning rate, loss."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "learning_rate", "loss"])
        for it, loss in enumerate(losses):
            writer.writerow([it, f"{lr_at(config, it):.10g}", f"{loss:.10g}"])

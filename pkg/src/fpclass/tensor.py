"""Dense tensor primitives.

Tensors are plain C-contiguous (row-major) ``numpy.ndarray`` values; this
module provides the validated constructors and shape-checked products the
rest of the engine is written against.  Two element precisions are
supported: ``float32`` (training default) and ``float64`` (used by the
gradient-check suites).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .rng import RngStream

DEFAULT_DTYPE = np.float32


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    """Validate a tensor shape: non-empty, all extents >= 1."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("tensor shape must have at least one extent")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def new_filled(shape: Sequence[int], value: float, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Tensor of the given shape with every element equal to ``value``."""
    return np.full(check_shape(shape), value, dtype=dtype)


def random_normal(
    shape: Sequence[int],
    mean: float,
    stddev: float,
    rng: RngStream,
    dtype=DEFAULT_DTYPE,
) -> np.ndarray:
    """Tensor with elements drawn from Normal(mean, stddev) using ``rng``.

    Deterministic per (seed, stream id); ``stddev == 0`` yields a constant
    tensor equal to ``mean``.
    """
    shape = check_shape(shape)
    if stddev < 0:
        raise InvalidArgumentError(f"stddev must be >= 0, got {stddev}")
    # Draw in float64 then cast so float32/float64 runs see the same values.
    out = rng.generator.normal(loc=mean, scale=stddev, size=shape)
    return out.astype(dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors with inner-extent checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 tensors, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents do not match: {a.shape} x {b.shape}")
    return a @ b


def flat_offset(index: Sequence[int], shape: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index."""
    shape = tuple(shape)
    if len(index) != len(shape):
        raise ShapeError(f"index rank {len(index)} != shape rank {len(shape)}")
    offset = 0
    stride = 1
    for i, s in zip(reversed(index), reversed(shape)):
        if not 0 <= i < s:
            raise ShapeError(f"index {tuple(index)} out of bounds for shape {shape}")
        offset += i * stride
        stride *= s
    return offset


def multi_index(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`flat_offset`."""
    shape = tuple(shape)
    index = []
    for s in reversed(shape):
        index.append(offset % s)
        offset //= s
    if offset != 0:
        raise ShapeError("offset out of bounds")
    return tuple(reversed(index))

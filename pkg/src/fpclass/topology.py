"""Declarative network topologies.

A :class:`NetworkTopology` is an ordered stack of :class:`LayerSpec`
entries plus the grayscale input shape and the training-set mean offset.
Builders produce the two reference architectures, optionally narrowed by
a uniform width scale so desk-scale variants can train on a CPU.  The
canonical text form (one ``kind;geometry;stride;groups;activation`` line
per layer, preceded by an ``input`` line) round-trips through
:func:`parse_topology` and is embedded in model checkpoints.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .classes import N_CLASSES
from .errors import InvalidArgumentError, ShapeError, TopologyError
from .layers import conv_output_size

DEFAULT_INPUT_SHAPE = (1, 227, 227)
DEFAULT_DROPOUT_RATE = 0.5

ACTIVATIONS = ("none", "relu", "relu+dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | pool | fc
    activation: str = "none"
    # conv fields
    kernel: tuple[int, int] | None = None
    out_channels: int | None = None
    stride: int | None = None
    padding: int | None = None
    groups: int | None = None
    # pool fields (window + stride)
    window: tuple[int, int] | None = None
    # fc fields
    units: int | None = None
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("conv", "pool", "fc"):
            raise InvalidArgumentError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")
        if self.kind == "conv" and None in (self.kernel, self.out_channels, self.stride,
                                            self.padding, self.groups):
            raise InvalidArgumentError("conv layer requires kernel/channels/stride/padding/groups")
        if self.kind == "pool" and (self.window is None or self.stride is None):
            raise InvalidArgumentError("pool layer requires window and stride")
        if self.kind == "fc" and self.units is None:
            raise InvalidArgumentError("fc layer requires a unit count")
        if self.activation == "relu+dropout" and not 0 < self.dropout_rate < 1:
            raise InvalidArgumentError("relu+dropout requires a dropout rate in (0, 1)")

    def describe(self) -> str:
        if self.kind == "conv":
            return f"conv {self.kernel[0]}x{self.kernel[1]}x{self.out_channels}"
        if self.kind == "pool":
            return f"pool {self.window[0]}x{self.window[1]}"
        return f"fc {self.units}"


def conv_spec(kernel: int, out_channels: int, stride: int, padding: int, groups: int = 1,
              activation: str = "relu") -> LayerSpec:
    return LayerSpec(kind="conv", kernel=(kernel, kernel), out_channels=out_channels,
                     stride=stride, padding=padding, groups=groups, activation=activation)


def pool_spec(window: int, stride: int) -> LayerSpec:
    return LayerSpec(kind="pool", window=(window, window), stride=stride)


def fc_spec(units: int, activation: str, dropout_rate: float = 0.0) -> LayerSpec:
    return LayerSpec(kind="fc", units=units, activation=activation, dropout_rate=dropout_rate)


@dataclass(frozen=True)
class NetworkTopology:
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[LayerSpec, ...]
    mean_offset: float = 0.0

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(s < 1 for s in self.input_shape):
            raise InvalidArgumentError(f"bad input shape {self.input_shape}")
        if not self.layers:
            raise InvalidArgumentError("topology has no layers")
        last = self.layers[-1]
        if last.kind != "fc" or last.activation != "softmax" or last.units != N_CLASSES:
            raise InvalidArgumentError(
                f"final layer must be a softmax fc with {N_CLASSES} units"
            )
        if not math.isfinite(self.mean_offset):
            raise InvalidArgumentError("mean offset must be finite")

    def with_mean_offset(self, offset: float) -> "NetworkTopology":
        return replace(self, mean_offset=float(offset))


def _round_width(count: int, scale: float, multiple: int) -> int:
    scaled = int(round(count * scale / multiple)) * multiple
    return max(scaled, multiple)


def _scaled_stack(rows, scale: float, dropout_rate: float) -> tuple[LayerSpec, ...]:
    """Scale conv channel / fc unit counts (never the final class layer).

    Widths are rounded to a multiple of both the layer's own group count
    and the group count of the next convolution, so grouped layers stay
    divisible at every scale.
    """
    if not 0 < scale <= 1:
        raise InvalidArgumentError(f"scale must be in (0, 1], got {scale}")
    # group count of the next conv layer, per row
    next_groups = [1] * len(rows)
    upcoming = 1
    for i in range(len(rows) - 1, -1, -1):
        next_groups[i] = upcoming
        if rows[i][0] == "conv":
            upcoming = rows[i][5]
    specs = []
    for row, ng in zip(rows, next_groups):
        kind = row[0]
        if kind == "conv":
            _, k, c, s, p, g, act = row
            width = _round_width(c, scale, math.lcm(g, ng))
            specs.append(conv_spec(k, width, s, p, g, act))
        elif kind == "pool":
            _, w, s = row
            specs.append(pool_spec(w, s))
        else:
            _, units, act = row
            if act == "softmax":
                specs.append(fc_spec(units, act))  # class layer is never scaled
            else:
                width = _round_width(units, scale, math.lcm(1, ng))
                specs.append(fc_spec(width, act, dropout_rate))
    return tuple(specs)


# Paddings are the canonical companions of each kernel size: 0 for 11x11,
# 2 for 5x5, 1 for 3x3; they make the 227x227 chain end at 6x6 features.
_CAFFENET_ROWS = (
    ("conv", 11, 96, 4, 0, 1, "relu"),
    ("pool", 3, 2),
    ("conv", 5, 256, 1, 2, 2, "relu"),
    ("pool", 3, 2),
    ("conv", 3, 384, 1, 1, 1, "relu"),
    ("conv", 3, 384, 1, 1, 2, "relu"),
    ("conv", 3, 256, 1, 1, 2, "relu"),
    ("pool", 3, 2),
    ("fc", 4096, "relu+dropout"),
    ("fc", 512, "relu+dropout"),
    ("fc", N_CLASSES, "softmax"),
)

_PROPOSED_ROWS = (
    ("conv", 11, 48, 4, 0, 1, "relu"),
    ("pool", 3, 2),
    ("conv", 5, 128, 1, 2, 2, "relu"),
    ("pool", 3, 2),
    ("conv", 3, 192, 1, 1, 1, "relu"),
    ("conv", 3, 128, 1, 1, 2, "relu"),
    ("pool", 3, 2),
    ("fc", 2096, "relu+dropout"),
    ("fc", 256, "relu+dropout"),
    ("fc", N_CLASSES, "softmax"),
)


def build_caffenet_variant(
    scale: float = 1.0,
    input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
) -> NetworkTopology:
    """The wide reference architecture (11 layers)."""
    return NetworkTopology(tuple(input_shape), _scaled_stack(_CAFFENET_ROWS, scale, dropout_rate))


def build_proposed(
    scale: float = 1.0,
    input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
) -> NetworkTopology:
    """The narrower architecture (10 layers) tuned for this problem."""
    return NetworkTopology(tuple(input_shape), _scaled_stack(_PROPOSED_ROWS, scale, dropout_rate))


BUILDERS = {"caffenet": build_caffenet_variant, "proposed": build_proposed}


def infer_shapes(topology: NetworkTopology) -> list[tuple[int, ...]]:
    """Per-layer output shapes; raises :class:`TopologyError` naming the
    first layer whose kernel or window no longer fits."""
    shapes: list[tuple[int, ...]] = []
    current: tuple[int, ...] = tuple(topology.input_shape)
    for i, spec in enumerate(topology.layers):
        label = f"layer {i} ({spec.describe()})"
        if spec.kind in ("conv", "pool") and len(current) != 3:
            raise TopologyError(f"{label}: expects a spatial input, got {current}")
        try:
            if spec.kind == "conv":
                c, h, w = current
                if c % spec.groups:
                    raise TopologyError(
                        f"{label}: {spec.groups} groups do not divide {c} input channels"
                    )
                oh = conv_output_size(h, spec.kernel[0], spec.stride, spec.padding)
                ow = conv_output_size(w, spec.kernel[1], spec.stride, spec.padding)
                current = (spec.out_channels, oh, ow)
            elif spec.kind == "pool":
                c, h, w = current
                oh = conv_output_size(h, spec.window[0], spec.stride, 0)
                ow = conv_output_size(w, spec.window[1], spec.stride, 0)
                current = (c, oh, ow)
            else:
                current = (spec.units,)
        except ShapeError as exc:
            raise TopologyError(f"{label}: {exc}") from exc
        shapes.append(current)
    return shapes


def flattened_input_size(topology: NetworkTopology) -> int:
    return int(np.prod(topology.input_shape))


def param_count(topology: NetworkTopology) -> tuple[list[int], int]:
    """Parameter count per layer and in total (weights plus biases)."""
    counts = []
    current = tuple(topology.input_shape)
    for spec, shape in zip(topology.layers, infer_shapes(topology)):
        if spec.kind == "conv":
            kh, kw = spec.kernel
            c_in = current[0]
            counts.append((kh * kw * c_in // spec.groups) * spec.out_channels + spec.out_channels)
        elif spec.kind == "fc":
            n_in = int(np.prod(current))
            counts.append(n_in * spec.units + spec.units)
        else:
            counts.append(0)
        current = shape
    return counts, sum(counts)


def compute_mean_offset(images) -> float:
    """Scalar mean over all pixels of all training images."""
    if isinstance(images, np.ndarray):
        if images.size == 0:
            raise InvalidArgumentError("cannot compute mean offset of an empty image set")
        return float(np.mean(images, dtype=np.float64))
    total = 0.0
    count = 0
    for img in images:
        arr = np.asarray(img, dtype=np.float64)
        total += arr.sum()
        count += arr.size
    if count == 0:
        raise InvalidArgumentError("cannot compute mean offset of an empty image set")
    return total / count


def fit_image(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a grayscale image to (height, width).

    This is the single place where input fitting happens, so the method
    can be swapped without touching callers.  Aspect ratio is not
    preserved; the distortion is uniform per dataset.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3 and image.shape[0] == 1:
        return fit_image(image[0], size)[None]
    h, w = image.shape
    th, tw = size
    if (h, w) == (th, tw):
        return image.copy()
    # half-pixel-center coordinate mapping
    rows = (np.arange(th) + 0.5) * h / th - 0.5
    cols = (np.arange(tw) + 0.5) * w / tw - 0.5
    grid = np.meshgrid(np.clip(rows, 0, h - 1), np.clip(cols, 0, w - 1), indexing="ij")
    return ndimage.map_coordinates(image, grid, order=1, mode="nearest")


_GEOM_CONV = re.compile(r"^(\d+)x(\d+)x(\d+)p(\d+)$")


def topology_to_text(topology: NetworkTopology) -> str:
    """Canonical text form, one line per layer."""
    c, h, w = topology.input_shape
    lines = [f"input;{c}x{h}x{w};-;-;-"]
    for spec in topology.layers:
        if spec.kind == "conv":
            geom = f"{spec.kernel[0]}x{spec.kernel[1]}x{spec.out_channels}p{spec.padding}"
            lines.append(f"conv;{geom};{spec.stride};{spec.groups};{spec.activation}")
        elif spec.kind == "pool":
            geom = f"{spec.window[0]}x{spec.window[1]}"
            lines.append(f"pool;{geom};{spec.stride};-;-")
        else:
            act = spec.activation
            if act == "relu+dropout":
                act = f"relu+dropout:{spec.dropout_rate:g}"
            lines.append(f"fc;{spec.units};-;-;{act}")
    return "\n".join(lines) + "\n"


def parse_topology(text: str, mean_offset: float = 0.0) -> NetworkTopology:
    """Inverse of :func:`topology_to_text`."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("input;"):
        raise InvalidArgumentError("topology text must start with an input line")
    fields = lines[0].split(";")
    c, h, w = (int(v) for v in fields[1].split("x"))
    specs = []
    for ln in lines[1:]:
        parts = ln.split(";")
        if len(parts) != 5:
            raise InvalidArgumentError(f"malformed topology line: {ln!r}")
        kind, geom, stride, groups, act = parts
        if kind == "conv":
            m = _GEOM_CONV.match(geom)
            if not m:
                raise InvalidArgumentError(f"malformed conv geometry: {geom!r}")
            kh, kw, ch, pad = (int(g) for g in m.groups())
            specs.append(LayerSpec(kind="conv", kernel=(kh, kw), out_channels=ch,
                                   stride=int(stride), padding=pad, groups=int(groups),
                                   activation=act))
        elif kind == "pool":
            wh, ww = (int(v) for v in geom.split("x"))
            specs.append(LayerSpec(kind="pool", window=(wh, ww), stride=int(stride)))
        elif kind == "fc":
            rate = 0.0
            if act.startswith("relu+dropout"):
                act, _, rate_s = act.partition(":")
                act = "relu+dropout"
                rate = float(rate_s) if rate_s else DEFAULT_DROPOUT_RATE
            specs.append(LayerSpec(kind="fc", units=int(geom), activation=act,
                                   dropout_rate=rate))
        else:
            raise InvalidArgumentError(f"unknown layer kind in topology text: {kind!r}")
    return NetworkTopology((c, h, w), tuple(specs), float(mean_offset))

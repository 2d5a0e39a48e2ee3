"""Deterministic synthetic fingerprint-like image generation.

Each finger gets a class-specific orientation field built from a zero-pole
model: a smooth background flow plus +1/2-index cores and -1/2-index
deltas, which makes the Henry class of every image exact by construction.
Ridges are rendered by iteratively filtering seeded white noise with
oriented band-pass kernels aligned to the local field.  Multiple
impressions of a finger are perturbed captures of its master image, with
perturbation magnitudes set by a quality preset.

All randomness is drawn from per-finger streams derived from the dataset
seed, so generation is reproducible and independent of iteration order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.fft import irfft2, rfft2

from .classes import NATURAL_FREQUENCIES, N_CLASSES, HenryClass
from .errors import InvalidArgumentError
from .rng import RngStream

# Reference geometry: full-scale images are 384x288 (rows x cols); the
# desk-scale preset used by tests is 128x96.
FULL_SIZE = (384, 288)
DESK_SIZE = (128, 96)
BACKGROUND = 255.0  # white scanner background

# Ridge spatial frequency in cycles/pixel, chosen so the ridge period is
# ~9 px at full scale and scales with the image.
FULL_FREQUENCY = 1.0 / 9.0


def default_frequency(size: tuple[int, int]) -> float:
    scale = math.sqrt((size[0] * size[1]) / (FULL_SIZE[0] * FULL_SIZE[1]))
    return min(0.45, FULL_FREQUENCY / scale)


@dataclass(frozen=True)
class SingularPoint:
    x: float  # unit-square coordinates, x right, y down
    y: float
    kind: str  # "core" | "delta"


@dataclass(frozen=True)
class ClassTemplate:
    henry_class: HenryClass
    points: tuple[SingularPoint, ...]
    base_angle: float = 0.0  # background ridge direction
    bend: float = 0.0  # smooth singularity-free arch bend amplitude

    @property
    def cores(self) -> tuple[SingularPoint, ...]:
        return tuple(p for p in self.points if p.kind == "core")

    @property
    def deltas(self) -> tuple[SingularPoint, ...]:
        return tuple(p for p in self.points if p.kind == "delta")


def _pt(kind: str, x: float, y: float) -> SingularPoint:
    return SingularPoint(x=x, y=y, kind=kind)


# Canonical singular-point layouts.  Left and right loops are mirrored in
# both delta placement and background flow; the tented arch uses a small
# core-delta separation so it genuinely overlaps with the loops.
CLASS_TEMPLATES: dict[HenryClass, ClassTemplate] = {
    HenryClass.ARCH: ClassTemplate(HenryClass.ARCH, (), base_angle=0.0, bend=0.9),
    HenryClass.LEFT_LOOP: ClassTemplate(
        HenryClass.LEFT_LOOP,
        (_pt("core", 0.44, 0.40), _pt("delta", 0.68, 0.66)),
        base_angle=0.35,
    ),
    HenryClass.RIGHT_LOOP: ClassTemplate(
        HenryClass.RIGHT_LOOP,
        (_pt("core", 0.56, 0.40), _pt("delta", 0.32, 0.66)),
        base_angle=-0.35,
    ),
    HenryClass.TENTED_ARCH: ClassTemplate(
        HenryClass.TENTED_ARCH,
        (_pt("core", 0.50, 0.44), _pt("delta", 0.52, 0.64)),
        base_angle=0.0,
    ),
    HenryClass.WHORL: ClassTemplate(
        HenryClass.WHORL,
        (_pt("core", 0.46, 0.40), _pt("core", 0.54, 0.56),
         _pt("delta", 0.26, 0.68), _pt("delta", 0.74, 0.68)),
        base_angle=0.0,
    ),
}


@dataclass(frozen=True)
class QualityPreset:
    """Perturbation magnitudes applied to impressions of a master image.

    Translation and blob radii are expressed in pixels at full scale
    (384x288) and are rescaled for other image sizes.
    """

    name: str
    translation: float  # +- pixels, drawn uniformly
    rotation: float  # +- degrees
    noise_sigma: float  # additive Gaussian, gray levels
    blob_count: int  # elliptical occlusions per impression
    blob_radius: float  # mean blob semi-axis, pixels
    contrast_jitter: float  # +- relative contrast change

    def scaled_to(self, size: tuple[int, int]) -> "QualityPreset":
        s = math.sqrt((size[0] * size[1]) / (FULL_SIZE[0] * FULL_SIZE[1]))
        return replace(self, translation=self.translation * s,
                       blob_radius=max(1.0, self.blob_radius * s))


# Magnitudes are componentwise monotone HQ <= Default <= VQ.
QUALITY_PRESETS = {
    "hq": QualityPreset("hq", translation=2.0, rotation=3.0, noise_sigma=4.0,
                        blob_count=0, blob_radius=8.0, contrast_jitter=0.0),
    "default": QualityPreset("default", translation=6.0, rotation=8.0, noise_sigma=10.0,
                             blob_count=2, blob_radius=10.0, contrast_jitter=0.10),
    "vq": QualityPreset("vq", translation=12.0, rotation=15.0, noise_sigma=20.0,
                        blob_count=5, blob_radius=12.0, contrast_jitter=0.30),
}


@dataclass
class FingerprintRecord:
    finger_id: int
    impression_id: int
    henry_class: HenryClass
    quality: str
    image: np.ndarray  # [1, H, W] uint8 grayscale


@dataclass
class FingerprintDataset:
    records: list[FingerprintRecord]
    image_size: tuple[int, int]
    quality: str
    seed: int
    # Jittered per-finger templates (generation ground truth); None for
    # datasets loaded from disk.
    ground_truth: dict[int, ClassTemplate] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def images(self) -> np.ndarray:
        return np.stack([r.image[0] for r in self.records])

    def labels(self) -> np.ndarray:
        return np.array([int(r.henry_class) for r in self.records])

    def finger_ids(self) -> np.ndarray:
        return np.array([r.finger_id for r in self.records])


def orientation_field(template: ClassTemplate, size: tuple[int, int]) -> np.ndarray:
    """Ridge orientation angles in [0, pi) on an (H, W) grid.

    theta(z) = theta_bg + 1/2 sum_cores arg(z - z_c)
                        - 1/2 sum_deltas arg(z - z_d)   (mod pi)
    """
    h, w = size
    for p in template.points:
        if not (0 <= p.x <= 1 and 0 <= p.y <= 1):
            raise InvalidArgumentError(f"singular point outside unit square: {p}")
    ys, xs = np.mgrid[0:h, 0:w]
    z = (xs + 0.5) / w + 1j * (ys + 0.5) / h
    theta = np.full((h, w), float(template.base_angle))
    if template.bend:
        # smooth arch-like bow: opposite tilt left/right of center,
        # strongest along a horizontal band
        band = np.exp(-(((ys + 0.5) / h - 0.55) * 2.2) ** 2)
        theta = theta - template.bend * ((xs + 0.5) / w - 0.5) * band
    for p in template.points:
        zp = complex(p.x, p.y)
        contribution = 0.5 * np.angle(z - zp)
        theta = theta + (contribution if p.kind == "core" else -contribution)
    return np.mod(theta, np.pi)


_N_ORIENT_BINS = 12
_RENDER_ITERATIONS = 24


def _oriented_kernels(frequency: float, dtype=np.float64) -> list[np.ndarray]:
    """Band-pass kernels, one per orientation bin, normalized so an ideal
    stripe pattern of matching orientation and frequency is a fixed point."""
    radius = max(2, int(round(1.25 / frequency)))
    ys, xs = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(dtype)
    env = np.exp(-(xs**2 + ys**2) / (2 * (0.55 / frequency) ** 2))
    kernels = []
    for b in range(_N_ORIENT_BINS):
        phi = b * np.pi / _N_ORIENT_BINS
        phase = 2 * np.pi * frequency * (-xs * np.sin(phi) + ys * np.cos(phi))
        k = env * np.cos(phase)
        k -= k.mean()  # zero DC so the iteration cannot drift to a constant
        gain = float((k * np.cos(phase)).sum())
        kernels.append(k / gain)
    return kernels


def _fft_kernels(kernels, shape):
    padded = []
    for k in kernels:
        radius = k.shape[0] // 2
        kp = np.zeros(shape)
        kp[: k.shape[0], : k.shape[1]] = k
        kp = np.roll(kp, (-radius, -radius), axis=(0, 1))
        padded.append(rfft2(kp))
    return padded


def _orientation_masks(orientation: np.ndarray) -> np.ndarray:
    """Soft per-pixel weights over the orientation bins, pi-periodic."""
    bins = np.arange(_N_ORIENT_BINS) * np.pi / _N_ORIENT_BINS
    # distance in doubled-angle space
    diff = np.cos(2 * (orientation[None] - bins[:, None, None]))
    nearest = diff.argmax(axis=0)
    masks = np.stack([(nearest == b).astype(np.float64) for b in range(_N_ORIENT_BINS)])
    masks = np.stack([ndimage.gaussian_filter(m, sigma=2.0) for m in masks])
    total = masks.sum(axis=0)
    return masks / np.where(total > 0, total, 1.0)


def render_ridges(orientation: np.ndarray, frequency: float, rng: RngStream) -> np.ndarray:
    """Render a striped ridge pattern following an orientation field.

    Starts from seeded white noise and repeatedly applies oriented
    filtering (a fixed number of iterations) with soft clipping, then maps
    the soft-binarized result to grayscale 0..255 (ridges dark).
    """
    if not 0 < frequency < 0.5:
        raise InvalidArgumentError(f"ridge frequency must be in (0, 0.5), got {frequency}")
    orientation = np.asarray(orientation, dtype=np.float64)
    h, w = orientation.shape
    masks = _orientation_masks(orientation)
    kernel_ffts = _fft_kernels(_oriented_kernels(frequency), (h, w))
    img = rng.generator.uniform(-1.0, 1.0, size=(h, w))
    for _ in range(_RENDER_ITERATIONS):
        spectrum = rfft2(img)
        acc = np.zeros((h, w))
        for mask, kf in zip(masks, kernel_ffts):
            acc += mask * irfft2(spectrum * kf, s=(h, w))
        img = np.clip(acc, -1.0, 1.0)
    img /= max(np.abs(img).max(), 1e-12)
    soft = np.tanh(2.5 * img) / np.tanh(2.5)
    gray = (1.0 - soft) * 127.5
    return np.clip(gray, 0.0, 255.0)[None]


def _ellipse_mask(size: tuple[int, int]) -> np.ndarray:
    """Soft foreground mask of the fingerprint area (1 inside, 0 outside)."""
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    r = (((xs + 0.5) / w - 0.5) / 0.46) ** 2 + (((ys + 0.5) / h - 0.5) / 0.47) ** 2
    edge = 3.0 / min(h, w)
    return np.clip((1.0 - r) / edge + 0.5, 0.0, 1.0)


def jitter_template(template: ClassTemplate, rng: RngStream) -> ClassTemplate:
    """Per-finger variation of singular-point positions and background flow."""
    gen = rng.generator
    points = tuple(
        replace(p,
                x=float(np.clip(p.x + gen.uniform(-0.04, 0.04), 0.05, 0.95)),
                y=float(np.clip(p.y + gen.uniform(-0.04, 0.04), 0.05, 0.95)))
        for p in template.points
    )
    return replace(template,
                   points=points,
                   base_angle=template.base_angle + gen.uniform(-0.12, 0.12),
                   bend=template.bend * gen.uniform(0.8, 1.2) if template.bend else 0.0)


def make_master(template: ClassTemplate, size: tuple[int, int],
                frequency: float, rng: RngStream) -> np.ndarray:
    """Render a finger's master image: ridges inside an elliptical
    foreground, white background outside."""
    field = orientation_field(template, size)
    ridges = render_ridges(field, frequency, rng.derive("render"))[0]
    mask = _ellipse_mask(size)
    return (ridges * mask + BACKGROUND * (1.0 - mask))[None]


def make_impression(master: np.ndarray, preset: QualityPreset, rng: RngStream) -> np.ndarray:
    """One perturbed capture of a master image.

    Applies, with magnitudes drawn uniformly from the preset ranges:
    translation, rotation about the image center, additive Gaussian noise,
    elliptical blob occlusions, and contrast jitter; pads with the
    background gray.
    """
    gen = rng.generator
    img = np.asarray(master, dtype=np.float64)[0]
    h, w = img.shape
    dy, dx = gen.uniform(-preset.translation, preset.translation, size=2)
    angle = gen.uniform(-preset.rotation, preset.rotation)
    if dy or dx:
        img = ndimage.shift(img, (dy, dx), order=1, mode="constant", cval=BACKGROUND)
    if angle:
        img = ndimage.rotate(img, angle, reshape=False, order=1,
                             mode="constant", cval=BACKGROUND)
    if preset.noise_sigma:
        img = img + gen.normal(0.0, preset.noise_sigma, size=img.shape)
    for _ in range(preset.blob_count):
        cy = gen.uniform(0.15 * h, 0.85 * h)
        cx = gen.uniform(0.15 * w, 0.85 * w)
        ry = gen.uniform(0.5, 1.5) * preset.blob_radius
        rx = gen.uniform(0.5, 1.5) * preset.blob_radius
        level = gen.uniform(120.0, 220.0)
        ys, xs = np.mgrid[0:h, 0:w]
        blob = (((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2) <= 1.0
        img = np.where(blob, level, img)
    if preset.contrast_jitter:
        c = gen.uniform(-preset.contrast_jitter, preset.contrast_jitter)
        img = img.mean() + (1.0 + c) * (img - img.mean())
    return np.clip(img, 0.0, 255.0)[None]


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp and round a float image to uint8 gray levels."""
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def sample_class(seed: int, finger_id: int, distribution: str = "natural") -> HenryClass:
    """Class of one finger; depends only on (seed, finger id)."""
    gen = RngStream(seed).derive(f"finger{finger_id}").derive("class").generator
    if distribution == "natural":
        probs = NATURAL_FREQUENCIES
    elif distribution == "uniform":
        probs = np.full(N_CLASSES, 1.0 / N_CLASSES)
    else:
        raise InvalidArgumentError(f"unknown class distribution {distribution!r}")
    return HenryClass(int(gen.choice(N_CLASSES, p=probs)))


def sample_classes(n: int, distribution: str = "natural", seed: int = 0) -> list[HenryClass]:
    return [sample_class(seed, fid, distribution) for fid in range(n)]


def generate_finger(seed: int, finger_id: int, henry_class: HenryClass,
                    size: tuple[int, int], frequency: float) -> tuple[np.ndarray, ClassTemplate]:
    """Master image and jittered template of one finger."""
    rng = RngStream(seed).derive(f"finger{finger_id}")
    template = jitter_template(CLASS_TEMPLATES[henry_class], rng.derive("template"))
    freq = frequency * float(rng.derive("frequency").generator.uniform(0.92, 1.08))
    master = make_master(template, size, freq, rng.derive("master"))
    return master, template


def worker_count() -> int:
    """Worker cap for parallel generation; FPCLASS_THREADS overrides."""
    env = os.environ.get("FPCLASS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgumentError(f"FPCLASS_THREADS must be an integer, got {env!r}")
    return max(1, os.cpu_count() or 1)


def generate_dataset(
    n_fingers: int,
    impressions: int = 4,
    preset: str | QualityPreset = "hq",
    distribution: str = "natural",
    seed: int = 0,
    size: tuple[int, int] = FULL_SIZE,
    frequency: float | None = None,
) -> FingerprintDataset:
    """Generate `n_fingers` fingers with `impressions` captures each.

    Deterministic per seed; per-finger RNG streams make the result
    independent of generation order and worker scheduling.
    """
    if n_fingers < 1 or impressions < 1:
        raise InvalidArgumentError("need at least one finger and one impression")
    if isinstance(preset, str):
        preset_obj = QUALITY_PRESETS[preset.lower()].scaled_to(size)
    else:
        preset_obj = preset
    freq = default_frequency(size) if frequency is None else frequency

    def build(finger_id: int):
        henry_class = sample_class(seed, finger_id, distribution)
        master, template = generate_finger(seed, finger_id, henry_class, size, freq)
        rng = RngStream(seed).derive(f"finger{finger_id}")
        records = [
            FingerprintRecord(
                finger_id=finger_id,
                impression_id=j + 1,
                henry_class=henry_class,
                quality=preset_obj.name,
                image=quantize(make_impression(master, preset_obj,
                                               rng.derive(f"impression{j + 1}"))),
            )
            for j in range(impressions)
        ]
        return finger_id, template, records

    workers = min(worker_count(), n_fingers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(build, range(n_fingers)))
    else:
        built = [build(fid) for fid in range(n_fingers)]

    records: list[FingerprintRecord] = []
    ground_truth: dict[int, ClassTemplate] = {}
    for finger_id, template, recs in sorted(built, key=lambda t: t[0]):
        ground_truth[finger_id] = template
        records.extend(recs)
    return FingerprintDataset(records=records, image_size=tuple(size),
                              quality=preset_obj.name, seed=seed,
                              ground_truth=ground_truth)

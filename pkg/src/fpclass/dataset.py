"""Dataset directory I/O: a manifest.csv plus one binary PGM per impression.

Manifest schema (header included):
    finger_id,impression_id,class,quality,path
with classes serialized as A/L/R/T/W and paths relative to the manifest.
The manifest is the single source of truth for labels; image headers are
never trusted.
"""

from __future__ import annotations

import csv
import hashlib
import os
from pathlib import Path

import numpy as np

from .classes import HenryClass
from .errors import ManifestError
from .synthgen import FingerprintDataset, FingerprintRecord

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ["finger_id", "impression_id", "class", "quality", "path"]


def write_pgm(path, image: np.ndarray) -> None:
    """Write a [H, W] or [1, H, W] uint8 image as binary (P5) PGM."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = img[0]
    img = img.astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM into a [H, W] uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ManifestError(f"{path}: not a binary PGM file")
    # header: magic, width, height, maxval, then a single whitespace byte
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ManifestError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=pos)
    if pixels.size != h * w:
        raise ManifestError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).copy()


def record_filename(record: FingerprintRecord) -> str:
    return f"images/f{record.finger_id:05d}_i{record.impression_id}.pgm"


def write_dataset(dataset: FingerprintDataset, out_dir) -> Path:
    """Write manifest.csv and one PGM per impression under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    with open(out / MANIFEST_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for rec in dataset.records:
            rel = record_filename(rec)
            write_pgm(out / rel, rec.image)
            writer.writerow([rec.finger_id, rec.impression_id,
                             rec.henry_class.code, rec.quality, rel])
    return out


def read_dataset(directory) -> FingerprintDataset:
    """Load a dataset directory written by :func:`write_dataset`."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise ManifestError(f"no {MANIFEST_NAME} in {directory}")
    records: list[FingerprintRecord] = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_FIELDS:
            raise ManifestError(f"{manifest} line 1: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ManifestError(f"{manifest} line {lineno}: expected "
                                    f"{len(MANIFEST_FIELDS)} fields, got {len(row)}")
            try:
                finger_id = int(row[0])
                impression_id = int(row[1])
                henry_class = HenryClass.from_code(row[2])
            except ValueError as exc:
                raise ManifestError(f"{manifest} line {lineno}: {exc}") from exc
            image = read_pgm(directory / row[4])
            records.append(FingerprintRecord(finger_id, impression_id,
                                             henry_class, row[3], image[None]))
    if not records:
        raise ManifestError(f"{manifest}: no records")
    sizes = {rec.image.shape[1:] for rec in records}
    if len(sizes) != 1:
        raise ManifestError(f"{manifest}: mixed image sizes {sorted(sizes)}")
    quality = records[0].quality
    return FingerprintDataset(records=records, image_size=next(iter(sizes)),
                              quality=quality, seed=-1, ground_truth=None)


def dataset_digest(directory) -> str:
    """SHA-256 digest over the manifest and all images, for reproducibility
    checks and checkpoint metadata."""
    directory = Path(directory)
    digest = hashlib.sha256()
    manifest = directory / MANIFEST_NAME
    digest.update(manifest.read_bytes())
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                digest.update((directory / row[4]).read_bytes())
    return digest.hexdigest()


def split_by_finger(dataset: FingerprintDataset, test_fraction: float,
                    seed: int) -> tuple[list[FingerprintRecord], list[FingerprintRecord]]:
    """Hold out a fraction of fingers (all their impressions together)."""
    fingers = sorted({r.finger_id for r in dataset.records})
    gen = np.random.Generator(np.random.Philox(key=seed))
    order = gen.permutation(len(fingers))
    n_test = max(1, int(round(test_fraction * len(fingers))))
    test_ids = {fingers[i] for i in order[:n_test]}
    train = [r for r in dataset.records if r.finger_id not in test_ids]
    test = [r for r in dataset.records if r.finger_id in test_ids]
    return train, test


def records_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into ([N, H, W] float32 images, [N] int labels)."""
    images = np.stack([r.image[0] for r in records]).astype(np.float32)
    labels = np.array([int(r.henry_class) for r in records])
    return images, labels

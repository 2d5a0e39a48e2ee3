"""The five Henry fingerprint classes and their natural frequencies."""

from __future__ import annotations

import enum

import numpy as np


class HenryClass(enum.IntEnum):
    ARCH = 0
    LEFT_LOOP = 1
    RIGHT_LOOP = 2
    TENTED_ARCH = 3
    WHORL = 4

    @property
    def code(self) -> str:
        return CLASS_CODES[self.value]

    @classmethod
    def from_code(cls, code: str) -> "HenryClass":
        try:
            return cls(CLASS_CODES.index(code.strip().upper()))
        except ValueError:
            raise ValueError(f"unknown class code {code!r}, expected one of {CLASS_CODES}")


# Class order used everywhere: (A, L, R, T, W).
CLASS_CODES = ("A", "L", "R", "T", "W")
N_CLASSES = len(CLASS_CODES)

# Real-world (natural) frequencies of the five classes.
NATURAL_FREQUENCIES = np.array([0.037, 0.338, 0.317, 0.029, 0.279])

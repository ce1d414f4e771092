"""Bit-level view of IEEE-style floating point words.

Everything downstream (codecs, packing, fault injection) works on unsigned
bit patterns; this module is the only place that converts between Python
floats and those patterns.  Bit 0 is the least significant mantissa bit and
bit ``total_bits - 1`` is the sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FloatLayout:
    """Field widths of a binary floating point format, sign first."""

    sign_bits: int
    exp_bits: int
    mantissa_bits: int
    total_bits: int

    def __post_init__(self):
        if self.sign_bits != 1:
            raise ValueError("layout needs exactly one sign bit")
        if self.sign_bits + self.exp_bits + self.mantissa_bits != self.total_bits:
            raise ValueError("field widths must sum to total_bits")

    @property
    def exp_bias(self) -> int:
        return (1 << (self.exp_bits - 1)) - 1

    @property
    def smallest_normal(self) -> float:
        return 2.0 ** (1 - self.exp_bias)

    @property
    def word_mask(self) -> int:
        return (1 << self.total_bits) - 1


FP32 = FloatLayout(sign_bits=1, exp_bits=8, mantissa_bits=23, total_bits=32)
FP16 = FloatLayout(sign_bits=1, exp_bits=5, mantissa_bits=10, total_bits=16)

LAYOUTS = {"fp32": FP32, "fp16": FP16}

# numpy scalar/array dtypes for the float value and the raw pattern of each layout
_FLOAT_DTYPES = {FP32: np.float32, FP16: np.float16}
_UINT_DTYPES = {FP32: np.uint32, FP16: np.uint16}


def layout_key(layout: FloatLayout) -> str:
    for name, lay in LAYOUTS.items():
        if lay == layout:
            return name
    raise ValueError(f"unregistered layout {layout!r}")


def float_dtype(layout: FloatLayout):
    return _FLOAT_DTYPES[layout]


def uint_dtype(layout: FloatLayout):
    return _UINT_DTYPES[layout]


@dataclass(frozen=True)
class Word:
    """An unsigned bit pattern tied to a layout.  Immutable."""

    bits: int
    layout: FloatLayout

    def __post_init__(self):
        if not 0 <= self.bits <= self.layout.word_mask:
            raise ValueError(f"pattern 0x{self.bits:x} out of range for layout")

    def bit(self, i: int) -> int:
        if not 0 <= i < self.layout.total_bits:
            raise IndexError(f"bit index {i} out of range")
        return (self.bits >> i) & 1


def to_bits(value: float, layout: FloatLayout) -> Word:
    """Round a real value to the layout (ties to even, overflow to +-inf)."""
    if layout not in _FLOAT_DTYPES:
        raise ValueError("unsupported layout")
    with np.errstate(over="ignore"):
        scalar = _FLOAT_DTYPES[layout](value)
    return Word(int(scalar.view(_UINT_DTYPES[layout])), layout)


def from_bits(w: Word) -> float:
    """Decode a pattern to a Python float; NaN patterns come back as nan."""
    scalar = _UINT_DTYPES[w.layout](w.bits).view(_FLOAT_DTYPES[w.layout])
    return float(scalar)


def flip_bit(w: Word, i: int) -> Word:
    if not 0 <= i < w.layout.total_bits:
        raise IndexError(f"bit index {i} out of range for {w.layout.total_bits}-bit word")
    return Word(w.bits ^ (1 << i), w.layout)


def extract_fields(w: Word) -> tuple[int, int, int]:
    """Return (sign, exponent, mantissa) as unsigned ints."""
    lay = w.layout
    mantissa = w.bits & ((1 << lay.mantissa_bits) - 1)
    exponent = (w.bits >> lay.mantissa_bits) & ((1 << lay.exp_bits) - 1)
    sign = (w.bits >> (lay.total_bits - 1)) & 1
    return sign, exponent, mantissa


def values_to_patterns(values: np.ndarray, layout: FloatLayout) -> np.ndarray:
    """Vector form of to_bits: any float array -> flat pattern array."""
    with np.errstate(over="ignore"):
        f = np.asarray(values).astype(_FLOAT_DTYPES[layout])
    return f.reshape(-1).view(_UINT_DTYPES[layout])


def patterns_to_values(patterns: np.ndarray, layout: FloatLayout) -> np.ndarray:
    return np.asarray(patterns, dtype=_UINT_DTYPES[layout]).view(_FLOAT_DTYPES[layout])

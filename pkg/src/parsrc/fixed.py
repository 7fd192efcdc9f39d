"""Two's-complement helpers shared by the integer datapaths.

Arrays stay ``int64`` while the working width fits in 64 bits; wider words
fall back to ``object`` arrays of Python ints so wrap semantics remain exact.
"""

from dataclasses import dataclass

import numpy as np


def int_dtype(width):
    return np.int64 if width <= 64 else object


def as_int_array(values, width):
    dtype = int_dtype(width)
    if dtype is object:
        return np.array([int(v) for v in np.asarray(values).ravel()], dtype=object).reshape(
            np.shape(values)
        )
    return np.asarray(values, dtype=np.int64)


def wrap(values, width):
    """Reduce integers modulo 2**width into the signed range."""
    if isinstance(values, (int, np.integer)):
        half = 1 << (width - 1)
        return ((int(values) + half) & ((1 << width) - 1)) - half
    arr = np.asarray(values)
    if arr.dtype != object and width >= 64:
        # int64 arithmetic already wraps modulo 2**64
        return arr
    half = 1 << (width - 1)
    mask = (1 << width) - 1
    if arr.dtype == object:
        return ((arr + half) & mask) - half
    return ((arr + np.int64(half)) & np.int64(mask)) - np.int64(half)


def saturate(values, width):
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    return np.clip(values, lo, hi)


def round_shift(values, shift):
    """Round-half-up division by ``2**shift`` (floor(v / 2**s + 1/2))."""
    if shift <= 0:
        return values << -shift if shift else values
    arr = np.asarray(values)
    if arr.dtype == object:
        return (arr + (1 << (shift - 1))) >> shift
    return (arr + np.int64(1 << (shift - 1))) >> np.int64(shift)


def round_div(values, den):
    """Round-half-up integer division by a positive integer."""
    arr = np.asarray(values)
    if arr.dtype == object:
        q = arr // den
        r = arr - q * den
        return q + (2 * r >= den)
    q = np.floor_divide(arr, den)
    r = arr - q * den
    return q + (2 * r >= den).astype(np.int64)


def fits(values, width):
    arr = np.asarray(values)
    if arr.size == 0:
        return True
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    return int(arr.min()) >= lo and int(arr.max()) <= hi


@dataclass(frozen=True)
class FixedScalar:
    """A single two's-complement sample; arithmetic wraps at ``width`` bits."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        object.__setattr__(self, "value", wrap(int(self.value), self.width))

    def _coerce(self, other):
        if isinstance(other, FixedScalar):
            if other.width != self.width:
                raise ValueError(f"width mismatch: {self.width} vs {other.width}")
            return other.value
        return int(other)

    def __add__(self, other):
        return FixedScalar(self.value + self._coerce(other), self.width)

    __radd__ = __add__

    def __sub__(self, other):
        return FixedScalar(self.value - self._coerce(other), self.width)

    def __rsub__(self, other):
        return FixedScalar(self._coerce(other) - self.value, self.width)

    def __neg__(self):
        return FixedScalar(-self.value, self.width)

    def __int__(self):
        return self.value

    @property
    def min(self):
        return -(1 << (self.width - 1))

    @property
    def max(self):
        return (1 << (self.width - 1)) - 1

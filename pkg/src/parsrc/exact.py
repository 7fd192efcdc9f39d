"""Error-free float transforms used for single-rounding float accumulation.

Both the direct-form FIR and the two-path halfband evaluate their float
outputs as the correctly rounded value of the exact sum of products, which is
the float analogue of "full-precision accumulate, round once".
"""

import math

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_sum(a, b):
    """Return (s, e) with s = fl(a + b) and s + e == a + b exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def two_prod(a, b):
    """Return (p, e) with p = fl(a * b) and p + e == a * b exactly.

    Exact as long as no partial product underflows.
    """
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def fsum_rows(pieces):
    """Correctly rounded sum along the last axis of a 2-D float array."""
    pieces = np.asarray(pieces, dtype=np.float64)
    if pieces.ndim != 2:
        raise ValueError("expected a 2-D array")
    return np.fromiter((math.fsum(row) for row in pieces), dtype=np.float64, count=pieces.shape[0])

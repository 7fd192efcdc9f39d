import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parsrc.exact import fsum_rows, two_prod, two_sum
from parsrc.fixed import FixedScalar, fits, round_div, round_shift, saturate, wrap

widths = st.integers(min_value=2, max_value=70)


class TestWrap:
    @pytest.mark.parametrize("value, width, expected", [
        (127, 8, 127), (128, 8, -128), (-129, 8, 127), (255, 8, -1), (0, 3, 0), (4, 3, -4),
    ])
    def test_scalar(self, value, width, expected):
        assert wrap(value, width) == expected

    @given(st.lists(st.integers(-(2**80), 2**80), min_size=1, max_size=20), widths)
    def test_array_matches_scalar(self, values, width):
        arr = np.array(values, dtype=object)
        got = wrap(arr, width)
        assert [int(v) for v in got] == [wrap(v, width) for v in values]

    def test_int64_path(self):
        arr = np.array([2**15, -(2**15) - 1, 5], dtype=np.int64)
        assert wrap(arr, 16).tolist() == [-(2**15), 2**15 - 1, 5]


class TestFixedScalar:
    @given(st.integers(), st.integers(), st.integers(), widths)
    def test_addition_associative_and_commutative(self, a, b, c, width):
        x, y, z = FixedScalar(a, width), FixedScalar(b, width), FixedScalar(c, width)
        assert (x + y) + z == x + (y + z)
        assert x + y == y + x

    @given(st.integers(), widths)
    def test_value_in_range(self, a, width):
        s = FixedScalar(a, width)
        assert s.min <= s.value <= s.max

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            FixedScalar(1, 8) + FixedScalar(1, 9)

    def test_sub_neg(self):
        assert (FixedScalar(-128, 8) - 1).value == 127
        assert (-FixedScalar(-128, 8)).value == -128
        assert (1 - FixedScalar(3, 8)).value == -2


class TestRounding:
    @given(st.integers(-(2**40), 2**40), st.integers(0, 20))
    def test_round_shift_half_up(self, v, s):
        got = int(round_shift(np.array([v], dtype=np.int64), s)[0])
        # floor(v / 2**s + 1/2) in exact integer arithmetic
        assert got == (2 * v + (1 << s)) // (2 << s)

    @given(st.integers(-(2**60), 2**60), st.integers(1, 10**6))
    def test_round_div(self, v, d):
        expected = (2 * v + d) // (2 * d)
        assert int(round_div(np.array([v], dtype=np.int64), d)[0]) == expected
        assert int(round_div(np.array([v], dtype=object), d)[0]) == expected

    def test_saturate_and_fits(self):
        assert saturate(np.array([40000, -40000, 3]), 16).tolist() == [32767, -32768, 3]
        assert fits(np.array([32767, -32768]), 16)
        assert not fits(np.array([32768]), 16)
        assert fits(np.array([], dtype=np.int64), 4)


finite = st.floats(min_value=-1e100, max_value=1e100, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-100)


class TestExactTransforms:
    @given(finite, finite)
    def test_two_sum_exact(self, a, b):
        from fractions import Fraction

        s, e = two_sum(np.float64(a), np.float64(b))
        assert Fraction(float(s)) + Fraction(float(e)) == Fraction(a) + Fraction(b)

    @given(st.floats(-1e30, 1e30, allow_nan=False), st.floats(-1e30, 1e30, allow_nan=False))
    def test_two_prod_exact(self, a, b):
        from fractions import Fraction

        if a != 0 and b != 0 and abs(a * b) < 1e-250:
            return
        p, e = two_prod(np.float64(a), np.float64(b))
        assert Fraction(float(p)) + Fraction(float(e)) == Fraction(a) * Fraction(b)

    def test_fsum_rows(self):
        rows = np.array([[1e16, 1.0, -1e16], [0.1, 0.2, 0.3]])
        assert fsum_rows(rows).tolist() == [1.0, math.fsum([0.1, 0.2, 0.3])]
        with pytest.raises(ValueError):
            fsum_rows(np.zeros(3))

"""Halfband design, direct and block FIR filtering, and the two-path decimator.

A halfband filter of length 2N+1 has its centre tap at 0.5, zeros at every
even offset from the centre and even symmetry on the odd offsets.  Decimating
by two, the centre tap touches one input phase only and reduces to a delayed
shift (the delay path); all odd-offset taps touch the other phase, where
symmetric pairs are pre-added before their shared coefficient multiply (the
symmetric polyphase path).  That leaves ceil(N/2) multiplies per output
against 2N+1 for the direct form.

Fixed-point filters accumulate full-precision products and round once at the
output.  Float filters do the same: products and pair sums are split with
error-free transforms and summed with ``math.fsum``, so the direct and
two-path forms return the identical correctly rounded value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import kaiser_beta
from scipy.signal.windows import kaiser

from .errors import DesignInfeasible, InvalidFrame, InvalidScaling, MalformedStream
from .exact import fsum_rows, two_prod, two_sum
from .fixed import round_shift, saturate
from .stream import ParallelFrame, ParallelStream, SerialStream

RESPONSE_FLOOR_DB = -300.0
_MEASURE_POINTS = 8192
_CHUNK = 4096


@dataclass(frozen=True)
class HalfbandSpec:
    """Design target.  ``half_order`` N gives 2N+1 taps; None picks the
    smallest odd N whose Kaiser design reaches ``stopband_atten_db``."""

    half_order: Optional[int] = None
    transition_width: float = 0.03
    stopband_atten_db: float = 70.0
    coeff_width: Optional[int] = 16

    def __post_init__(self):
        if self.half_order is not None and self.half_order < 1:
            raise ValueError("half_order must be >= 1")
        if not 0 < self.transition_width < 0.5:
            raise ValueError("transition_width must be in (0, 0.5)")
        if self.stopband_atten_db <= 0:
            raise ValueError("stopband_atten_db must be positive")
        if self.coeff_width is not None and self.coeff_width < 2:
            raise ValueError("coeff_width must be >= 2")

    @classmethod
    def from_order(cls, order: int, **kw) -> "HalfbandSpec":
        if order < 2 or order % 2:
            raise ValueError(f"halfband order must be even and >= 2, got {order}")
        return cls(half_order=order // 2, **kw)

    @property
    def passband_edge(self) -> float:
        return 0.25 - self.transition_width / 2

    @property
    def stopband_edge(self) -> float:
        return 0.25 + self.transition_width / 2

    def to_dict(self):
        return {
            "half_order": self.half_order,
            "transition_width": self.transition_width,
            "stopband_atten_db": self.stopband_atten_db,
            "coeff_width": self.coeff_width,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            half_order=d.get("half_order"),
            transition_width=float(d.get("transition_width", 0.03)),
            stopband_atten_db=float(d.get("stopband_atten_db", 70.0)),
            coeff_width=d.get("coeff_width", 16),
        )


@dataclass(frozen=True)
class HalfbandCoeffs:
    h: np.ndarray
    quantized: Optional[np.ndarray] = None
    coeff_width: Optional[int] = None
    stopband_atten_db: float = float("nan")
    passband_ripple_db: float = float("nan")
    spec: Optional[HalfbandSpec] = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.ndim != 1 or len(h) % 2 == 0:
            raise ValueError("halfband coefficients must be an odd-length vector")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        if self.quantized is not None:
            q = np.asarray(self.quantized, dtype=np.int64)
            q.setflags(write=False)
            object.__setattr__(self, "quantized", q)

    @property
    def half_order(self) -> int:
        return (len(self.h) - 1) // 2

    @property
    def order(self) -> int:
        return len(self.h) - 1

    @property
    def frac_bits(self) -> int:
        if self.coeff_width is None:
            raise InvalidScaling("coefficients have not been quantized")
        return self.coeff_width - 1

    @property
    def pair_offsets(self) -> np.ndarray:
        """Odd offsets from the centre that carry a coefficient: 1, 3, ..."""
        return np.arange(1, self.half_order + 1, 2)

    def pair_coeffs(self, fixed: bool):
        taps = self.taps(fixed)
        return taps[self.half_order - self.pair_offsets]

    def taps(self, fixed: bool):
        if fixed:
            if self.quantized is None:
                raise InvalidScaling("coefficients have not been quantized")
            return self.quantized
        return self.h

    def as_float(self, fixed: bool) -> np.ndarray:
        """Effective real-valued taps used by the given datapath."""
        if fixed:
            return self.taps(True) / float(1 << self.frac_bits)
        return self.h


def check_structure(taps) -> bool:
    """True when centre, zero and symmetry constraints all hold exactly."""
    taps = np.asarray(taps)
    n = (len(taps) - 1) // 2
    offsets = np.arange(len(taps)) - n
    even = (offsets % 2 == 0) & (offsets != 0)
    return bool(np.all(taps[even] == 0) and np.array_equal(taps, taps[::-1]))


# -- responses ---------------------------------------------------------------

def fir_magnitude_response(h, grid) -> np.ndarray:
    """|sum_k h(k) exp(-i 2 pi f k)| in dB on ``grid`` (cycles per sample)."""
    h = np.asarray(h, dtype=np.float64)
    if h.size == 0:
        raise ValueError("empty coefficient vector")
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    k = np.arange(len(h))
    out = np.empty(len(grid))
    for i in range(0, len(grid), _CHUNK):
        f = grid[i : i + _CHUNK]
        mag = np.abs(np.exp(-2j * np.pi * np.outer(f, k)) @ h)
        with np.errstate(divide="ignore"):
            out[i : i + _CHUNK] = 20 * np.log10(mag)
    return np.maximum(out, RESPONSE_FLOOR_DB)


def halfband_amplitude(taps, f) -> np.ndarray:
    """Real zero-phase amplitude A(f) = h(N) + 2 sum_d h(N-d) cos(2 pi f d)."""
    taps = np.asarray(taps, dtype=np.float64)
    n = (len(taps) - 1) // 2
    d = np.arange(1, n + 1)
    side = taps[n - d]
    nz = side != 0
    d, side = d[nz], side[nz]
    f = np.asarray(f, dtype=np.float64)
    flat = f.reshape(-1)
    out = np.empty(flat.shape)
    for i in range(0, len(flat), _CHUNK):
        out[i : i + _CHUNK] = taps[n] + 2 * np.cos(2 * np.pi * np.outer(flat[i : i + _CHUNK], d)) @ side
    return out.reshape(f.shape)


def measure_halfband(taps, spec: HalfbandSpec) -> tuple[float, float]:
    """(stopband attenuation dB, passband ripple dB) against the design's band edges."""
    stop = np.linspace(spec.stopband_edge, 0.5, _MEASURE_POINTS)
    passband = np.linspace(0.0, spec.passband_edge, _MEASURE_POINTS)
    a_stop = np.abs(halfband_amplitude(taps, stop)).max()
    a_pass = np.abs(halfband_amplitude(taps, passband))
    gain = abs(float(halfband_amplitude(taps, 0.0)))
    atten = -20 * np.log10(max(a_stop / gain, 10 ** (RESPONSE_FLOOR_DB / 20)))
    ripple = 20 * np.log10(a_pass.max() / a_pass.min())
    return float(atten), float(ripple)


# -- design ------------------------------------------------------------------

def kaiser_halfband(half_order: int, beta: float) -> np.ndarray:
    """Ideal halfband sinc under a Kaiser window, with the structure forced."""
    n = half_order
    d = np.arange(1, n + 1)
    w = kaiser(2 * n + 1, beta, sym=True)
    side = 0.5 * np.sinc(d / 2) * w[n + d]
    side[d % 2 == 0] = 0.0
    # scale odd taps so they sum to 0.5: unit DC gain and an exact null at f = 0.5
    side *= 0.25 / side.sum()
    h = np.empty(2 * n + 1)
    h[n] = 0.5
    h[n + d] = side
    h[n - d] = side
    return h


def _kaiser_length_estimate(atten_db, transition):
    return int(np.ceil((atten_db - 7.95) / (14.36 * transition))) + 1


@lru_cache(maxsize=64)
def _design_cached(spec: HalfbandSpec) -> HalfbandCoeffs:
    beta = kaiser_beta(spec.stopband_atten_db)
    if spec.half_order is not None:
        h = kaiser_halfband(spec.half_order, beta)
        atten, ripple = measure_halfband(h, spec)
        if atten < spec.stopband_atten_db:
            # report the best any Kaiser beta achieves at this length
            best = minimize_scalar(
                lambda b: -measure_halfband(kaiser_halfband(spec.half_order, b), spec)[0],
                bounds=(0.0, 15.0), method="bounded", options={"xatol": 1e-3},
            )
            h = kaiser_halfband(spec.half_order, best.x)
            atten, ripple = measure_halfband(h, spec)
        if atten < spec.stopband_atten_db:
            raise DesignInfeasible(
                f"half order {spec.half_order} (order {2 * spec.half_order}) reaches "
                f"{atten:.2f} dB at transition width {spec.transition_width}, "
                f"short of {spec.stopband_atten_db} dB",
                achieved_atten_db=atten,
                achieved_ripple_db=ripple,
            )
    else:
        n = max(1, (_kaiser_length_estimate(spec.stopband_atten_db, spec.transition_width) - 1) // 2 - 4)
        n |= 1
        for _ in range(200):
            h = kaiser_halfband(n, beta)
            atten, ripple = measure_halfband(h, spec)
            if atten >= spec.stopband_atten_db:
                break
            n += 2
        else:
            raise DesignInfeasible(
                f"no half order up to {n} reaches {spec.stopband_atten_db} dB",
                achieved_atten_db=atten,
                achieved_ripple_db=ripple,
            )
        spec = replace(spec, half_order=n)
    coeffs = HalfbandCoeffs(h, stopband_atten_db=atten, passband_ripple_db=ripple, spec=spec)
    if spec.coeff_width is not None:
        coeffs = quantize_coeffs(coeffs, spec.coeff_width)
    return coeffs


def design_halfband(spec: HalfbandSpec) -> HalfbandCoeffs:
    """Kaiser-windowed ideal halfband; raises DesignInfeasible below target."""
    return _design_cached(spec)


def quantize_coeffs(c: HalfbandCoeffs, bits: int) -> HalfbandCoeffs:
    """Round-half-up to ``bits``-wide integers with scale 2**(bits-1)."""
    if bits < 2:
        raise InvalidScaling("coefficient width must be >= 2 bits")
    n = c.half_order
    scale = 1 << (bits - 1)
    hi = scale - 1
    side = np.floor(c.h[n + 1 :] * scale + 0.5).astype(np.int64)
    centre = int(np.floor(c.h[n] * scale + 0.5))
    if centre > hi or np.any(np.abs(side) > hi):
        raise InvalidScaling(f"coefficients overflow {bits}-bit range")
    q = np.concatenate([side[::-1], [centre], side])
    return replace(c, quantized=q, coeff_width=bits)


# -- filtering ---------------------------------------------------------------

@dataclass
class FirState:
    """Input history (oldest first) and the absolute-index parity of the
    next input sample, used by decimating filters."""

    history: np.ndarray
    phase: int = 0

    @classmethod
    def initial(cls, length: int, fixed: bool) -> "FirState":
        dtype = np.int64 if fixed else np.float64
        return cls(np.zeros(max(length, 0), dtype=dtype))


@dataclass
class MultiplyCounter:
    multiplies: int = 0
    adds: int = 0
    shifts: int = 0
    outputs: int = 0

    @property
    def multiplies_per_output(self) -> float:
        return self.multiplies / self.outputs if self.outputs else 0.0


def _finish_fixed(acc, frac_bits, width):
    if frac_bits:
        acc = round_shift(acc, frac_bits)
    return saturate(acc, width) if width is not None else acc


def _exact_tap_sum(ext, h, start, count):
    """Correctly rounded sum_k h[k] * ext[start + i - k] for i in range(count)."""
    out = np.empty(count)
    for lo in range(0, count, _CHUNK):
        n = min(_CHUNK, count - lo)
        pieces = []
        for k, hk in enumerate(h):
            if hk == 0:
                continue
            seg = ext[start + lo - k : start + lo - k + n]
            p, e = two_prod(np.full(n, hk), seg)
            pieces += [p, e]
        out[lo : lo + n] = fsum_rows(np.stack(pieces, axis=1)) if pieces else 0.0
    return out


def _taps_for(h, fixed):
    if isinstance(h, HalfbandCoeffs):
        return h.taps(fixed), (h.frac_bits if fixed else 0)
    taps = np.asarray(h)
    if fixed and taps.dtype.kind == "f":
        raise MalformedStream("fixed-point filtering needs integer coefficients")
    return (taps.astype(np.int64) if fixed else taps.astype(np.float64)), 0


def serial_fir(s: SerialStream, h, state: Optional[FirState] = None, frac_bits: Optional[int] = None,
               counter: Optional[MultiplyCounter] = None) -> SerialStream:
    """Direct-form convolution, the reference for every other filter form.

    For fixed streams the full-precision sum is rounded half up by
    ``frac_bits`` (taken from HalfbandCoeffs when given) and saturated to the
    stream width.
    """
    fixed = s.is_fixed
    taps, default_frac = _taps_for(h, fixed)
    frac = default_frac if frac_bits is None else frac_bits
    state = state or FirState.initial(len(taps) - 1, fixed)
    x = np.asarray(s.samples)
    ext = np.concatenate([state.history, x])
    if fixed:
        y = np.convolve(ext, taps, mode="valid") if len(x) else np.zeros(0, np.int64)
        y = _finish_fixed(y, frac, s.width)
    else:
        y = _exact_tap_sum(ext, taps, len(taps) - 1, len(x))
    if counter is not None:
        counter.multiplies += len(taps) * len(x)
        counter.adds += (len(taps) - 1) * len(x)
        counter.outputs += len(x)
    state.history = ext[len(ext) - (len(taps) - 1):] if len(taps) > 1 else ext[:0]
    state.phase = (state.phase + len(x)) % 2
    return s.with_samples(y)


def parallel_fir_block(block, h, state: FirState, fixed: bool, frac_bits=0, width=None):
    """Block FIR over consecutive L-lane frames: lane j of frame t is
    sum_k h(k) x(tL + j - k), with earlier frames supplied by the history."""
    block = np.asarray(block)
    taps = np.asarray(h)
    frames, lanes = block.shape
    k_len = len(taps)
    ext = np.concatenate([state.history, block.reshape(-1)])
    start = k_len - 1
    count = frames * lanes
    if fixed:
        acc = np.zeros(count, dtype=np.int64)
        for k, hk in enumerate(taps):
            if hk:
                acc += int(hk) * ext[start - k : start - k + count]
        out = _finish_fixed(acc, frac_bits, width)
    else:
        out = _exact_tap_sum(ext, taps, start, count)
    state.history = ext[len(ext) - (k_len - 1):] if k_len > 1 else ext[:0]
    return out.reshape(frames, lanes)


def parallel_fir_step(frame: ParallelFrame, h, state: FirState, lanes: Optional[int] = None,
                      width: Optional[int] = None) -> ParallelFrame:
    if lanes is not None and len(frame) != lanes:
        raise InvalidFrame(f"frame has {len(frame)} lanes, expected {lanes}")
    fixed = frame.lanes.dtype.kind in "iu" or frame.lanes.dtype == object
    taps, frac = _taps_for(h, fixed)
    out = parallel_fir_block(frame.lanes[None, :], taps, state, fixed, frac, width)
    return ParallelFrame(out[0], frame.time_index)


class HalfbandDecimator:
    """Streaming two-path halfband decimate-by-2 over a flat sample sequence.

    Keeps input samples whose absolute index is even.  ``process`` accepts
    chunks of any length.
    """

    def __init__(self, coeffs: HalfbandCoeffs, fixed: bool, width: Optional[int] = 16,
                 counter: Optional[MultiplyCounter] = None):
        self.coeffs = coeffs
        self.fixed = fixed
        self.width = width if fixed else None
        self.counter = counter
        n = coeffs.half_order
        self.state = FirState.initial(2 * n, fixed)
        self._pairs = coeffs.pair_coeffs(fixed)
        self._offsets = coeffs.pair_offsets
        if fixed:
            centre = int(coeffs.quantized[n])
            if centre != 1 << (coeffs.frac_bits - 1):
                raise InvalidScaling(f"centre tap {centre} is not 0.5 at scale 2**{coeffs.frac_bits}")
            self._centre_shift = coeffs.frac_bits - 1
        elif coeffs.h[n] != 0.5:
            raise InvalidScaling("centre tap must be exactly 0.5")

    def process(self, x) -> np.ndarray:
        n = self.coeffs.half_order
        x = np.asarray(x, dtype=np.int64 if self.fixed else np.float64)
        xe = np.concatenate([self.state.history, x])
        p0 = (-self.state.phase) % 2
        n_out = len(range(p0, len(x), 2))
        base = n + p0  # xe index of the centre tap for the first output
        # polyphase split of the extended input: the centre tap reads one
        # phase, every odd-offset tap reads the other
        delay_phase = xe[base % 2 :: 2]
        sym_phase = xe[1 - base % 2 :: 2]
        centre = delay_phase[base // 2 : base // 2 + n_out]
        s0 = 1 - base % 2
        if self.fixed:
            acc = centre << np.int64(self._centre_shift)
            for d, hd in zip(self._offsets, self._pairs):
                lo = (base - d - s0) // 2
                hi = (base + d - s0) // 2
                acc = acc + int(hd) * (sym_phase[lo : lo + n_out] + sym_phase[hi : hi + n_out])
            y = _finish_fixed(acc, self.coeffs.frac_bits, self.width)
        else:
            y = self._float_paths(centre, sym_phase, base, s0, n_out)
        if self.counter is not None:
            pairs = len(self._offsets)
            self.counter.multiplies += pairs * n_out
            self.counter.adds += 2 * pairs * n_out
            self.counter.shifts += n_out
            self.counter.outputs += n_out
        keep = 2 * n
        self.state.history = xe[len(xe) - keep :] if keep else xe[:0]
        self.state.phase = (self.state.phase + len(x)) % 2
        return y

    def _float_paths(self, centre, sym_phase, base, s0, n_out):
        y = np.empty(n_out)
        for lo in range(0, n_out, _CHUNK):
            m = min(_CHUNK, n_out - lo)
            pieces = [0.5 * centre[lo : lo + m]]
            for d, hd in zip(self._offsets, self._pairs):
                a0 = (base - d - s0) // 2 + lo
                b0 = (base + d - s0) // 2 + lo
                s, e = two_sum(sym_phase[a0 : a0 + m], sym_phase[b0 : b0 + m])
                coeff = np.full(m, hd)
                p1, e1 = two_prod(coeff, s)
                p2, e2 = two_prod(coeff, e)
                pieces += [p1, e1, p2, e2]
            y[lo : lo + m] = fsum_rows(np.stack(pieces, axis=1))
        return y


def halfband_decimate_two_path(
    stream: Union[SerialStream, ParallelStream],
    coeffs: HalfbandCoeffs,
    state: Optional[HalfbandDecimator] = None,
    counter: Optional[MultiplyCounter] = None,
):
    """Decimate by two; a parallel stream of L lanes becomes L/2 lanes with
    output lane j taken at input phase 2j."""
    fixed = stream.width is not None
    dec = state or HalfbandDecimator(coeffs, fixed, stream.width, counter)
    if isinstance(stream, ParallelStream):
        if stream.lanes % 2:
            raise InvalidFrame(f"two-path decimation needs an even lane count, got {stream.lanes}")
        y = dec.process(stream.data.reshape(-1))
        valid = -(-stream.valid // 2)
        return ParallelStream(y.reshape(-1, stream.lanes // 2), stream.lane_rate_hz, stream.width, valid)
    y = dec.process(stream.samples)
    return stream.with_samples(y, stream.sample_rate_hz / 2)

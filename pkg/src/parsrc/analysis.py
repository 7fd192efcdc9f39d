"""Tone generators, windowed spectra and the multitone / alias-injection
experiments run through the converter at desk-scale rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal.windows import get_window

from .errors import ClipError, InsufficientData
from .pipeline import PASSBAND_FRACTION, SrcConfig, cascade_gain_db, run_src
from .stream import SerialStream, serial_to_parallel

DEFAULT_WINDOW = "blackmanharris"
DESK_INPUT_RATE = 20e6


@dataclass(frozen=True)
class ToneSpec:
    frequency_hz: float
    amplitude: float = 1.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.frequency_hz < 0:
            raise ValueError("tone frequency must be >= 0")


def gen_multitone(tones: Sequence[ToneSpec], rate: float, count: int, width: Optional[int] = None,
                  headroom_db: Optional[float] = None) -> SerialStream:
    """Sum of cosines.  With ``width`` the sum is quantized (round half up) to
    a fixed stream where amplitude 1.0 is full scale; a sum that would clip
    raises ClipError unless ``headroom_db`` asks for rescaling so the actual
    peak sits that many dB below full scale."""
    tones = list(tones)
    if not tones:
        raise ValueError("at least one tone is required")
    for t in tones:
        if t.frequency_hz >= rate / 2:
            raise ValueError(f"tone at {t.frequency_hz} Hz is not below half the rate {rate}")
    x = _tone_sum(tones, rate, count)
    if headroom_db is not None and count:
        x = x * _headroom_scale(x, headroom_db)
    if width is None:
        return SerialStream(x, rate)
    full = 1 << (width - 1)
    q = np.floor(x * full + 0.5)
    if count and (q.max() > full - 1 or q.min() < -full):
        raise ClipError(f"tone sum peaks at {np.abs(x).max():.3f} of full scale; request headroom")
    return SerialStream(q.astype(np.int64), rate, width)


def _tone_sum(tones, rate, count):
    n = np.arange(count)
    x = np.zeros(count)
    for t in tones:
        x += t.amplitude * np.cos(2 * np.pi * (t.frequency_hz / rate) * n + t.phase_rad)
    return x


def _headroom_scale(x, headroom_db):
    return 10 ** (-headroom_db / 20) / np.abs(x).max()


def tone_scale(s: SerialStream) -> float:
    """Multiplier taking the stream's samples to full-scale-relative units."""
    return 1.0 if s.width is None else 2.0 ** -(s.width - 1)


@dataclass
class SpectrumReport:
    freqs: np.ndarray
    power_db: np.ndarray
    window: str
    fft_size: int
    segments: int
    enbw_bins: float
    rate: float
    mean_square: float = field(repr=False, default=float("nan"))

    @property
    def bin_width(self) -> float:
        return self.rate / self.fft_size

    def bin_of(self, freq_hz: float) -> int:
        return int(round(freq_hz / self.bin_width))

    def level_db(self, freq_hz: float) -> float:
        """Reading at the bin nearest ``freq_hz``."""
        return float(self.power_db[self.bin_of(freq_hz)])

    def summed_power(self) -> float:
        """Mean-square power implied by the bins (window noise bandwidth
        removed), comparable with the time-domain mean square."""
        amp2 = 10 ** (self.power_db / 10)
        weights = np.full(len(amp2), 0.5)
        weights[0] = 1.0
        if self.fft_size % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(weights * amp2) / self.enbw_bins)

    def parseval_error_db(self) -> float:
        return float(10 * np.log10(self.summed_power() / self.mean_square))


def spectrum(s: SerialStream, fft_size: Optional[int] = None, window: str = DEFAULT_WINDOW) -> SpectrumReport:
    """Averaged one-sided periodogram over non-overlapping segments, in dBFS.

    The scale is set by the window's coherent gain so a full-scale sine
    centred on a bin reads 0 dB and a DC level c reads 20*log10(|c|).
    """
    n = len(s)
    size = n if fft_size is None else int(fft_size)
    if size < 1 or size > n:
        raise InsufficientData(f"need at least {max(size, 1)} samples, stream has {n}")
    x = np.asarray(s.samples, dtype=np.float64) * tone_scale(s)
    segs = n // size
    x = x[: segs * size].reshape(segs, size)
    w = get_window(window, size, fftbins=True) if window not in ("rect", "boxcar") else np.ones(size)
    gain = w.sum()
    spec = np.fft.rfft(x * w, axis=1)
    amp = np.abs(spec) / gain
    amp[:, 1:] *= 2
    if size % 2 == 0:
        amp[:, -1] /= 2
    power = np.mean(amp**2, axis=0)
    with np.errstate(divide="ignore"):
        db = np.maximum(10 * np.log10(power), -400.0)
    return SpectrumReport(
        freqs=np.fft.rfftfreq(size, 1.0 / s.sample_rate_hz),
        power_db=db,
        window=window,
        fft_size=size,
        segments=segs,
        enbw_bins=float(size * np.sum(w**2) / gain**2),
        rate=s.sample_rate_hz,
        mean_square=float(np.mean(x**2)),
    )


# -- experiments --------------------------------------------------------------

def settle_outputs(cfg: SrcConfig) -> int:
    """Output samples to discard before the chain's impulse response has
    filled, plus a small margin."""
    span = 1
    scale = 1
    for _, dec, obj in cfg.stages():
        if hasattr(obj, "h"):
            length = len(obj.h)
        else:
            length = obj.stages * (obj.decimation * obj.diff_delay - 1) + 1
        span += (length - 1) * scale
        scale *= dec
    return -(-span // cfg.total_factor) + 8


def _run(cfg: SrcConfig, tones, rate, fft_size, headroom_db):
    skip = settle_outputs(cfg)
    count = (skip + fft_size) * cfg.total_factor
    width = cfg.width if cfg.fixed else None
    x = gen_multitone(tones, rate, count, width, headroom_db)
    y = run_src(serial_to_parallel(x, cfg.lanes), cfg)
    out = y.with_samples(y.samples[skip : skip + fft_size])
    scale = 1.0 if headroom_db is None else _headroom_scale(_tone_sum(tones, rate, count), headroom_db)
    return spectrum(out, fft_size), scale


def folded_frequency(freq_hz: float, out_rate: float) -> float:
    f = math.fmod(freq_hz, out_rate)
    return out_rate - f if f > out_rate / 2 else f


@dataclass
class AliasResult:
    rejection_db: float
    predicted_rejection_db: float
    desired_error_db: float
    predicted_desired_db: float
    alias_in_db: float
    alias_out_db: float
    folded_hz: float
    output_rate: float
    spectrum: SpectrumReport = field(repr=False)

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "spectrum"}


def alias_attenuation_experiment(cfg: SrcConfig, desired: ToneSpec, alias: ToneSpec,
                                 rate: float = DESK_INPUT_RATE, fft_size: int = 5000,
                                 headroom_db: Optional[float] = None) -> AliasResult:
    """Two-tone input through ``run_src``; returns alias input level minus
    the level of its folded image at the output."""
    out_rate = rate / cfg.total_factor
    folded = folded_frequency(alias.frequency_hz, out_rate)
    if folded > PASSBAND_FRACTION * out_rate:
        raise ValueError(f"alias folds to {folded} Hz, outside the kept band")
    if cfg.fixed and headroom_db is None:
        headroom_db = 1.0
    spec, scale = _run(cfg, [desired, alias], rate, fft_size, headroom_db)
    alias_in = 20 * math.log10(alias.amplitude * scale)
    desired_in = 20 * math.log10(desired.amplitude * scale)
    alias_out = spec.level_db(folded)
    desired_out = spec.level_db(desired.frequency_hz)
    return AliasResult(
        rejection_db=alias_in - alias_out,
        predicted_rejection_db=-float(cascade_gain_db(cfg, alias.frequency_hz / rate, exact=True)),
        desired_error_db=desired_out - desired_in,
        predicted_desired_db=float(cascade_gain_db(cfg, desired.frequency_hz / rate, exact=True)),
        alias_in_db=alias_in,
        alias_out_db=alias_out,
        folded_hz=folded,
        output_rate=out_rate,
        spectrum=spec,
    )


@dataclass
class MultitoneResult:
    freqs_hz: list
    errors_db: list
    predicted_db: list
    output_rate: float
    spectrum: SpectrumReport = field(repr=False)

    @property
    def worst_error_db(self) -> float:
        return max(abs(e) for e in self.errors_db)

    def summary(self) -> dict:
        return {
            "freqs_hz": self.freqs_hz,
            "errors_db": self.errors_db,
            "predicted_db": self.predicted_db,
            "worst_error_db": self.worst_error_db,
            "output_rate": self.output_rate,
        }


def octave_multitone(scale: float = 1e-3) -> list[ToneSpec]:
    """Eight unit tones at 10, 20, ..., 80 MHz times ``scale`` (desk rates by default)."""
    return [ToneSpec(10e6 * k * scale, 1.0) for k in range(1, 9)]


def multitone_experiment(cfg: SrcConfig, tones: Sequence[ToneSpec], rate: float = DESK_INPUT_RATE,
                         fft_size: int = 5000, headroom_db: Optional[float] = None) -> MultitoneResult:
    """Per-tone level change through the converter (output minus input dB)."""
    tones = list(tones)
    if cfg.fixed and headroom_db is None:
        headroom_db = 1.0
    spec, scale = _run(cfg, tones, rate, fft_size, headroom_db)
    errors, predicted = [], []
    for t in tones:
        errors.append(spec.level_db(t.frequency_hz) - 20 * math.log10(t.amplitude * scale))
        predicted.append(float(cascade_gain_db(cfg, t.frequency_hz / rate, exact=True)))
    return MultitoneResult([t.frequency_hz for t in tones], errors, predicted, rate / cfg.total_factor, spec)

"""Factor planning, the parallel-serial converter, its serial oracle chain and
the composite magnitude response.

The parallel part is fixed: an 80-lane CIC (N=5, R=20, M=1) leaves 4 lanes,
two two-path halfbands take that to 2 and then 1 lane.  The serial part is a
CIC with R in [1, 4000] (R=1 bypasses it) followed by up to three halfbands.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .cic import CicConfig, ParallelCic, cic_magnitude_response, run_serial_cic
from .errors import InvalidLaneCount, MalformedStream, UnsupportedFactor
from .halfband import (
    HalfbandCoeffs,
    HalfbandDecimator,
    HalfbandSpec,
    design_halfband,
    halfband_amplitude,
    halfband_decimate_two_path,
    serial_fir,
)
from .stream import ParallelStream, SerialStream, parallel_to_serial, serial_to_parallel

PARALLEL_CIC_R = 20
PARALLEL_HB_STAGES = 2
PARALLEL_FACTOR = PARALLEL_CIC_R << PARALLEL_HB_STAGES
MAX_SERIAL_R = 4000
MAX_SERIAL_HB = 3
DEFAULT_LANES = 80

# passband kept at each output rate: 8 GHz of bandwidth out of 20 GSPS
PASSBAND_FRACTION = 0.4

# float streams enter the integer CIC datapath scaled by 2**52 and leave it
# scaled by 2**92, which keeps every float result correctly rounded
FLOAT_IN_FRAC = 52
FLOAT_IN_WIDTH = 64
FLOAT_OUT_FRAC = 92
FLOAT_OUT_WIDTH = FLOAT_OUT_FRAC + FLOAT_IN_WIDTH - FLOAT_IN_FRAC


# -- factor plan --------------------------------------------------------------

@dataclass(frozen=True)
class FactorPlan:
    serial_cic_r: int
    serial_halfband_stages: int
    parallel_factor: int = PARALLEL_FACTOR

    def __post_init__(self):
        if not 1 <= self.serial_cic_r <= MAX_SERIAL_R:
            raise ValueError(f"serial CIC ratio must be in [1, {MAX_SERIAL_R}]")
        if not 0 <= self.serial_halfband_stages <= MAX_SERIAL_HB:
            raise ValueError(f"serial halfband stages must be in [0, {MAX_SERIAL_HB}]")

    @property
    def total(self) -> int:
        return self.parallel_factor * self.serial_cic_r << self.serial_halfband_stages

    @property
    def cic_bypassed(self) -> bool:
        return self.serial_cic_r == 1

    def to_dict(self):
        return {
            "total": self.total,
            "parallel_factor": self.parallel_factor,
            "serial_cic_r": self.serial_cic_r,
            "serial_halfband_stages": self.serial_halfband_stages,
        }


def _neighbors(total: int) -> tuple[Optional[int], Optional[int]]:
    lo, hi = None, None
    for h in range(MAX_SERIAL_HB + 1):
        step = PARALLEL_FACTOR << h
        below = min(total // step, MAX_SERIAL_R) * step
        if below >= step and below < total:
            lo = below if lo is None else max(lo, below)
        above = max(-(-total // step), 1) * step
        if above == total:
            above += step
        if above <= MAX_SERIAL_R * step:
            hi = above if hi is None else min(hi, above)
    return lo, hi


def plan_factor(total: int) -> FactorPlan:
    """Split ``total`` as 80 * r * 2**h, taking the largest h that works."""
    if isinstance(total, bool) or not isinstance(total, (int, np.integer)):
        raise UnsupportedFactor(total, _neighbors(int(total)) if float(total).is_integer() else (None, None))
    total = int(total)
    for h in range(MAX_SERIAL_HB, -1, -1):
        r, rem = divmod(total, PARALLEL_FACTOR << h)
        if rem == 0 and 1 <= r <= MAX_SERIAL_R:
            return FactorPlan(r, h)
    raise UnsupportedFactor(total, _neighbors(total))


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class SrcConfig:
    plan: FactorPlan
    kind: str = "fixed"
    lanes: int = DEFAULT_LANES
    cic_stages: int = 5
    diff_delay: int = 1
    width: int = 16
    parallel_hb: HalfbandSpec = field(default_factory=lambda: HalfbandSpec(transition_width=0.03))
    serial_hb: HalfbandSpec = field(default_factory=lambda: HalfbandSpec(transition_width=0.015))

    def __post_init__(self):
        if self.kind not in ("fixed", "float"):
            raise ValueError(f"kind must be 'fixed' or 'float', got {self.kind!r}")
        if self.lanes < 1 or self.lanes % PARALLEL_FACTOR:
            raise InvalidLaneCount(f"lane count must be a positive multiple of {PARALLEL_FACTOR}, got {self.lanes}")

    @classmethod
    def for_factor(cls, total: int, **kw) -> "SrcConfig":
        return cls(plan_factor(total), **kw)

    @property
    def fixed(self) -> bool:
        return self.kind == "fixed"

    @property
    def total_factor(self) -> int:
        return self.plan.total

    def _cic(self, r):
        if self.fixed:
            return CicConfig(self.cic_stages, r, self.diff_delay, self.width, self.width)
        return CicConfig(self.cic_stages, r, self.diff_delay, FLOAT_IN_WIDTH, FLOAT_OUT_WIDTH)

    @property
    def parallel_cic(self) -> CicConfig:
        return self._cic(PARALLEL_CIC_R)

    @property
    def serial_cic(self) -> Optional[CicConfig]:
        return None if self.plan.cic_bypassed else self._cic(self.plan.serial_cic_r)

    @property
    def parallel_hb_coeffs(self) -> list[HalfbandCoeffs]:
        c = design_halfband(self.parallel_hb)
        return [c] * PARALLEL_HB_STAGES

    @property
    def serial_hb_coeffs(self) -> list[HalfbandCoeffs]:
        if not self.plan.serial_halfband_stages:
            return []
        return [design_halfband(self.serial_hb)] * self.plan.serial_halfband_stages

    def stages(self):
        """(label, decimation, response object) in signal order."""
        out = [("parallel_cic", PARALLEL_CIC_R, self.parallel_cic)]
        out += [(f"parallel_hb{i + 1}", 2, c) for i, c in enumerate(self.parallel_hb_coeffs)]
        if self.serial_cic is not None:
            out.append(("serial_cic", self.plan.serial_cic_r, self.serial_cic))
        out += [(f"serial_hb{i + 1}", 2, c) for i, c in enumerate(self.serial_hb_coeffs)]
        return out

    def to_dict(self):
        return {
            "factor": self.total_factor,
            "plan": self.plan.to_dict(),
            "kind": self.kind,
            "lanes": self.lanes,
            "cic_stages": self.cic_stages,
            "diff_delay": self.diff_delay,
            "width": self.width,
            "parallel_hb": self.parallel_hb.to_dict(),
            "serial_hb": self.serial_hb.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d) -> "SrcConfig":
        plan = plan_factor(int(d["factor"]))
        kw = {}
        for key in ("kind", "lanes", "cic_stages", "diff_delay", "width"):
            if key in d:
                kw[key] = d[key]
        if "parallel_hb" in d:
            kw["parallel_hb"] = HalfbandSpec.from_dict(d["parallel_hb"])
        if "serial_hb" in d:
            kw["serial_hb"] = HalfbandSpec.from_dict(d["serial_hb"])
        return cls(plan, **kw)

    @classmethod
    def from_json(cls, text: str) -> "SrcConfig":
        return cls.from_dict(json.loads(text))


# -- float <-> wide integer ---------------------------------------------------

def float_to_wide(x) -> np.ndarray:
    """Scale by 2**52 and round to Python integers for the exact CIC path."""
    x = np.asarray(x, dtype=np.float64)
    limit = 2.0 ** (FLOAT_IN_WIDTH - FLOAT_IN_FRAC - 1)
    if x.size and not np.all(np.abs(x) < limit):
        raise MalformedStream(f"float samples must be finite with magnitude below {limit}")
    scaled = np.floor(x * 2.0**FLOAT_IN_FRAC + 0.5)
    out = np.empty(x.shape, dtype=object)
    out.flat[:] = [int(v) for v in scaled.flat]
    return out


def wide_to_float(y) -> np.ndarray:
    y = np.asarray(y, dtype=object)
    out = np.empty(y.shape)
    out.flat[:] = [math.ldexp(float(v), -FLOAT_OUT_FRAC) for v in y.flat]
    return out


# -- converter ----------------------------------------------------------------

def _cic_stage(p: ParallelStream, cic: CicConfig, fixed: bool) -> ParallelStream:
    engine = ParallelCic(cic, p.lanes)
    data = p.data if fixed else float_to_wide(p.data)
    body = engine.process(data)
    tail, _ = engine.flush()
    out = np.concatenate([body, tail]) if len(tail) else body
    valid = -(-p.valid // cic.decimation)
    out = out[: -(-valid // engine.out_lanes)]
    if not fixed:
        return ParallelStream(wide_to_float(out), p.aggregate_rate_hz / cic.decimation / engine.out_lanes,
                              None, valid)
    return ParallelStream(out, p.aggregate_rate_hz / cic.decimation / engine.out_lanes, cic.output_width, valid)


def _check_input(p, cfg: SrcConfig):
    if p.lanes != cfg.lanes:
        raise InvalidLaneCount(f"input has {p.lanes} lanes, configuration expects {cfg.lanes}")
    if cfg.fixed and p.width != cfg.width:
        raise MalformedStream(f"expected a {cfg.width}-bit fixed stream, got width {p.width}")
    if not cfg.fixed and p.width is not None:
        raise MalformedStream("float configuration needs a float stream")


def run_src(p: ParallelStream, cfg: SrcConfig) -> SerialStream:
    """Parallel CIC and halfbands on the lane bus, then the serial stages."""
    _check_input(p, cfg)
    fixed = cfg.fixed
    x = _cic_stage(p, cfg.parallel_cic, fixed)
    for c in cfg.parallel_hb_coeffs:
        x = halfband_decimate_two_path(x, c)
    s = parallel_to_serial(x)
    if cfg.serial_cic is not None:
        s = parallel_to_serial(_cic_stage(serial_to_parallel(s, 1), cfg.serial_cic, fixed))
    for c in cfg.serial_hb_coeffs:
        s = halfband_decimate_two_path(s, c)
    return s


def _serial_cic_oracle(s: SerialStream, cic: CicConfig, fixed: bool) -> SerialStream:
    if fixed:
        return run_serial_cic(s, cic)
    wide = SerialStream(float_to_wide(s.samples), s.sample_rate_hz, cic.input_width)
    y = run_serial_cic(wide, cic)
    return SerialStream(wide_to_float(y.samples), y.sample_rate_hz)


def run_serial_reference(s: SerialStream, cfg: SrcConfig) -> SerialStream:
    """All-serial oracle chain: per-sample CIC, direct-form FIR, keep evens."""
    fixed = cfg.fixed

    def hb(x, c):
        return x.with_samples(serial_fir(x, c).samples[::2], x.sample_rate_hz / 2)

    s = _serial_cic_oracle(s, cfg.parallel_cic, fixed)
    for c in cfg.parallel_hb_coeffs:
        s = hb(s, c)
    if cfg.serial_cic is not None:
        s = _serial_cic_oracle(s, cfg.serial_cic, fixed)
    for c in cfg.serial_hb_coeffs:
        s = hb(s, c)
    return s


class SrcStream:
    """Chunked converter: feed frames as they arrive, collect output samples.

    Stage states persist between calls so the result matches one ``run_src``
    over the concatenated input, apart from the trailing samples released by
    ``flush``.
    """

    def __init__(self, cfg: SrcConfig):
        self.cfg = cfg
        self._pcic = ParallelCic(cfg.parallel_cic, cfg.lanes)
        self._phb = [HalfbandDecimator(c, cfg.fixed, cfg.width) for c in cfg.parallel_hb_coeffs]
        self._scic = ParallelCic(cfg.serial_cic, 1) if cfg.serial_cic is not None else None
        self._shb = [HalfbandDecimator(c, cfg.fixed, cfg.width) for c in cfg.serial_hb_coeffs]
        self.consumed = 0

    def _cic(self, engine, block):
        data = block if self.cfg.fixed else float_to_wide(block)
        y = engine.process(data)
        return (y if self.cfg.fixed else wide_to_float(y)).reshape(-1)

    def _after_parallel(self, flat):
        for dec in self._phb:
            flat = dec.process(flat)
        if self._scic is not None:
            flat = self._cic(self._scic, flat.reshape(-1, 1))
        for dec in self._shb:
            flat = dec.process(flat)
        return flat

    def process(self, block) -> np.ndarray:
        block = np.asarray(block)
        if block.ndim != 2 or block.shape[1] != self.cfg.lanes:
            raise InvalidLaneCount(f"expected (frames, {self.cfg.lanes}) block, got {block.shape}")
        self.consumed += block.size
        return self._after_parallel(self._cic(self._pcic, block))


# -- composite response -------------------------------------------------------

_TABLE_POINTS = 1 << 18


@lru_cache(maxsize=32)
def _amplitude_table(taps_key: bytes) -> np.ndarray:
    taps = np.frombuffer(taps_key, dtype=np.float64)
    n = (len(taps) - 1) // 2
    size = 2 * _TABLE_POINTS
    spec = np.fft.rfft(taps, size)
    f = np.arange(_TABLE_POINTS + 1) / size
    return (spec * np.exp(2j * np.pi * f * n)).real


def _hb_db(taps, f) -> np.ndarray:
    table = _amplitude_table(np.ascontiguousarray(taps, dtype=np.float64).tobytes())
    f = np.abs(f - np.round(f))
    pos = f * (2 * _TABLE_POINTS)
    amp = np.abs(np.interp(pos, np.arange(len(table)), table))
    with np.errstate(divide="ignore"):
        return np.maximum(20 * np.log10(amp), -300.0)


def _stage_db(obj, f, fixed, exact):
    if isinstance(obj, CicConfig):
        return np.asarray(cic_magnitude_response(obj, f))
    taps = obj.as_float(fixed)
    if exact:
        amp = np.abs(halfband_amplitude(taps, np.abs(np.asarray(f) - np.round(f))))
        with np.errstate(divide="ignore"):
            return np.maximum(20 * np.log10(amp), -300.0)
    return _hb_db(taps, f)


def cascade_gain_db(cfg: SrcConfig, f, exact: bool = False) -> np.ndarray:
    """Composite gain at ``f`` (cycles per input sample).

    Stage i sees the frequency scaled by the product of earlier decimations.
    ``exact`` evaluates halfband cosine sums directly instead of the table.
    """
    f = np.asarray(f, dtype=np.float64)
    total = np.zeros(f.shape)
    scale = 1
    for _, dec, obj in cfg.stages():
        total = total + _stage_db(obj, f * scale, cfg.fixed, exact)
        scale *= dec
    return total


@dataclass
class ResponseReport:
    decimation_factor: int
    passband_ripple_db: float
    stopband_atten_db: float
    freqs: np.ndarray
    response_db: np.ndarray
    passband_edge: float
    worst_alias_freq: float

    def summary(self) -> dict:
        return {
            "decimation_factor": self.decimation_factor,
            "passband_ripple_db": self.passband_ripple_db,
            "stopband_atten_db": self.stopband_atten_db,
            "passband_edge": self.passband_edge,
            "worst_alias_freq": self.worst_alias_freq,
            "points": int(len(self.freqs)),
        }

    def write(self, csv_path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f", "db"])
            for f, d in zip(self.freqs, self.response_db):
                w.writerow([repr(float(f)), repr(float(d))])
        json_path = csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.summary(), indent=2) + "\n")
        return csv_path, json_path


def _alias_points(factor, dense_bands, dense_pts, sparse_pts):
    """Sample points covering every band that folds onto the kept passband."""
    half = PASSBAND_FRACTION / factor
    n_bands = int(math.floor((0.5 + half) * factor))
    chunks = []
    for k0, k1, pts in ((1, min(n_bands, dense_bands), dense_pts), (dense_bands + 1, n_bands, sparse_pts)):
        if k1 < k0:
            continue
        k = np.arange(k0, k1 + 1, dtype=np.float64)[:, None]
        # shift each band's sample offsets so periodic late-stage lobes are
        # not always sampled at the same phase
        jitter = ((k * 0.6180339887498949) % 1.0) / pts
        u = np.linspace(-1.0, 1.0, pts)[None, :] + jitter * 2.0
        u = np.clip(u, -1.0, 1.0)
        chunks.append(((k + u * PASSBAND_FRACTION) / factor).reshape(-1))
    if not chunks:
        return np.zeros(0)
    pts = np.concatenate(chunks)
    return pts[(pts >= 0) & (pts <= 0.5)]


def cascade_response(cfg: SrcConfig, grid=None, budget: int = 40_000_000) -> ResponseReport:
    """Composite response with ripple over [0, 0.4 fs_out] and attenuation as
    the worst gain over every band that aliases onto that passband.

    ``grid`` (cycles per input sample) only sets the returned response
    samples; the figures of merit use their own band-wise sampling.
    """
    factor = cfg.total_factor
    edge = PASSBAND_FRACTION / factor
    passband = np.linspace(0.0, edge, 8193)
    pdb = cascade_gain_db(cfg, passband)
    ripple = float(pdb.max() - pdb.min())

    dense_bands = 64
    dense_pts = 4096
    n_bands = int(math.floor((0.5 + edge) * factor))
    sparse = max(16, min(dense_pts, (budget - dense_bands * dense_pts) // max(1, n_bands - dense_bands)))
    worst_db, worst_f = -np.inf, float("nan")
    stop = _alias_points(factor, dense_bands, dense_pts, sparse)
    for i in range(0, len(stop), 1 << 20):
        f = stop[i : i + (1 << 20)]
        g = cascade_gain_db(cfg, f)
        j = int(np.argmax(g))
        if g[j] > worst_db:
            worst_db, worst_f = float(g[j]), float(f[j])

    if grid is None:
        grid = np.linspace(0.0, min(0.5, 8.0 / factor), 4097)
    grid = np.asarray(grid, dtype=np.float64)
    return ResponseReport(
        decimation_factor=factor,
        passband_ripple_db=ripple,
        stopband_atten_db=-worst_db,
        freqs=grid,
        response_db=cascade_gain_db(cfg, grid),
        passband_edge=edge,
        worst_alias_freq=worst_f,
    )

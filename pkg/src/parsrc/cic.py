"""Cascaded integrator-comb decimators, serial and L-lane parallel.

The parallel integrator splits each integration into a lane integral (a
log-depth adder matrix computing prefix sums across one frame) and a time
integral (an accumulator over the frame totals), joined by an adder line:

    y(t, l) = A(t - 1) + I(t, l),    A(t) = A(t - 1) + I(t, L - 1)

Only the accumulator is recursive, and it runs once per frame instead of once
per sample.  All integrator and comb arithmetic wraps at the Hogenauer width
``input_width + N * ceil(log2(R * M))``, so the comb output is exact even
though the integrators overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import accumulate
from typing import Optional

import numpy as np

from .errors import InvalidFrame, MalformedStream
from .fixed import as_int_array, fits, int_dtype, round_div, wrap
from .stream import ParallelFrame, ParallelStream, SerialStream

RESPONSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class CicConfig:
    stages: int = 5
    decimation: int = 20
    diff_delay: int = 1
    input_width: int = 16
    output_width: int = 16
    rounding: str = "round-half-up"

    def __post_init__(self):
        for name in ("stages", "decimation", "diff_delay"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.input_width < 2 or self.output_width < 2:
            raise ValueError("bit widths must be >= 2")
        if self.rounding != "round-half-up":
            raise ValueError(f"unsupported rounding {self.rounding!r}")

    @property
    def bit_growth(self) -> int:
        rm = self.decimation * self.diff_delay
        return self.stages * (rm - 1).bit_length()

    @property
    def internal_width(self) -> int:
        return self.input_width + self.bit_growth

    @property
    def gain(self) -> int:
        return (self.decimation * self.diff_delay) ** self.stages

    def to_dict(self):
        return {
            "N": self.stages,
            "R": self.decimation,
            "M": self.diff_delay,
            "input_width": self.input_width,
            "output_width": self.output_width,
            "rounding": self.rounding,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            stages=int(d.get("N", d.get("stages", 5))),
            decimation=int(d.get("R", d.get("decimation", 20))),
            diff_delay=int(d.get("M", d.get("diff_delay", 1))),
            input_width=int(d.get("input_width", 16)),
            output_width=int(d.get("output_width", 16)),
            rounding=d.get("rounding", "round-half-up"),
        )


def normalize_output(values, cfg: CicConfig):
    """Scale the exact comb output by 2**(out-in) / (RM)**N, rounding half up.

    Dividing by the true DC gain keeps every stage at unit gain.
    """
    up = max(0, cfg.output_width - cfg.input_width)
    den = cfg.gain << max(0, cfg.input_width - cfg.output_width)
    arr = np.asarray(values)
    if arr.dtype != object and cfg.internal_width + up + 1 > 63:
        arr = arr.astype(object)
    if up:
        arr = arr << up
    out = round_div(arr, den)
    if cfg.output_width <= 64 and out.dtype == object:
        out = out.astype(np.int64)
    return out


# -- adder matrix -----------------------------------------------------------

@dataclass(frozen=True)
class AdderMatrix:
    """Prefix-sum network over one frame.

    Level ``s`` joins neighbouring groups of ``2**s`` lanes: the last lane of
    each left group is added to every lane of its right group.  ``levels``
    lists the (source, destination) add nodes per level, with nodes that only
    feed dropped lanes removed when ``lanes`` is not a power of two.
    """

    lanes: int
    padded: int
    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def add_count(self) -> int:
        return sum(len(level) for level in self.levels)

    def apply(self, block):
        block = np.asarray(block)
        squeeze = block.ndim == 1
        if squeeze:
            block = block[None, :]
        if block.shape[1] != self.lanes:
            raise InvalidFrame(f"expected {self.lanes} lanes, got {block.shape[1]}")
        frames = block.shape[0]
        x = np.zeros((frames, self.padded), dtype=block.dtype)
        x[:, : self.lanes] = block
        for s in range(self.depth):
            half = 1 << s
            v = x.reshape(frames, self.padded // (2 * half), 2, half)
            v[:, :, 1, :] += v[:, :, 0, half - 1 : half]
        out = x[:, : self.lanes]
        return out[0] if squeeze else out


def build_adder_matrix(lanes: int) -> AdderMatrix:
    if lanes < 1:
        raise ValueError("lane count must be >= 1")
    padded = 1 << (lanes - 1).bit_length()

    def build(width):
        # recursive two-group decomposition, returned as per-level node lists
        if width == 1:
            return []
        sub = build(width // 2)
        half = width // 2
        levels = [level + [(s + half, d + half) for s, d in level] for level in sub]
        levels.append([(half - 1, half + j) for j in range(half)])
        return levels

    levels = []
    for level in build(padded):
        kept = tuple((s, d) for s, d in level if d < lanes)
        levels.append(kept)
    return AdderMatrix(lanes, padded, tuple(levels))


# -- state ------------------------------------------------------------------

@dataclass
class CicState:
    """Running state of one CIC instance.

    ``integrator_accums[k]`` is the accumulator A of integrator stage k;
    ``comb_history[k]`` holds the last ``ceil(M / L_out)`` frames seen by comb
    stage k; ``carry`` buffers decimated samples not yet packed into a frame.
    """

    width: int
    lanes: int
    out_lanes: int
    integrator_accums: list = field(default_factory=list)
    comb_history: list = field(default_factory=list)
    downsample_phase: int = 0
    carry: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, cfg: CicConfig, lanes: int) -> "CicState":
        out_lanes = -(-lanes // cfg.decimation)
        depth = -(-cfg.diff_delay // out_lanes)
        dtype = int_dtype(cfg.internal_width)
        return cls(
            width=cfg.internal_width,
            lanes=lanes,
            out_lanes=out_lanes,
            integrator_accums=[0] * cfg.stages,
            comb_history=[np.zeros((depth, out_lanes), dtype=dtype) for _ in range(cfg.stages)],
            carry=np.zeros(0, dtype=dtype),
        )


# -- block operations (a block is T consecutive frames, shape (T, L)) -------

def integrate_block(block, state: CicState, stage: int, matrix: AdderMatrix):
    lane_integral = matrix.apply(block)
    totals = lane_integral[:, -1]
    a0 = state.integrator_accums[stage]
    # A(t) for every frame of the block, then shift to get A(t - 1)
    running = np.cumsum(totals) if totals.dtype != object else np.array(list(accumulate(totals)), dtype=object)
    running = running + a0
    prev = np.empty_like(running)
    if len(prev):
        prev[0] = a0
        prev[1:] = running[:-1]
        state.integrator_accums[stage] = int(wrap(running[-1:], state.width)[0])
    return wrap(lane_integral + prev[:, None], state.width)


def comb_block(block, state: CicState, delay: int, stage: int):
    hist = state.comb_history[stage]
    depth, lanes = hist.shape
    if block.shape[1] != lanes:
        raise InvalidFrame(f"expected {lanes} lanes, got {block.shape[1]}")
    ext = np.concatenate([hist, block]) if len(block) else hist
    lane = np.arange(lanes)
    frame_offset = (lane - delay) // lanes  # always negative: the delayed sample is earlier
    src_lane = (lane - delay) % lanes
    rows = depth + np.arange(len(block))[:, None] + frame_offset[None, :]
    out = wrap(block - ext[rows, src_lane[None, :]], state.width)
    state.comb_history[stage] = ext[-depth:].copy()
    return out


def downsample_block(block, state: CicState, factor: int):
    """Keep flat indices that are multiples of ``factor``; repack into frames."""
    flat = np.asarray(block).reshape(-1)
    start = (-state.downsample_phase) % factor
    kept = flat[start::factor]
    state.downsample_phase = (state.downsample_phase + len(flat)) % factor
    pool = np.concatenate([state.carry, kept]) if len(state.carry) else kept
    whole = len(pool) // state.out_lanes * state.out_lanes
    state.carry = pool[whole:].copy()
    return pool[:whole].reshape(-1, state.out_lanes)


# -- single-frame steps ------------------------------------------------------

def _check_frame(frame: ParallelFrame, lanes: int):
    if len(frame) != lanes:
        raise InvalidFrame(f"frame has {len(frame)} lanes, state expects {lanes}")


def parallel_integrate_step(frame: ParallelFrame, state: CicState, stage: int = 0,
                            matrix: Optional[AdderMatrix] = None) -> ParallelFrame:
    _check_frame(frame, state.lanes)
    matrix = matrix or build_adder_matrix(state.lanes)
    block = as_int_array(frame.lanes, state.width)[None, :]
    return ParallelFrame(integrate_block(block, state, stage, matrix)[0], frame.time_index)


def parallel_comb_step(frame: ParallelFrame, state: CicState, delay: int, stage: int = 0) -> ParallelFrame:
    _check_frame(frame, state.comb_history[stage].shape[1])
    need = -(-delay // len(frame))
    if state.comb_history[stage].shape[0] < need:
        raise InvalidFrame(f"comb history holds fewer than {need} frames")
    block = as_int_array(frame.lanes, state.width)[None, :]
    return ParallelFrame(comb_block(block, state, delay, stage)[0], frame.time_index)


def parallel_downsample(p: ParallelStream, factor: int) -> ParallelStream:
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    out_lanes = -(-p.lanes // factor)
    kept = p.data.reshape(-1)[: p.valid][::factor]
    frames = -(-len(kept) // out_lanes)
    flat = np.zeros(frames * out_lanes, dtype=kept.dtype)
    flat[: len(kept)] = kept
    return ParallelStream(flat.reshape(frames, out_lanes), p.aggregate_rate_hz / factor / out_lanes,
                          p.width, len(kept))


# -- engines -----------------------------------------------------------------

class ParallelCic:
    """Streaming L-lane CIC: N integrator pipelines, downsampler, N combs.

    ``process`` accepts any number of whole frames and returns the decimated
    frames completed so far; ``flush`` pads and emits what is left in the
    repacking buffer.  With ``lanes=1`` this is a plain serial CIC.
    """

    def __init__(self, cfg: CicConfig, lanes: int):
        if lanes < 1:
            raise ValueError("lane count must be >= 1")
        self.cfg = cfg
        self.lanes = lanes
        self.matrix = build_adder_matrix(lanes)
        self.state = CicState.initial(cfg, lanes)

    @property
    def out_lanes(self) -> int:
        return self.state.out_lanes

    def _combs(self, block):
        for k in range(self.cfg.stages):
            block = comb_block(block, self.state, self.cfg.diff_delay, k)
        return block

    def process_raw(self, block):
        """Integrate, decimate and comb; returns exact (unscaled) outputs."""
        block = np.asarray(block)
        if block.ndim != 2 or block.shape[1] != self.lanes:
            raise InvalidFrame(f"expected (frames, {self.lanes}) block, got {block.shape}")
        x = as_int_array(block, self.state.width)
        for k in range(self.cfg.stages):
            x = integrate_block(x, self.state, k, self.matrix)
        return self._combs(downsample_block(x, self.state, self.cfg.decimation))

    def flush_raw(self):
        carry = self.state.carry
        if not len(carry):
            return np.zeros((0, self.out_lanes), dtype=carry.dtype), 0
        frame = np.zeros((1, self.out_lanes), dtype=carry.dtype)
        frame[0, : len(carry)] = carry
        self.state.carry = carry[:0]
        return self._combs(frame), len(carry)

    def process(self, block):
        return normalize_output(self.process_raw(block), self.cfg)

    def flush(self):
        raw, n = self.flush_raw()
        return normalize_output(raw, self.cfg), n


def run_parallel_cic(p: ParallelStream, cfg: CicConfig) -> ParallelStream:
    if p.width is None:
        raise MalformedStream("the CIC datapath needs a fixed-point stream")
    if p.width > cfg.input_width:
        raise MalformedStream(f"{p.width}-bit stream exceeds CIC input width {cfg.input_width}")
    engine = ParallelCic(cfg, p.lanes)
    body = engine.process(p.data)
    tail, _ = engine.flush()
    data = np.concatenate([body, tail]) if len(tail) else body
    valid = -(-p.valid // cfg.decimation)
    rows = -(-valid // engine.out_lanes)
    return ParallelStream(data[:rows], p.aggregate_rate_hz / cfg.decimation / engine.out_lanes,
                          cfg.output_width, valid)


def run_serial_cic(s: SerialStream, cfg: CicConfig) -> SerialStream:
    """Reference CIC: one sample at a time, Python integers, wrap every add."""
    if s.width is None:
        raise MalformedStream("the CIC datapath needs a fixed-point stream")
    if not fits(s.samples, cfg.input_width):
        raise MalformedStream(f"samples exceed the {cfg.input_width}-bit input range")
    w = cfg.internal_width
    half, mask = 1 << (w - 1), (1 << w) - 1

    def add(a, b):
        return ((a + b + half) & mask) - half

    values = [int(v) for v in s.samples]
    for _ in range(cfg.stages):
        values = list(accumulate(values, add))
    values = values[:: cfg.decimation]
    m = cfg.diff_delay
    for _ in range(cfg.stages):
        delayed = [0] * m + values
        values = [add(v, -d) for v, d in zip(values, delayed)]
    up = max(0, cfg.output_width - cfg.input_width)
    den = cfg.gain << max(0, cfg.input_width - cfg.output_width)
    out = [((v << up) * 2 + den) // (2 * den) for v in values]
    return SerialStream(np.array(out, dtype=int_dtype(cfg.output_width)),
                        s.sample_rate_hz / cfg.decimation, cfg.output_width)


def cic_magnitude_response(cfg: CicConfig, f):
    """|H(f)| in dB, 0 dB at DC, ``f`` in cycles per input sample."""
    f = np.asarray(f, dtype=np.float64)
    f = np.abs(f - np.round(f))  # periodic in f with period 1, even
    rm = cfg.decimation * cfg.diff_delay
    # sin(pi f RM) / (RM sin(pi f)) written with normalized sincs for the f=0 limit
    ratio = np.abs(np.sinc(f * rm) / np.sinc(f))
    with np.errstate(divide="ignore"):
        db = 20.0 * cfg.stages * np.log10(ratio)
    db = np.maximum(db, RESPONSE_FLOOR_DB)
    return float(db) if db.ndim == 0 else db

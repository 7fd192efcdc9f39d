"""Serial streams, L-lane parallel streams and the index map between them.

Sample k of a serial stream lives at frame ``k // L``, lane ``k % L`` of the
parallel view.  Fixed-point streams carry a bit width; float streams carry
``width=None``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .errors import InvalidLaneCount, MalformedStream
from .fixed import fits, int_dtype


def serialize_index(k: int, lanes: int) -> tuple[int, int]:
    """Map serial time index ``k`` to (frame, lane)."""
    if lanes < 1:
        raise InvalidLaneCount(f"lane count must be >= 1, got {lanes}")
    if k < 0:
        raise ValueError(f"sample index must be >= 0, got {k}")
    return k // lanes, k % lanes


def deserialize_index(i: int, j: int, lanes: int) -> int:
    if lanes < 1:
        raise InvalidLaneCount(f"lane count must be >= 1, got {lanes}")
    if not 0 <= j < lanes:
        raise ValueError(f"lane {j} out of range for {lanes} lanes")
    return i * lanes + j


def _coerce_samples(samples, width):
    if width is None:
        return np.asarray(samples, dtype=np.float64)
    arr = np.asarray(samples)
    if arr.dtype.kind == "f":
        raise MalformedStream("fixed-point stream given float samples")
    dtype = int_dtype(width)
    arr = arr.astype(dtype) if dtype is not object else np.array([int(v) for v in arr.ravel()], dtype=object).reshape(arr.shape)
    if not fits(arr, width):
        raise MalformedStream(f"samples exceed the signed {width}-bit range")
    return arr


@dataclass(frozen=True)
class SerialStream:
    samples: np.ndarray
    sample_rate_hz: float = 1.0
    width: Optional[int] = None

    def __post_init__(self):
        arr = _coerce_samples(self.samples, self.width)
        if arr.ndim != 1:
            raise MalformedStream("serial samples must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return len(self.samples)

    @property
    def is_fixed(self):
        return self.width is not None

    def with_samples(self, samples, sample_rate_hz=None, width=...):
        return SerialStream(
            samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.width if width is ... else width,
        )


@dataclass(frozen=True)
class ParallelFrame:
    lanes: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.lanes)
        if arr.ndim != 1 or arr.size == 0:
            raise MalformedStream("a frame is a non-empty 1-D lane vector")
        if self.time_index < 0:
            raise ValueError("time_index must be >= 0")
        object.__setattr__(self, "lanes", arr)

    def __len__(self):
        return len(self.lanes)


@dataclass(frozen=True)
class ParallelStream:
    """Frames stored as a (T, L) array; ``valid`` counts real samples.

    Only the final frame may be partial; its trailing lanes are zero padding.
    """

    data: np.ndarray
    lane_rate_hz: float = 1.0
    width: Optional[int] = None
    valid: int = field(default=-1)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MalformedStream("parallel data must be a (frames, lanes) array")
        if arr.shape[1] < 1:
            raise InvalidLaneCount("lane count must be >= 1")
        arr = _coerce_samples(arr, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        total = arr.shape[0] * arr.shape[1]
        valid = total if self.valid < 0 else self.valid
        if not total - arr.shape[1] < valid <= total and not (total == 0 and valid == 0):
            raise MalformedStream(f"valid length {valid} inconsistent with {arr.shape} frames")
        object.__setattr__(self, "valid", valid)

    @property
    def lanes(self) -> int:
        return self.data.shape[1]

    @property
    def aggregate_rate_hz(self) -> float:
        return self.lanes * self.lane_rate_hz

    def __len__(self):
        return self.data.shape[0]

    @property
    def frames(self) -> Iterator[ParallelFrame]:
        for t, row in enumerate(self.data):
            yield ParallelFrame(row, t)

    @classmethod
    def from_frames(cls, frames: Sequence[ParallelFrame], lane_rate_hz=1.0, width=None, valid=-1):
        frames = list(frames)
        if not frames:
            raise MalformedStream("cannot infer lane count from zero frames")
        counts = {len(f) for f in frames}
        if len(counts) != 1:
            raise MalformedStream(f"inconsistent lane counts across frames: {sorted(counts)}")
        return cls(np.stack([f.lanes for f in frames]), lane_rate_hz, width, valid)


def serial_to_parallel(s: SerialStream, lanes: int) -> ParallelStream:
    if lanes < 1:
        raise InvalidLaneCount(f"lane count must be >= 1, got {lanes}")
    n = len(s)
    frames = -(-n // lanes)
    flat = np.zeros(frames * lanes, dtype=s.samples.dtype)
    flat[:n] = s.samples
    return ParallelStream(flat.reshape(frames, lanes), s.sample_rate_hz / lanes, s.width, n)


def parallel_to_serial(p: Union[ParallelStream, Sequence[ParallelFrame]], lane_rate_hz=None) -> SerialStream:
    if not isinstance(p, ParallelStream):
        frames = list(p)
        if not frames:
            return SerialStream(np.zeros(0), 0.0 if lane_rate_hz is None else lane_rate_hz)
        p = ParallelStream.from_frames(frames, 1.0 if lane_rate_hz is None else lane_rate_hz)
    flat = p.data.reshape(-1)[: p.valid]
    return SerialStream(flat, p.aggregate_rate_hz, p.width)


# -- files -------------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_stream(path, s: SerialStream, lanes: int = 1, extra: Optional[dict] = None) -> Path:
    """Write ``.i16`` (raw little-endian int16) or ``.csv`` plus a JSON sidecar."""
    path = Path(path)
    if path.suffix == ".i16":
        if s.width is None or s.width > 16:
            raise MalformedStream(".i16 output needs a fixed stream of width <= 16")
        np.asarray(s.samples, dtype="<i2").tofile(path)
        fmt = "i16"
    elif path.suffix == ".csv":
        with open(path, "w") as fh:
            for v in s.samples:
                fh.write(f"{v}\n" if s.width is not None else f"{float(v)!r}\n")
        fmt = "csv"
    else:
        raise MalformedStream(f"unknown sample file extension {path.suffix!r}")
    meta = {
        "format": fmt,
        "sample_rate_hz": s.sample_rate_hz,
        "lanes": lanes,
        "count": len(s),
        "width": s.width,
    }
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_stream(path, sample_rate_hz=None, lanes=None) -> tuple[SerialStream, dict]:
    """Read a sample file; sidecar values win unless overridden by arguments."""
    path = Path(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise MalformedStream(f"bad sidecar {side}: {exc}") from exc
    rate = float(sample_rate_hz if sample_rate_hz is not None else meta.get("sample_rate_hz", 1.0))
    if path.suffix == ".i16":
        raw = path.read_bytes()
        if len(raw) % 2:
            raise MalformedStream(f"{path} has an odd byte count for int16 data")
        samples = np.frombuffer(raw, dtype="<i2").astype(np.int64)
        width = int(meta.get("width") or 16)
        s = SerialStream(samples, rate, width)
    elif path.suffix == ".csv":
        text = path.read_text().split()
        try:
            values = [float(v) for v in text]
        except ValueError as exc:
            raise MalformedStream(f"{path}: {exc}") from exc
        width = meta.get("width")
        if width is not None:
            s = SerialStream(np.array([int(v) for v in values], dtype=np.int64), rate, int(width))
        else:
            s = SerialStream(np.array(values, dtype=np.float64), rate, None)
    else:
        raise MalformedStream(f"unknown sample file extension {path.suffix!r}")
    meta["lanes"] = int(lanes if lanes is not None else meta.get("lanes", 1))
    return s, meta

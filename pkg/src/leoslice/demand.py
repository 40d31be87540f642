"""Per-second service-demand traces and per-slot feature extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptySlot, OutOfRange, ParseError, SchemaError


@dataclass(frozen=True)
class DemandTrace:
    """Gap-free per-second demand samples (packets/s) starting at second 0."""

    packets: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.packets, dtype=float)
        if arr.ndim != 1:
            raise SchemaError("trace must be one-dimensional")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise SchemaError("trace values must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "packets", arr)

    @property
    def duration(self) -> int:
        return int(self.packets.size)

    @property
    def seconds(self) -> np.ndarray:
        return np.arange(self.duration)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["second", "packets"])
            for i, v in enumerate(self.packets):
                writer.writerow([i, repr(float(v))])


@dataclass(frozen=True)
class DemandFeature:
    mean: float
    variance: float
    slot: Optional[int] = None

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, self.variance])


@dataclass(frozen=True)
class Segment:
    """One regime of a synthetic trace.

    ``kind`` is ``"poisson"`` or ``"gaussian"``. Parameters drift linearly
    from their ``*_start`` to ``*_end`` values across the segment; for a
    Poisson segment ``mean`` is the intensity and ``variance`` is ignored.
    """

    start: int
    kind: str
    mean_start: float
    mean_end: float
    variance_start: float = 0.0
    variance_end: float = 0.0


@dataclass(frozen=True)
class RegimeSpec:
    segments: tuple
    duration: int

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if self.duration < 0:
            raise SchemaError("duration must be non-negative")
        if self.duration == 0:
            return
        if not segs or segs[0].start != 0:
            raise SchemaError("segments must start at second 0")
        starts = [s.start for s in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= self.duration:
            raise SchemaError("segment starts must be strictly increasing and inside the duration")
        for s in segs:
            if s.kind not in ("poisson", "gaussian"):
                raise SchemaError(f"unknown segment kind {s.kind!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "RegimeSpec":
        segs = tuple(Segment(**s) for s in data["segments"])
        return cls(segs, int(data["duration"]))


def default_regime(warmup: int = 600, horizon: int = 900) -> RegimeSpec:
    """Stationary warm-up followed by four drifting Poisson/Gaussian regimes.

    Each horizon regime ramps its mean by 30% up or down so that a model
    trained on the preceding minutes is always slightly out of date.
    """
    q = horizon // 4
    segs = (
        Segment(0, "poisson", 24.0, 24.0),
        Segment(warmup, "poisson", 24.0, 31.2),
        Segment(warmup + q, "gaussian", 30.0, 21.0, 60.0, 78.0),
        Segment(warmup + 2 * q, "poisson", 22.0, 28.6),
        Segment(warmup + 3 * q, "gaussian", 32.0, 22.4, 80.0, 56.0),
    )
    return RegimeSpec(segs, warmup + horizon)


def generate(spec: RegimeSpec, seed) -> DemandTrace:
    rng = np.random.default_rng(seed)
    out = np.empty(spec.duration)
    bounds = [s.start for s in spec.segments] + [spec.duration]
    for seg, lo, hi in zip(spec.segments, bounds[:-1], bounds[1:]):
        n = hi - lo
        frac = np.arange(n) / max(n - 1, 1)
        mean = seg.mean_start + (seg.mean_end - seg.mean_start) * frac
        if seg.kind == "poisson":
            out[lo:hi] = rng.poisson(mean)
        else:
            var = seg.variance_start + (seg.variance_end - seg.variance_start) * frac
            out[lo:hi] = np.maximum(rng.normal(mean, np.sqrt(var)), 0.0)
    return DemandTrace(out)


def slot_samples(trace: DemandTrace, slot: int, tau: int) -> np.ndarray:
    """The ``tau`` per-second values of slot ``slot`` (seconds ``slot*tau`` onward)."""
    tau = int(tau)
    if slot < 0 or (slot + 1) * tau > trace.duration:
        raise OutOfRange(f"slot {slot} (tau={tau}) outside trace of {trace.duration} s")
    return trace.packets[slot * tau:(slot + 1) * tau]


def extract_features(samples: Sequence[float], slot: Optional[int] = None) -> DemandFeature:
    """Mean and population variance of one slot's samples."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptySlot("cannot extract features from an empty slot")
    return DemandFeature(float(x.mean()), float(x.var()), slot)


def trace_features(trace: DemandTrace, tau: int) -> np.ndarray:
    """Features of every complete slot as an ``(n_slots, 2)`` array."""
    n = trace.duration // int(tau)
    x = trace.packets[: n * int(tau)].reshape(n, int(tau))
    return np.column_stack([x.mean(axis=1), x.var(axis=1)])


def ingest_csv(path) -> DemandTrace:
    """Read a ``second,packets`` trace, rejecting gaps and negative values."""
    path = Path(path)
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["second", "packets"]:
            raise SchemaError(f"{path}: expected header 'second,packets', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", lineno)
            try:
                sec = int(row[0])
                val = float(row[1])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if sec != len(values):
                raise SchemaError(f"line {lineno}: expected second {len(values)}, got {sec}")
            if not val >= 0 or not np.isfinite(val):
                raise SchemaError(f"line {lineno}: packets must be finite and non-negative")
            values.append(val)
    return DemandTrace(np.array(values))

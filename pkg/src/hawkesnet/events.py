"""Time-sorted marked event streams, the exchange format between the
simulator, the estimators and the trade-data ingestion."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from hawkesnet.errors import ArgumentError

CSV_HEADER = "time,component,mark"


@dataclass(frozen=True)
class EventStream:
    """Events of D component types on [0, horizon].

    times:      seconds, globally non-decreasing, strictly increasing within
                each component
    components: 1-based component indices in 1..dimension
    marks:      1-based mark indices in 1..mark_cardinality
    segments:   optional increasing boundaries (.., horizon] splitting the
                stream into independently-recorded stretches (used by the
                daily-window filter); estimators never pair events across a
                boundary.  None means a single contiguous record.
    """

    times: np.ndarray
    components: np.ndarray
    marks: np.ndarray
    horizon: float
    dimension: int
    mark_cardinality: int = 1
    segments: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.ascontiguousarray(self.times, dtype=np.float64))
        object.__setattr__(self, "components", np.ascontiguousarray(self.components, dtype=np.int64))
        object.__setattr__(self, "marks", np.ascontiguousarray(self.marks, dtype=np.int64))
        t, c, m = self.times, self.components, self.marks
        if not (t.shape == c.shape == m.shape) or t.ndim != 1:
            raise ArgumentError("times, components and marks must be 1-d arrays of equal length")
        if self.horizon <= 0:
            raise ArgumentError("horizon must be positive")
        if self.dimension < 1 or self.mark_cardinality < 1:
            raise ArgumentError("dimension and mark_cardinality must be >= 1")
        if t.size:
            if t[0] < 0 or t[-1] > self.horizon:
                raise ArgumentError("event times must lie in [0, horizon]")
            if np.any(np.diff(t) < 0):
                raise ArgumentError("event times must be non-decreasing")
            if c.min() < 1 or c.max() > self.dimension:
                raise ArgumentError("component indices must lie in 1..dimension")
            if m.min() < 1 or m.max() > self.mark_cardinality:
                raise ArgumentError("mark indices must lie in 1..mark_cardinality")
            for i in range(1, self.dimension + 1):
                ti = t[c == i]
                if ti.size > 1 and np.any(np.diff(ti) <= 0):
                    raise ArgumentError(f"times of component {i} must be strictly increasing")
        if self.segments is not None:
            seg = tuple(float(s) for s in self.segments)
            if len(seg) == 0 or any(b <= a for a, b in zip(seg, seg[1:])):
                raise ArgumentError("segment boundaries must be strictly increasing")
            if abs(seg[-1] - self.horizon) > 1e-9:
                raise ArgumentError("last segment boundary must equal the horizon")
            object.__setattr__(self, "segments", seg)

    def __len__(self):
        return self.times.size

    @property
    def n_events(self) -> int:
        return self.times.size

    def component_times(self, i: int) -> np.ndarray:
        """Times of component i (1-based)."""
        if not 1 <= i <= self.dimension:
            raise ArgumentError(f"component index {i} out of range 1..{self.dimension}")
        return self.times[self.components == i]

    def counts(self) -> np.ndarray:
        """Event count per component, shape (dimension,)."""
        return np.bincount(self.components, minlength=self.dimension + 1)[1:]

    def segment_bounds(self) -> list[tuple[float, float]]:
        """(start, end) per segment; a single (0, horizon) when unsegmented."""
        if self.segments is None:
            return [(0.0, self.horizon)]
        starts = (0.0,) + self.segments[:-1]
        return list(zip(starts, self.segments))

    # ------------------------------------------------------------------ I/O

    def to_csv(self, path_or_buf, header_comments: list[str] | None = None) -> None:
        """Write `time,component,mark` rows; '#' comment lines may precede the header."""
        own = isinstance(path_or_buf, (str, bytes))
        fh = open(path_or_buf, "w", encoding="utf-8") if own else path_or_buf
        try:
            for line in header_comments or []:
                fh.write(f"# {line}\n")
            fh.write(CSV_HEADER + "\n")
            for t, c, m in zip(self.times, self.components, self.marks):
                fh.write(f"{float(t)!r},{c},{m}\n")
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(
        cls,
        path_or_buf,
        horizon: float | None = None,
        dimension: int | None = None,
        mark_cardinality: int | None = None,
    ) -> "EventStream":
        """Read a `time,component,mark` CSV.  Missing horizon/dimension/
        cardinality default to the maxima observed in the file."""
        own = isinstance(path_or_buf, (str, bytes))
        fh = open(path_or_buf, "r", encoding="utf-8") if own else path_or_buf
        try:
            rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        finally:
            if own:
                fh.close()
        if not rows or rows[0] != CSV_HEADER:
            raise ArgumentError(f"expected header '{CSV_HEADER}'")
        data = np.loadtxt(io.StringIO("\n".join(rows[1:])), delimiter=",", ndmin=2) if len(rows) > 1 else np.empty((0, 3))
        t = data[:, 0] if data.size else np.empty(0)
        c = data[:, 1].astype(np.int64) if data.size else np.empty(0, np.int64)
        m = data[:, 2].astype(np.int64) if data.size else np.empty(0, np.int64)
        return cls(
            times=t,
            components=c,
            marks=m,
            horizon=float(horizon if horizon is not None else (t[-1] if t.size else 1.0)),
            dimension=int(dimension if dimension is not None else (c.max() if c.size else 1)),
            mark_cardinality=int(mark_cardinality if mark_cardinality is not None else (m.max() if m.size else 1)),
        )


def merge_sorted(streams: list[EventStream], horizon: float, dimension: int, mark_cardinality: int) -> EventStream:
    """Merge per-component streams into one time-sorted stream."""
    t = np.concatenate([s.times for s in streams]) if streams else np.empty(0)
    c = np.concatenate([s.components for s in streams]) if streams else np.empty(0, np.int64)
    m = np.concatenate([s.marks for s in streams]) if streams else np.empty(0, np.int64)
    order = np.lexsort((c, t))
    return EventStream(t[order], c[order], m[order], horizon, dimension, mark_cardinality)

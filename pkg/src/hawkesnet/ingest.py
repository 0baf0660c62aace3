"""Turn raw trade records into event streams.

Input CSV format: ``timestamp_us,pair,volume_usd`` (UTF-8, header required),
microsecond epoch timestamps.  Per pair, trades sharing a timestamp are
aggregated into one event whose volume is the sum; volumes map to discrete
marks through a half-open (lo, hi] binning; a daily clock window can
restrict the sample, re-basing each day into its own segment so lag
statistics never straddle midnight.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from hawkesnet.errors import ArgumentError
from hawkesnet.events import EventStream

TRADES_CSV_HEADER = ("timestamp_us", "pair", "volume_usd")

US_PER_DAY = 86_400_000_000

# log-spaced dollar boundaries from 100 to 100k (15 buckets with the
# open-ended tail); interior edges rounded the way desks quote them
DEFAULT_VOLUME_EDGES_USD = (
    100.0,
    170.0,
    290.0,
    490.0,
    840.0,
    1_425.0,
    2_425.0,
    4_125.0,
    7_000.0,
    12_000.0,
    20_300.0,
    34_500.0,
    58_750.0,
    100_000.0,
)


@dataclass(frozen=True)
class TradeRecord:
    timestamp_us: int
    pair: str
    volume_usd: float

    def __post_init__(self):
        if self.volume_usd <= 0:
            raise ArgumentError("trade volume must be positive")


@dataclass(frozen=True)
class VolumeBinning:
    """Half-open (lo, hi] dollar intervals; the last interval is open-ended,
    so M = len(edges) + 1 marks."""

    edges: tuple

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        if len(e) < 1 or any(b <= a for a, b in zip(e, e[1:])) or e[0] <= 0:
            raise ArgumentError("edges must be positive and strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def mark_cardinality(self) -> int:
        return len(self.edges) + 1

    def bin_volume(self, volume) -> np.ndarray:
        """Mark index of the interval containing the volume; an exact edge
        belongs to the interval it closes."""
        v = np.asarray(volume, dtype=np.float64)
        if np.any(v <= 0):
            raise ArgumentError("volume must be positive")
        idx = np.searchsorted(np.asarray(self.edges), v, side="left") + 1
        return idx if v.shape else int(idx)


def bin_volume(volume, binning: VolumeBinning):
    return binning.bin_volume(volume)


# --------------------------------------------------------------------------
# reading and aggregation


def read_trades_csv(path) -> list:
    """Parse and time-sort trade records."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRADES_CSV_HEADER:
            raise ArgumentError(f"expected header {','.join(TRADES_CSV_HEADER)}")
        for row in reader:
            if not row:
                continue
            records.append(TradeRecord(int(row[0]), row[1].strip(), float(row[2])))
    records.sort(key=lambda r: (r.timestamp_us, r.pair))
    return records


def aggregate_trades(records, session_start_us: int | None = None):
    """Aggregate same-timestamp trades of a single pair: one event per
    distinct timestamp with summed volume, times in seconds from the session
    start (midnight UTC of the first trade's day when not given)."""
    if not records:
        raise ArgumentError("no trade records to aggregate")
    pairs = {r.pair for r in records}
    if len(pairs) > 1:
        raise ArgumentError(f"aggregate one pair at a time, got {sorted(pairs)}")
    ts = np.array([r.timestamp_us for r in records], dtype=np.int64)
    if np.any(np.diff(ts) < 0):
        raise ArgumentError("trade records must be sorted by timestamp")
    vol = np.array([r.volume_usd for r in records])
    if session_start_us is None:
        session_start_us = int(ts[0] // US_PER_DAY) * US_PER_DAY
    uniq, start = np.unique(ts, return_index=True)
    agg_vol = np.add.reduceat(vol, start)
    times_s = (uniq - session_start_us) / 1e6
    if np.any(times_s < 0):
        raise ArgumentError("trades precede the session start")
    return times_s, agg_vol, session_start_us


def build_event_stream(
    records,
    pairs: list | None = None,
    binning: VolumeBinning | None = None,
    session_start_us: int | None = None,
    horizon: float | None = None,
) -> EventStream:
    """Full ingestion: select pairs (sorted order = component index),
    aggregate per pair, bin volumes to marks."""
    if binning is None:
        binning = VolumeBinning(DEFAULT_VOLUME_EDGES_USD)
    if pairs is None:
        pairs = sorted({r.pair for r in records})
    if not pairs:
        raise ArgumentError("no pairs selected")
    if session_start_us is None:
        session_start_us = int(min(r.timestamp_us for r in records) // US_PER_DAY) * US_PER_DAY
    all_t, all_c, all_m = [], [], []
    for comp, pair in enumerate(pairs, start=1):
        recs = [r for r in records if r.pair == pair]
        if not recs:
            raise ArgumentError(f"pair {pair} has no trades")
        times_s, vols, _ = aggregate_trades(recs, session_start_us)
        all_t.append(times_s)
        all_c.append(np.full(times_s.size, comp, dtype=np.int64))
        all_m.append(binning.bin_volume(vols).astype(np.int64))
    t = np.concatenate(all_t)
    c = np.concatenate(all_c)
    m = np.concatenate(all_m)
    order = np.lexsort((c, t))
    t, c, m = t[order], c[order], m[order]
    if horizon is None:
        horizon = float(np.ceil(t[-1] / 86_400.0)) * 86_400.0 if t.size else 86_400.0
    return EventStream(t, c, m, horizon, len(pairs), binning.mark_cardinality)


# --------------------------------------------------------------------------
# seasonality and windowing


def intraday_profile(stream: EventStream, bin_minutes: int, n_days: int | None = None):
    """Per-clock-bin mean event rate across days with a 95% normal CI.

    Returns (bin_starts_s, mean_rate, ci_lo, ci_hi) arrays over the
    1440/bin_minutes daily bins; stream times are seconds from midnight of
    day one.  Days without any event are skipped with a warning.
    """
    if bin_minutes <= 0 or 1440 % bin_minutes != 0:
        raise ArgumentError("bin_minutes must divide 24h")
    n_bins = 1440 // bin_minutes
    bin_s = bin_minutes * 60.0
    if n_days is None:
        n_days = int(np.ceil(stream.horizon / 86_400.0))
    day_idx = np.floor_divide(stream.times, 86_400.0).astype(np.int64)
    clock = stream.times - day_idx * 86_400.0
    bins = np.minimum((clock / bin_s).astype(np.int64), n_bins - 1)
    per_day = np.zeros((n_days, n_bins))
    used = []
    for d in range(n_days):
        sel = day_idx == d
        if not np.any(sel):
            warnings.warn(f"day {d + 1} has no events; skipped from the intraday profile")
            continue
        per_day[d] = np.bincount(bins[sel], minlength=n_bins) / bin_s
        used.append(d)
    if not used:
        raise ArgumentError("no day with events")
    rates = per_day[used]
    mean = rates.mean(axis=0)
    half = 1.96 * rates.std(axis=0, ddof=1) / np.sqrt(len(used)) if len(used) > 1 else np.zeros(n_bins)
    starts = np.arange(n_bins) * bin_s
    return starts, mean, mean - half, mean + half


def window_filter(stream: EventStream, start_clock_s: float, end_clock_s: float) -> EventStream:
    """Keep events inside the daily clock window [start, end); each day is
    re-based into its own contiguous segment so the lag estimators never
    pair events across days.  The horizon becomes the summed window length.
    """
    if not 0 <= start_clock_s < end_clock_s <= 86_400.0:
        raise ArgumentError("need 0 <= start < end <= 24h")
    n_days = max(int(np.ceil(stream.horizon / 86_400.0)), 1)
    win = end_clock_s - start_clock_s
    day_idx = np.floor_divide(stream.times, 86_400.0).astype(np.int64)
    clock = stream.times - day_idx * 86_400.0
    keep = (clock >= start_clock_s) & (clock < end_clock_s)
    new_t = day_idx[keep] * win + (clock[keep] - start_clock_s)
    boundaries = tuple((d + 1) * win for d in range(n_days))
    return EventStream(
        times=new_t,
        components=stream.components[keep],
        marks=stream.marks[keep],
        horizon=n_days * win,
        dimension=stream.dimension,
        mark_cardinality=stream.mark_cardinality,
        segments=boundaries,
    )


# --------------------------------------------------------------------------
# synthetic trade data (stands in for proprietary feeds in tests and demos)


def write_synthetic_trades(
    stream: EventStream,
    path,
    pairs: list,
    seed: int,
    log_volume_mean: float = 6.0,
    log_volume_sigma: float = 1.5,
    mark_volume_scale: float = 0.0,
    session_start_us: int = 1_700_000_000_000_000,
    header_comments: list | None = None,
) -> None:
    """Emit a trades CSV from a simulated stream: component -> pair name,
    volumes log-normal (optionally scaled up with the mark so volume carries
    signal), microsecond timestamps from the session start."""
    if len(pairs) != stream.dimension:
        raise ArgumentError("need one pair name per component")
    gen = np.random.Generator(np.random.PCG64(seed))
    log_v = gen.normal(log_volume_mean, log_volume_sigma, stream.n_events)
    log_v += mark_volume_scale * (stream.marks - 1)
    volumes = np.exp(log_v)
    ts_us = session_start_us + np.round(stream.times * 1e6).astype(np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        fh.write(",".join(TRADES_CSV_HEADER) + "\n")
        for t_us, comp, v in zip(ts_us, stream.components, volumes):
            fh.write(f"{t_us},{pairs[comp - 1]},{v:.6f}\n")

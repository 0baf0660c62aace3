"""First- and second-order statistics of marked event streams.

The conditional excess-rate tensor g[i, j, b, m] holds, for each
conditioning type j and mark m, the average rate of type-i events in the
lag bin b in excess of the stationary rate.  Bins are the half-open
intervals (lo, hi] between consecutive grid points; values are attached to
the geometric bin centers and interpolated linearly in between.  The grid
is linear up to a switch point h and geometric from h to the horizon T,
which resolves fast kernel variation at short lags without wasting bins at
long ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from hawkesnet.errors import ArgumentError, EstimationError
from hawkesnet.events import EventStream

STATS_CSV_HEADER = "i,j,bin_lo,bin_hi,mark,value"


@dataclass(frozen=True)
class StatGrid:
    """Strictly increasing lag-grid points; bins are the gaps between them."""

    points: np.ndarray
    h: float | None = None
    n_lin: int | None = None
    n_log: int | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ArgumentError("a grid needs at least two points")
        if p[0] <= 0 or np.any(np.diff(p) <= 0):
            raise ArgumentError("grid points must be positive and strictly increasing")
        object.__setattr__(self, "points", p)

    @property
    def t_min(self) -> float:
        return float(self.points[0])

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def n_bins(self) -> int:
        return self.points.size - 1

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin centers, the interpolation abscissae."""
        return np.sqrt(self.points[:-1] * self.points[1:])

    def describe(self) -> dict:
        d = {"T": self.T, "t_min": self.t_min, "n_bins": self.n_bins}
        if self.h is not None:
            d.update({"h": self.h, "n_lin": self.n_lin, "n_log": self.n_log})
        else:
            d["points"] = self.points.tolist()
        return d


def build_grid(h: float, n_lin: int, n_log: int, T: float) -> StatGrid:
    """Linear spacing from t_min = h/n_lin up to h, then geometric up to T.

    Duplicate points collapse (n_lin = 1 makes t_min coincide with h), so the
    grid yields n_lin + n_log bins in the regular case.
    """
    if not 0 < h < T:
        raise ArgumentError("need 0 < h < T")
    if n_lin < 1 or n_log < 1:
        raise ArgumentError("n_lin and n_log must be >= 1")
    t_min = h / n_lin
    lin = t_min + np.arange(n_lin + 1) * (h - t_min) / n_lin
    log = h * (T / h) ** (np.arange(1, n_log + 1) / n_log)
    pts = np.unique(np.concatenate([lin, log]))
    pts[-1] = T
    return StatGrid(points=pts, h=h, n_lin=n_lin, n_log=n_log)


def linear_grid(n: int, T: float) -> StatGrid:
    """Uniform grid {k T / n} for k = 1..n (n - 1 bins)."""
    if n < 2:
        raise ArgumentError("a linear grid needs n >= 2")
    return StatGrid(points=np.arange(1, n + 1) * (T / n))


@dataclass(frozen=True)
class SecondOrderStats:
    """Estimated rates, mark laws and the conditional excess-rate tensor.

    g has shape (D, D, n_bins, M) in 1/s; se holds the per-bin standard
    error of g on the same shape; flagged[j, m] marks conditioning cells
    with zero events (their g slices are 0, not estimates).
    """

    rates: np.ndarray
    pmfs: np.ndarray
    grid: StatGrid
    g: np.ndarray
    n_conditioning: np.ndarray
    flagged: np.ndarray
    se: np.ndarray | None = None

    def __post_init__(self):
        if np.any(~np.isfinite(self.g)):
            raise EstimationError("estimated statistics contain non-finite values")

    @property
    def dimension(self) -> int:
        return self.rates.size

    @property
    def mark_cardinality(self) -> int:
        return self.pmfs.shape[1]

    # ------------------------------------------------------------------ I/O

    def save(self, csv_path, json_path, header_comments: list[str] | None = None) -> None:
        D, M, nb = self.dimension, self.mark_cardinality, self.grid.n_bins
        pts = self.grid.points
        with open(csv_path, "w", encoding="utf-8") as fh:
            for line in header_comments or []:
                fh.write(f"# {line}\n")
            fh.write(STATS_CSV_HEADER + "\n")
            for i in range(D):
                for j in range(D):
                    for b in range(nb):
                        for m in range(M):
                            fh.write(
                                f"{i+1},{j+1},{float(pts[b])!r},{float(pts[b+1])!r},{m+1},{float(self.g[i, j, b, m])!r}\n"
                            )
        sidecar = {
            "rates": self.rates.tolist(),
            "pmfs": self.pmfs.tolist(),
            "grid": self.grid.describe(),
            "n_conditioning": self.n_conditioning.tolist(),
            "flagged": self.flagged.astype(int).tolist(),
        }
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, csv_path, json_path) -> "SecondOrderStats":
        with open(json_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        gd = sidecar["grid"]
        if "h" in gd:
            grid = build_grid(gd["h"], gd["n_lin"], gd["n_log"], gd["T"])
        else:
            grid = StatGrid(points=np.asarray(gd["points"]))
        rates = np.asarray(sidecar["rates"])
        pmfs = np.asarray(sidecar["pmfs"])
        D, M, nb = rates.size, pmfs.shape[1], grid.n_bins
        g = np.zeros((D, D, nb, M))
        with open(csv_path, "r", encoding="utf-8") as fh:
            rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0] != STATS_CSV_HEADER:
            raise ArgumentError(f"expected header '{STATS_CSV_HEADER}'")
        for ln in rows[1:]:
            si, sj, lo, hi, sm, val = ln.split(",")
            b = int(np.searchsorted(grid.points, float(hi)) ) - 1
            b = min(max(b, 0), nb - 1)
            g[int(si) - 1, int(sj) - 1, b, int(sm) - 1] = float(val)
        return cls(
            rates=rates,
            pmfs=pmfs,
            grid=grid,
            g=g,
            n_conditioning=np.asarray(sidecar["n_conditioning"], dtype=np.int64),
            flagged=np.asarray(sidecar["flagged"], dtype=bool),
        )


# --------------------------------------------------------------------------
# estimation


def estimate_first_order(stream: EventStream):
    """Empirical rates per component and mark frequencies per component."""
    counts = stream.counts()
    for i, c in enumerate(counts, start=1):
        if c == 0:
            raise EstimationError(f"component {i} has no events; its rate and mark law are undefined")
    rates = counts / stream.horizon
    M = stream.mark_cardinality
    pmfs = np.zeros((stream.dimension, M))
    for j in range(1, stream.dimension + 1):
        marks = stream.marks[stream.components == j]
        pmfs[j - 1] = np.bincount(marks, minlength=M + 1)[1:] / marks.size
    return rates, pmfs


@numba.njit(cache=True)
def _count_lag_bins(target_times, cond_times, edges, out_sum, out_sumsq):
    """For each conditioner tau, count targets in (tau+edges[b], tau+edges[b+1]]
    and accumulate per-bin count sums and squared sums."""
    n_edges = edges.size
    n_t = target_times.size
    ptr = np.zeros(n_edges, dtype=np.int64)
    for c in range(cond_times.size):
        tau = cond_times[c]
        for e in range(n_edges):
            p = ptr[e]
            bound = tau + edges[e]
            while p < n_t and target_times[p] <= bound:
                p += 1
            ptr[e] = p
        for b in range(n_edges - 1):
            cnt = ptr[b + 1] - ptr[b]
            out_sum[b] += cnt
            out_sumsq[b] += cnt * cnt


def estimate_second_order(stream: EventStream, grid: StatGrid, mark_cardinality: int | None = None) -> SecondOrderStats:
    """Estimate the conditional excess-rate tensor on the grid.

    Conditioning events within T of the end of their segment are dropped so
    every counting window fits inside the record (no edge bias), and windows
    never cross a segment boundary.  The conditioning event itself falls at
    lag zero, below the first bin, so it is never counted.
    """
    if grid.T >= stream.horizon:
        raise ArgumentError("grid horizon T must be smaller than the stream horizon")
    D = stream.dimension
    M = mark_cardinality if mark_cardinality is not None else stream.mark_cardinality
    if M < stream.mark_cardinality:
        raise ArgumentError("mark_cardinality below the stream's mark range")
    rates, _ = estimate_first_order(stream)
    pmfs = np.zeros((D, M))
    for j in range(1, D + 1):
        marks = stream.marks[stream.components == j]
        pmfs[j - 1] = np.bincount(marks, minlength=M + 1)[1:] / marks.size

    edges = grid.points
    widths = grid.bin_widths
    nb = grid.n_bins
    sums = np.zeros((D, D, nb, M))
    sumsqs = np.zeros((D, D, nb, M))
    n_cond = np.zeros((D, M), dtype=np.int64)

    comp_times = [stream.component_times(i) for i in range(1, D + 1)]
    comp_marks = [stream.marks[stream.components == i] for i in range(1, D + 1)]

    for seg_start, seg_end in stream.segment_bounds():
        for j in range(D):
            tj, mj = comp_times[j], comp_marks[j]
            in_seg = (tj >= seg_start) & (tj <= seg_end - grid.T)
            for m in range(1, M + 1):
                taus = tj[in_seg & (mj == m)]
                if taus.size == 0:
                    continue
                n_cond[j, m - 1] += taus.size
                for i in range(D):
                    ti = comp_times[i]
                    lo = np.searchsorted(ti, seg_start, side="left")
                    hi = np.searchsorted(ti, seg_end, side="right")
                    _count_lag_bins(ti[lo:hi], taus, edges, sums[i, j, :, m - 1], sumsqs[i, j, :, m - 1])

    flagged = n_cond == 0
    g = np.zeros((D, D, nb, M))
    se = np.zeros((D, D, nb, M))
    for j in range(D):
        for m in range(M):
            n = n_cond[j, m]
            if n == 0:
                continue
            for i in range(D):
                mean = sums[i, j, :, m] / n
                g[i, j, :, m] = mean / widths - rates[i]
                var = np.maximum(sumsqs[i, j, :, m] / n - mean**2, 0.0)
                se[i, j, :, m] = np.sqrt(var / n) / widths
    return SecondOrderStats(
        rates=rates, pmfs=pmfs, grid=grid, g=g, n_conditioning=n_cond, flagged=flagged, se=se
    )


# --------------------------------------------------------------------------
# interpolation and the two-sided lag kernel


def g_table(stats: SecondOrderStats, i: int, j: int, m: int):
    """(centers, values) of the estimated curve for entry (i, j) and mark m."""
    _check_indices(stats, i, j, m)
    return stats.grid.centers, stats.g[i - 1, j - 1, :, m - 1]


def _check_indices(stats: SecondOrderStats, i: int, j: int, m: int):
    D, M = stats.dimension, stats.mark_cardinality
    if not (1 <= i <= D and 1 <= j <= D):
        raise ArgumentError(f"component index out of range 1..{D}")
    if not 1 <= m <= M:
        raise ArgumentError(f"mark index out of range 1..{M}")


def interpolate_g(stats: SecondOrderStats, i: int, j: int, t, m: int):
    """Linear interpolation between bin centers; the first bin value extends
    down to lag 0+, zero for t <= 0 or t > T."""
    centers, values = g_table(stats, i, j, m)
    t_arr = np.asarray(t, dtype=np.float64)
    out = np.interp(t_arr, centers, values)
    out = np.where((t_arr <= 0.0) | (t_arr > stats.grid.T), 0.0, out)
    return out if t_arr.shape else float(out)


def h_kernel(stats: SecondOrderStats, k: int, j: int, t, x: int, z: int):
    """Two-sided lag kernel: the (k,j) curve at mark x for positive lags and
    the rate-ratio-weighted (j,k) curve at mark z for negative lags; 0 at 0."""
    if stats.rates[j - 1] <= 0:
        raise ArgumentError(f"conditioning rate of component {j} must be positive")
    t_arr = np.asarray(t, dtype=np.float64)
    pos = interpolate_g(stats, k, j, np.maximum(t_arr, 0.0), x)
    neg = interpolate_g(stats, j, k, np.maximum(-t_arr, 0.0), z)
    ratio = stats.rates[k - 1] / stats.rates[j - 1]
    out = np.where(t_arr > 0.0, pos, 0.0) + np.where(t_arr < 0.0, ratio * neg, 0.0)
    return out if t_arr.shape else float(out)

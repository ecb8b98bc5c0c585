"""TCSPC-style coincidence histogramming of photon-event streams.

Multi-stop correlation: every (a, b) pair with |t_b - t_a| <= window is
counted, binned by dT = t_b - t_a on centers k * bin_width with a
symmetric zero bin.  Boundary ties (|dT| exactly half a bin off a center)
round away from zero so the histogram mirrors exactly under A<->B swap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from .lasersim import PS_PER_S, DetectorSpec


class UnsortedEventsError(ValueError):
    pass


class SpecMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HistogramSpec:
    """Binning of the dT = t_B - t_A axis; window is the half-range."""

    bin_width: float = 0.5e-9  # s
    window: float = 2e-6       # s

    def __post_init__(self):
        if not self.bin_width > 0.0:
            raise ValueError("bin_width must be > 0")
        bw_ps = self.bin_width * PS_PER_S
        win_ps = self.window * PS_PER_S
        if abs(bw_ps - round(bw_ps)) > 1e-6 or abs(win_ps - round(win_ps)) > 1e-6:
            raise ValueError("bin_width and window must be whole picoseconds")
        if round(win_ps) % round(bw_ps) != 0:
            raise ValueError(
                f"window ({self.window:g} s) must be an exact multiple of "
                f"bin_width ({self.bin_width:g} s)"
            )

    @property
    def bin_width_ps(self) -> int:
        return int(round(self.bin_width * PS_PER_S))

    @property
    def window_ps(self) -> int:
        return int(round(self.window * PS_PER_S))

    @property
    def half_bins(self) -> int:
        return self.window_ps // self.bin_width_ps

    @property
    def n_bins(self) -> int:
        return 2 * self.half_bins + 1  # odd: symmetric zero bin

    @property
    def bin_centers(self) -> np.ndarray:
        """Bin centers in seconds."""
        k = np.arange(-self.half_bins, self.half_bins + 1)
        return k * self.bin_width


@dataclass
class CoincidenceHistogram:
    spec: HistogramSpec
    counts: np.ndarray  # uint64 per bin
    singles_a: int
    singles_b: int
    duration: float  # s


@dataclass
class NormalizedFringe:
    """Baseline-normalized fringe.

    The two outermost histogram bins are dropped: with pairs accepted for
    |dT| <= window they only collect half a bin width of delays, so their
    counts sit near half the baseline.
    """

    delta_t: np.ndarray   # bin centers, s
    values: np.ndarray    # counts / baseline
    errors: np.ndarray    # sqrt(counts) / baseline (floored at 1 count)
    baseline: float       # mean wing counts per bin


@njit(cache=True)
def _correlate_kernel(a, b, counts, window_ps, bw_ps, half_bins):
    half_bw = bw_ps // 2
    j_lo = 0
    for i in range(a.size):
        t = a[i]
        lo = t - window_ps
        hi = t + window_ps
        while j_lo < b.size and b[j_lo] < lo:
            j_lo += 1
        j = j_lo
        while j < b.size and b[j] <= hi:
            d = b[j] - t
            if d >= 0:
                k = (d + half_bw) // bw_ps
            else:
                k = -((-d + half_bw) // bw_ps)
            counts[k + half_bins] += 1
            j += 1


def _check_sorted(name: str, events: np.ndarray):
    if events.size < 2:
        return
    bad = np.nonzero(np.diff(events) <= 0)[0]
    if bad.size:
        raise UnsortedEventsError(
            f"{name} not strictly increasing at index {int(bad[0]) + 1}"
        )


def correlate(events_a: np.ndarray, events_b: np.ndarray,
              spec: HistogramSpec = HistogramSpec(),
              duration: float | None = None) -> CoincidenceHistogram:
    """Histogram all pairs with |t_b - t_a| <= window (int64 ps inputs).

    Single pass with a sliding lower pointer: O(N_a + N_b + pairs).
    """
    a = np.ascontiguousarray(events_a, dtype=np.int64)
    b = np.ascontiguousarray(events_b, dtype=np.int64)
    _check_sorted("events_a", a)
    _check_sorted("events_b", b)
    counts = np.zeros(spec.n_bins, dtype=np.uint64)
    if a.size and b.size:
        _correlate_kernel(a, b, counts, np.int64(spec.window_ps),
                          np.int64(spec.bin_width_ps), np.int64(spec.half_bins))
    if duration is None:
        span_ps = 0
        if a.size or b.size:
            last = max(a[-1] if a.size else 0, b[-1] if b.size else 0)
            first = min(a[0] if a.size else last, b[0] if b.size else last)
            span_ps = last - first
        duration = span_ps / PS_PER_S
    return CoincidenceHistogram(
        spec=spec, counts=counts, singles_a=int(a.size), singles_b=int(b.size),
        duration=float(duration),
    )


def merge(h1: CoincidenceHistogram, h2: CoincidenceHistogram) -> CoincidenceHistogram:
    """Element-wise reduction of two same-spec histograms."""
    if h1.spec != h2.spec:
        raise SpecMismatchError(f"histogram specs differ: {h1.spec} vs {h2.spec}")
    return CoincidenceHistogram(
        spec=h1.spec,
        counts=h1.counts + h2.counts,
        singles_a=h1.singles_a + h2.singles_a,
        singles_b=h1.singles_b + h2.singles_b,
        duration=h1.duration + h2.duration,
    )


def normalize(h: CoincidenceHistogram,
              wing: tuple = None) -> NormalizedFringe:
    """Scale the histogram so the mean over the wing bins (both signs) is 1.

    ``wing`` is an (inner, outer) time range in seconds and must lie within
    [window/2, window]; default is that whole range.
    """
    spec = h.spec
    if wing is None:
        wing = (spec.window / 2.0, spec.window)
    inner, outer = wing
    if not (spec.window / 2.0 <= inner < outer <= spec.window * (1 + 1e-12)):
        raise ValueError(
            f"wing {wing} must lie within [window/2, window] = "
            f"[{spec.window / 2.0:g}, {spec.window:g}]"
        )
    # drop the half-covered outermost bins at dT = +/- window
    centers = spec.bin_centers[1:-1]
    mask = (np.abs(centers) >= inner) & (np.abs(centers) <= outer)
    n_wing = int(mask.sum())
    if n_wing < 100:
        raise ValueError(f"wing contains only {n_wing} bins; need >= 100")
    counts = h.counts[1:-1].astype(float)
    baseline = counts[mask].mean()
    if baseline <= 0.0:
        raise ValueError("zero baseline: no counts in the wing region")
    values = counts / baseline
    errors = np.sqrt(np.maximum(counts, 1.0)) / baseline
    return NormalizedFringe(delta_t=centers, values=values, errors=errors,
                            baseline=baseline)


@dataclass
class SinglesStats:
    rate: float           # counts/s
    min_gap: float        # s; inf for < 2 events
    violations: int       # gaps shorter than the detector dead time


def singles_stats(events: np.ndarray, spec: DetectorSpec,
                  duration: float | None = None) -> SinglesStats:
    """Rate and dead-time diagnostics of one channel (sorted int64 ps)."""
    events = np.asarray(events, dtype=np.int64)
    _check_sorted("events", events)
    if duration is None:
        duration = (events[-1] - events[0]) / PS_PER_S if events.size >= 2 else 0.0
    rate = events.size / duration if duration > 0 else 0.0
    if events.size < 2:
        return SinglesStats(rate=rate, min_gap=float("inf"), violations=0)
    gaps = np.diff(events)
    dead_ps = int(round(spec.dead_time * PS_PER_S))
    return SinglesStats(
        rate=rate,
        min_gap=float(gaps.min()) / PS_PER_S,
        violations=int(np.count_nonzero(gaps < dead_ps)),
    )


def write_histogram_csv(path, h: CoincidenceHistogram,
                        fringe: NormalizedFringe | None = None):
    """CSV rows (bin_center_ns, counts, normalized, error)."""
    centers_ns = h.spec.bin_centers * 1e9
    values = np.full(centers_ns.size, np.nan)
    errors = np.full(centers_ns.size, np.nan)
    if fringe is not None:
        # align on bin centers (normalize drops the two edge bins)
        lo = (centers_ns.size - fringe.values.size) // 2
        values[lo:lo + fringe.values.size] = fringe.values
        errors[lo:lo + fringe.errors.size] = fringe.errors
    data = np.column_stack([centers_ns, h.counts.astype(float), values, errors])
    np.savetxt(path, data, delimiter=",",
               header="bin_center_ns,counts,normalized,error", comments="")


def write_histogram_metadata(path, h: CoincidenceHistogram, extra: dict = None):
    """JSON sidecar carrying the spec, singles totals, and duration."""
    meta = {
        "bin_width_s": h.spec.bin_width,
        "window_s": h.spec.window,
        "n_bins": h.spec.n_bins,
        "singles_a": h.singles_a,
        "singles_b": h.singles_b,
        "duration_s": h.duration,
        "total_counts": int(h.counts.sum()),
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")

"""Monte Carlo synthesis of two phase-noisy CW lasers and photon detection.

Fields are complex baseband amplitudes relative to a shared optical
reference; only MHz-scale detunings survive, so a 2 ns sample step
oversamples every beat and linewidth scale by >50x.  Long runs are split
into fixed-length time segments with per-segment derived seeds so results
are independent of execution order (and can be farmed out to workers).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit

from .spectral import (
    FMTriangle,
    Gaussian,
    Lineshape,
    Lorentzian,
    Rectangular,
)

_LN2 = np.log(2.0)
PS_PER_S = 1_000_000_000_000


class ConfigurationError(ValueError):
    """An experiment configuration violates a sampling or range invariant."""


@dataclass(frozen=True)
class SourceSpec:
    """One laser arm: lineshape, detuning from the shared reference, flux."""

    lineshape: Lineshape
    mean_rate: float          # detected-photon flux at the BS input, counts/s
    detuning: float = 0.0     # Hz
    extra_delay: float = 0.0  # s, relative optical delay (fiber spool)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.mean_rate > 0.0:
            raise ConfigurationError(f"mean_rate must be > 0, got {self.mean_rate!r}")
        if self.extra_delay < 0.0:
            raise ConfigurationError("extra_delay must be >= 0")


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector: efficiency, non-paralyzable dead time, noise."""

    efficiency: float = 0.5
    dead_time: float = 22e-9      # s
    dark_rate: float = 100.0      # counts/s
    jitter_sigma: float = 0.35e-9  # s

    def __post_init__(self):
        if not (0.0 <= self.efficiency <= 1.0):
            raise ConfigurationError("efficiency must be in [0, 1]")
        if self.dead_time < 0.0 or self.dark_rate < 0.0 or self.jitter_sigma < 0.0:
            raise ConfigurationError("dead_time, dark_rate, jitter_sigma must be >= 0")


def spectral_extent(spec: SourceSpec) -> float:
    """Half-range (Hz) over which a source has appreciable spectral content."""
    ls = spec.lineshape
    if isinstance(ls, (Lorentzian, Gaussian)):
        ext = ls.fwhm
    elif isinstance(ls, Rectangular):
        ext = ls.width / 2.0
    elif isinstance(ls, FMTriangle):
        ext = ls.deviation / 2.0 + ls.intrinsic_fwhm
    else:
        raise TypeError(f"not a lineshape: {ls!r}")
    return abs(spec.detuning) + ext


def _sum_width(l1: Lineshape, l2: Lineshape) -> float:
    def w(ls):
        if isinstance(ls, (Lorentzian, Gaussian)):
            return ls.fwhm
        if isinstance(ls, Rectangular):
            return ls.width
        return ls.intrinsic_fwhm + ls.deviation
    return w(l1) + w(l2)


@dataclass(frozen=True)
class ExperimentConfig:
    source_1: SourceSpec
    source_2: SourceSpec
    detector_a: DetectorSpec = field(default_factory=DetectorSpec)
    detector_b: DetectorSpec = field(default_factory=DetectorSpec)
    mode_overlap: float = 1.0   # fraction of power in the common interfering mode
    duration: float = 1.0       # s
    sample_dt: float = 2e-9     # s
    segment_length: float = 0.01  # s; segments are seeded independently

    def __post_init__(self):
        if not (0.0 <= self.mode_overlap <= 1.0):
            raise ConfigurationError("mode_overlap must be in [0, 1]")
        if self.duration < 0.0:
            raise ConfigurationError("duration must be >= 0")
        if not self.sample_dt > 0.0 or not self.segment_length > 0.0:
            raise ConfigurationError("sample_dt and segment_length must be > 0")
        max_extent = max(spectral_extent(self.source_1), spectral_extent(self.source_2))
        extent_with_beat = max_extent + abs(
            self.source_1.detuning - self.source_2.detuning
        )
        if self.sample_dt > 1.0 / (50.0 * extent_with_beat):
            raise ConfigurationError(
                f"sample_dt {self.sample_dt:g} s too coarse: must be <= "
                f"{1.0 / (50.0 * extent_with_beat):g} s for a spectral extent of "
                f"{extent_with_beat:g} Hz"
            )
        fringe_width = 1.0 / (
            np.pi * _sum_width(self.source_1.lineshape, self.source_2.lineshape)
        )
        if self.duration != 0.0 and self.duration < 1000.0 * fringe_width:
            raise ConfigurationError(
                f"duration {self.duration:g} s < 1000x expected fringe width "
                f"{fringe_width:g} s"
            )


def instantaneous_detuning(lineshape: FMTriangle, t):
    """Triangular frequency sweep: zero-mean, peak-to-peak = deviation.

    Starts at 0 rising, peaks at a quarter period.
    """
    if not isinstance(lineshape, FMTriangle):
        raise TypeError(f"instantaneous_detuning requires FMTriangle, got {lineshape!r}")
    u = np.mod(np.asarray(t, dtype=float) * lineshape.mod_rate, 1.0)
    tri = np.where(u < 0.25, 4.0 * u, np.where(u < 0.75, 2.0 - 4.0 * u, 4.0 * u - 4.0))
    out = 0.5 * lineshape.deviation * tri
    return out if out.ndim else float(out)


def _triangle_phase(t, mod_rate: float, deviation: float):
    """Exact integral of the triangle sweep: phase in radians at times t."""
    period = 1.0 / mod_rate
    u = np.mod(np.asarray(t, dtype=float) * mod_rate, 1.0)
    # piecewise antiderivative of the unit triangle over one period
    g = np.where(
        u < 0.25,
        2.0 * u * u,
        np.where(u < 0.75, 2.0 * u - 2.0 * u * u - 0.25, 2.0 * (u - 1.0) ** 2),
    )
    return np.pi * deviation * period * g


def _phase_samples(spec: SourceSpec, n: int, dt: float, t0: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Phase trajectory phi(t) for n samples starting at absolute time t0.

    Deterministic terms (detuning, FM sweep) are evaluated at the delayed
    absolute time t - extra_delay; stochastic terms are freshly seeded per
    call (stationary, so the delay does not shift them).
    """
    t = t0 - spec.extra_delay + dt * np.arange(n)
    phi = (2.0 * np.pi * spec.detuning) * t
    ls = spec.lineshape
    if isinstance(ls, Lorentzian):
        steps = rng.normal(0.0, np.sqrt(2.0 * np.pi * ls.fwhm * dt), n)
        steps[0] = rng.uniform(0.0, 2.0 * np.pi)
        phi = phi + np.cumsum(steps)
    elif isinstance(ls, FMTriangle):
        phi = phi + _triangle_phase(t, ls.mod_rate, ls.deviation)
        steps = rng.normal(0.0, np.sqrt(2.0 * np.pi * ls.intrinsic_fwhm * dt), n)
        steps[0] = rng.uniform(0.0, 2.0 * np.pi)
        phi = phi + np.cumsum(steps)
    elif isinstance(ls, Gaussian):
        # quasi-static inhomogeneous model: one frequency draw per segment
        sigma = ls.fwhm / (2.0 * np.sqrt(2.0 * _LN2))
        offset = rng.normal(0.0, sigma)
        phi = phi + (2.0 * np.pi * offset) * t + rng.uniform(0.0, 2.0 * np.pi)
    elif isinstance(ls, Rectangular):
        offset = rng.uniform(-ls.width / 2.0, ls.width / 2.0)
        phi = phi + (2.0 * np.pi * offset) * t + rng.uniform(0.0, 2.0 * np.pi)
    else:
        raise TypeError(f"not a lineshape: {ls!r}")
    return phi


def synthesize_field(spec: SourceSpec, duration: float, dt: float, seed,
                     t0: float = 0.0) -> np.ndarray:
    """Unit-magnitude complex baseband samples e^{i phi(t)} of one source.

    Gaussian and Rectangular lines are realized quasi-statically (a single
    frequency draw per call); their spectra emerge from averaging over many
    independently seeded segments.
    """
    n = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    return np.exp(1j * _phase_samples(spec, n, dt, t0, rng))


def beamsplit(field_1: np.ndarray, field_2: np.ndarray, mode_overlap: float,
              rates) -> tuple:
    """Mix two fields on a lossless 50:50 splitter; returns intensities (cps).

    A (1 - mode_overlap) fraction of each input's power takes the same split
    without cross-interference (scalar model of polarization/spatial
    mismatch).  The two outputs sum to r1 + r2 at every sample.
    """
    if field_1.shape != field_2.shape:
        raise ValueError(
            f"field length mismatch: {field_1.shape} vs {field_2.shape}"
        )
    r1, r2 = rates
    a1 = np.sqrt(r1) * field_1
    a2 = np.sqrt(r2) * field_2
    o = mode_overlap
    passive = 0.5 * (1.0 - o) * (r1 * np.abs(field_1) ** 2 + r2 * np.abs(field_2) ** 2)
    out_a = passive + 0.5 * o * np.abs(a1 + 1j * a2) ** 2
    out_b = passive + 0.5 * o * np.abs(1j * a1 + a2) ** 2
    return out_a, out_b


@njit(cache=True)
def _dead_time_filter(ts: np.ndarray, dead_ps: np.int64) -> np.ndarray:
    """Non-paralyzable dead time on a sorted int64-ps stream."""
    keep = np.empty(ts.size, dtype=np.bool_)
    last = np.int64(-1) - dead_ps
    for i in range(ts.size):
        t = ts[i]
        if t - last >= dead_ps and t != last:
            keep[i] = True
            last = t
        else:
            keep[i] = False
    return keep


def _detect_candidates(intensity: np.ndarray, dt: float, spec: DetectorSpec,
                       rng: np.random.Generator, t0: float = 0.0) -> np.ndarray:
    """Thinned inhomogeneous Poisson events (jittered, sorted, int64 ps).

    Dead-time filtering is NOT applied here; the caller filters once after
    all segments are merged so the filter sees the global stream.
    """
    if intensity.size == 0:
        return np.empty(0, dtype=np.int64)
    rate_max = spec.efficiency * float(intensity.max()) + spec.dark_rate
    span = intensity.size * dt
    if rate_max <= 0.0:
        return np.empty(0, dtype=np.int64)
    n_cand = rng.poisson(rate_max * span)
    times = rng.uniform(0.0, span, n_cand)
    idx = np.minimum((times / dt).astype(np.int64), intensity.size - 1)
    lam = spec.efficiency * intensity[idx] + spec.dark_rate
    accept = rng.uniform(0.0, rate_max, n_cand) < lam
    times = times[accept]
    if spec.jitter_sigma > 0.0:
        times = times + rng.normal(0.0, spec.jitter_sigma, times.size)
    ts = np.round((times + t0) * PS_PER_S).astype(np.int64)
    ts = ts[ts >= 0]
    ts.sort()
    return ts


def detect(intensity: np.ndarray, dt: float, spec: DetectorSpec, seed,
           t0: float = 0.0) -> np.ndarray:
    """Detect photons from an intensity stream (counts/s) on one channel.

    Returns strictly increasing int64 timestamps in picoseconds:
    Poisson thinning at efficiency*intensity + dark_rate, uniform placement
    within each sample, Gaussian timing jitter, then non-paralyzable
    dead-time filtering.
    """
    if np.any(intensity < 0.0):
        raise ValueError("intensity must be nonnegative everywhere")
    rng = np.random.default_rng(seed)
    ts = _detect_candidates(intensity, dt, spec, rng, t0=t0)
    dead_ps = np.int64(round(spec.dead_time * PS_PER_S))
    return ts[_dead_time_filter(ts, dead_ps)]


@dataclass
class ExperimentResult:
    events_a: np.ndarray  # int64 ps, strictly increasing
    events_b: np.ndarray
    metadata: dict


def _segment_seed(cfg: ExperimentConfig, seg: int, stream: int):
    return np.random.SeedSequence(
        [cfg.source_1.rng_seed, cfg.source_2.rng_seed, seg, stream]
    )


def _run_segment(cfg: ExperimentConfig, seg: int, n: int, t0: float):
    """Synthesize + detect one time segment; returns unfiltered candidates."""
    dt = cfg.sample_dt
    rng1 = np.random.default_rng(_segment_seed(cfg, seg, 0))
    rng2 = np.random.default_rng(_segment_seed(cfg, seg, 1))
    phi1 = _phase_samples(cfg.source_1, n, dt, t0, rng1)
    phi2 = _phase_samples(cfg.source_2, n, dt, t0, rng2)
    # mean_rate is the expected *detected* flux at the BS input, so the
    # optical intensity is scaled up by the mean detector efficiency
    eff_avg = 0.5 * (cfg.detector_a.efficiency + cfg.detector_b.efficiency)
    scale = 1.0 / eff_avg if eff_avg > 0.0 else 1.0
    r1 = cfg.source_1.mean_rate * scale
    r2 = cfg.source_2.mean_rate * scale
    # |e| = 1, so the splitter output reduces to a single beat quadrature
    beat = cfg.mode_overlap * np.sqrt(r1 * r2) * np.sin(phi2 - phi1)
    base = 0.5 * (r1 + r2)
    intensity_a = base - beat
    intensity_b = base + beat
    rng_a = np.random.default_rng(_segment_seed(cfg, seg, 2))
    rng_b = np.random.default_rng(_segment_seed(cfg, seg, 3))
    cand_a = _detect_candidates(intensity_a, dt, cfg.detector_a, rng_a, t0=t0)
    cand_b = _detect_candidates(intensity_b, dt, cfg.detector_b, rng_b, t0=t0)
    return cand_a, cand_b


def _segment_plan(cfg: ExperimentConfig):
    n_total = int(round(cfg.duration / cfg.sample_dt))
    per_seg = max(int(round(cfg.segment_length / cfg.sample_dt)), 1)
    plan = []
    start = 0
    seg = 0
    while start < n_total:
        n = min(per_seg, n_total - start)
        plan.append((seg, n, start * cfg.sample_dt))
        start += n
        seg += 1
    return plan


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Full pipeline: synthesize both arms, mix, detect on both channels.

    Deterministic for a given configuration (seeds included) regardless of
    ``threads``; segments are seeded independently and merged by index.
    """
    plan = _segment_plan(cfg)
    if threads > 1 and len(plan) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    _run_segment,
                    [cfg] * len(plan),
                    [p[0] for p in plan],
                    [p[1] for p in plan],
                    [p[2] for p in plan],
                    chunksize=max(len(plan) // (4 * threads), 1),
                )
            )
    else:
        parts = [_run_segment(cfg, seg, n, t0) for seg, n, t0 in plan]

    def merge(channel_idx, det: DetectorSpec):
        if parts:
            ts = np.concatenate([p[channel_idx] for p in parts])
        else:
            ts = np.empty(0, dtype=np.int64)
        ts.sort(kind="stable")
        dead_ps = np.int64(round(det.dead_time * PS_PER_S))
        return ts[_dead_time_filter(ts, dead_ps)]

    events_a = merge(0, cfg.detector_a)
    events_b = merge(1, cfg.detector_b)
    duration = cfg.duration
    meta = {
        "duration_s": duration,
        "singles_rate_a": events_a.size / duration if duration > 0 else 0.0,
        "singles_rate_b": events_b.size / duration if duration > 0 else 0.0,
        "n_segments": len(plan),
        "config": config_to_dict(cfg),
    }
    return ExperimentResult(events_a=events_a, events_b=events_b, metadata=meta)


def lineshape_to_dict(ls: Lineshape) -> dict:
    kind = {Lorentzian: "lorentzian", Rectangular: "rectangular",
            Gaussian: "gaussian", FMTriangle: "fm_triangle"}[type(ls)]
    return {"kind": kind, **asdict(ls)}


def lineshape_from_dict(d: dict) -> Lineshape:
    kinds = {"lorentzian": Lorentzian, "rectangular": Rectangular,
             "gaussian": Gaussian, "fm_triangle": FMTriangle}
    d = dict(d)
    kind = d.pop("kind")
    if kind not in kinds:
        raise ConfigurationError(
            f"unknown lineshape kind {kind!r}; expected one of {sorted(kinds)}"
        )
    return kinds[kind](**d)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["source_1"]["lineshape"] = lineshape_to_dict(cfg.source_1.lineshape)
    out["source_2"]["lineshape"] = lineshape_to_dict(cfg.source_2.lineshape)
    return out


def config_from_dict(d: dict) -> ExperimentConfig:
    d = {k: dict(v) if isinstance(v, dict) else v for k, v in d.items()}
    for key in ("source_1", "source_2"):
        src = d[key]
        src["lineshape"] = lineshape_from_dict(src["lineshape"])
        d[key] = SourceSpec(**src)
    for key in ("detector_a", "detector_b"):
        if key in d:
            d[key] = DetectorSpec(**d[key])
    return ExperimentConfig(**d)

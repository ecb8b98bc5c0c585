"""Analytic coherence math for CW two-photon interference.

Lineshape models for the two laser arms, their first-order field
autocorrelations g1(tau), the mutual coherence envelope of a source pair,
and the coincidence-probability fringe

    P(dT) = 1 - V * Gamma12(dT) * cos(d_omega * dT)

normalized so the long-delay baseline is 1.  A numeric Fourier transform of
a sampled spectrum is provided as an independent cross-check of the closed
forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class AdiabaticLimitError(ValueError):
    """FM modulation too fast for the quasi-static spectrum formula."""


class MetricUnavailableError(RuntimeError):
    """Requested fringe metric does not exist for this model."""


class InsufficientSpanError(ValueError):
    """Sampled spectrum does not cover enough bandwidth for the transform."""


def _require_positive(name, value):
    if not (value > 0.0 and np.isfinite(value)):
        raise ValueError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian optical power spectrum (phase-diffusing laser)."""

    fwhm: float  # Hz

    def __post_init__(self):
        _require_positive("fwhm", self.fwhm)


@dataclass(frozen=True)
class Rectangular:
    """Flat-top spectrum of the given full width."""

    width: float  # Hz

    def __post_init__(self):
        _require_positive("width", self.width)


@dataclass(frozen=True)
class Gaussian:
    """Gaussian spectrum parameterized by its FWHM."""

    fwhm: float  # Hz

    def __post_init__(self):
        _require_positive("fwhm", self.fwhm)


@dataclass(frozen=True)
class FMTriangle:
    """Laser with intrinsic Lorentzian linewidth plus slow triangular FM.

    The quasi-static (adiabatic) spectrum is a rectangular frequency-dwell
    window of full width ``deviation`` (peak-to-peak excursion) convolved
    with the intrinsic Lorentzian.  The closed forms below are only valid
    when the sweep is slow, mod_rate <= deviation / 100.
    """

    intrinsic_fwhm: float  # Hz
    mod_rate: float        # Hz
    deviation: float       # Hz, peak-to-peak

    def __post_init__(self):
        _require_positive("intrinsic_fwhm", self.intrinsic_fwhm)
        _require_positive("mod_rate", self.mod_rate)
        _require_positive("deviation", self.deviation)

    def check_adiabatic(self):
        if self.mod_rate > self.deviation / 100.0:
            raise AdiabaticLimitError(
                f"mod_rate {self.mod_rate:g} Hz exceeds deviation/100 = "
                f"{self.deviation / 100.0:g} Hz; quasi-static spectrum invalid"
            )


Lineshape = Union[Lorentzian, Rectangular, Gaussian, FMTriangle]

_LN2 = np.log(2.0)


def g1(lineshape: Lineshape, tau):
    """Normalized first-order field autocorrelation of a zero-centered line.

    Accepts a scalar or array of lags (seconds); even in tau, g1(0) = 1.
    """
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite")
    if isinstance(lineshape, Lorentzian):
        out = np.exp(-np.pi * lineshape.fwhm * np.abs(tau))
    elif isinstance(lineshape, Rectangular):
        # np.sinc(x) = sin(pi x)/(pi x)
        out = np.sinc(lineshape.width * tau)
    elif isinstance(lineshape, Gaussian):
        out = np.exp(-((np.pi * lineshape.fwhm * tau) ** 2) / (4.0 * _LN2))
    elif isinstance(lineshape, FMTriangle):
        lineshape.check_adiabatic()
        out = np.sinc(lineshape.deviation * tau) * np.exp(
            -np.pi * lineshape.intrinsic_fwhm * np.abs(tau)
        )
    else:
        raise TypeError(f"not a lineshape: {lineshape!r}")
    return out if out.ndim else float(out)


def lineshape_psd(lineshape: Lineshape, f):
    """Unit-area power spectral density (1/Hz) at frequency offset f."""
    f = np.asarray(f, dtype=float)
    if isinstance(lineshape, Lorentzian):
        hw = lineshape.fwhm / 2.0
        out = (hw / np.pi) / (f * f + hw * hw)
    elif isinstance(lineshape, Rectangular):
        out = np.where(np.abs(f) <= lineshape.width / 2.0, 1.0 / lineshape.width, 0.0)
    elif isinstance(lineshape, Gaussian):
        sigma = lineshape.fwhm / (2.0 * np.sqrt(2.0 * _LN2))
        out = np.exp(-0.5 * (f / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
    elif isinstance(lineshape, FMTriangle):
        lineshape.check_adiabatic()
        # rectangular dwell window convolved with the intrinsic Lorentzian
        hw = lineshape.intrinsic_fwhm / 2.0
        half = lineshape.deviation / 2.0
        out = (np.arctan((f + half) / hw) - np.arctan((f - half) / hw)) / (
            np.pi * lineshape.deviation
        )
    else:
        raise TypeError(f"not a lineshape: {lineshape!r}")
    return out if out.ndim else float(out)


def mutual_coherence(l1: Lineshape, l2: Lineshape, tau, signed: bool = False):
    """Mutual coherence of two independent sources at lag tau.

    By default the nonnegative envelope |g1(l1) * g1(l2)| is returned; the
    signed product (which flips sign at sinc zeros of a rectangular-spectrum
    source) is available with ``signed=True``.
    """
    prod = g1(l1, tau) * g1(l2, tau)
    if signed:
        return prod
    return np.abs(prod) if np.ndim(prod) else abs(prod)


@dataclass(frozen=True)
class FringeModel:
    """Fully specified coincidence-fringe model.

    ``classical`` marks the model as describing classical light, whose dip
    visibility cannot exceed 0.5; construction enforces the bound.
    ``signed_gamma`` selects the signed mutual-coherence product instead of
    its envelope.
    """

    visibility: float
    lineshape_1: Lineshape
    lineshape_2: Lineshape
    delta_omega: float = 0.0  # rad/s
    classical: bool = False
    signed_gamma: bool = False

    def __post_init__(self):
        if not (0.0 <= self.visibility <= 1.0):
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility!r}")
        if self.classical and self.visibility > 0.5:
            raise ValueError(
                f"classical model cannot have visibility {self.visibility} > 0.5"
            )
        if not np.isfinite(self.delta_omega):
            raise ValueError("delta_omega must be finite")

    def gamma(self, tau):
        return mutual_coherence(
            self.lineshape_1, self.lineshape_2, tau, signed=self.signed_gamma
        )


def coincidence_probability(model: FringeModel, delta_t):
    """Normalized coincidence probability 1 - V * Gamma * cos(dw * dT).

    The long-delay baseline is 1; values lie in [1 - V, 1 + V].
    """
    delta_t = np.asarray(delta_t, dtype=float)
    out = 1.0 - model.visibility * model.gamma(delta_t) * np.cos(
        model.delta_omega * delta_t
    )
    return out if out.ndim else float(out)


_METRIC_SEARCH_WINDOW = 10e-6  # s
_BISECTION_TOL = 1e-12         # s


def _first_crossing(gamma_fn, level: float) -> float:
    """First tau > 0 where gamma drops through ``level``, to 1 ps."""
    # coarse scan then bisection; 0.1 ns steps cannot skip features of
    # any physically sensible (sub-100 MHz) lineshape
    taus = np.arange(0.0, _METRIC_SEARCH_WINDOW, 1e-10)
    vals = np.asarray(gamma_fn(taus))
    below = np.nonzero(vals < level)[0]
    if below.size == 0:
        raise MetricUnavailableError(
            f"no crossing of level {level:g} within {_METRIC_SEARCH_WINDOW:g} s"
        )
    hi = taus[below[0]]
    lo = taus[below[0] - 1] if below[0] > 0 else 0.0
    while hi - lo > _BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if gamma_fn(mid) < level:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FringeMetrics:
    depth: float                 # fringe depth at dT = 0 (equals V)
    dip_fwhm: float              # FWHM of 1 - V*Gamma against half depth, s
    gamma_inv_e_half_width: float  # first tau with Gamma = 1/e, s
    beat_nodes: tuple            # first +/- nodes of cos(dw * dT), s; empty if dw == 0


def fringe_metrics(model: FringeModel) -> FringeMetrics:
    """Characteristic widths of the dip envelope 1 - V * Gamma(dT)."""
    if model.visibility <= 0.0:
        raise MetricUnavailableError("flat fringe (V = 0) has no width")

    def envelope(tau):
        return mutual_coherence(model.lineshape_1, model.lineshape_2, tau)

    half = _first_crossing(envelope, 0.5)
    inv_e = _first_crossing(envelope, 1.0 / np.e)
    if model.delta_omega != 0.0:
        node = np.pi / (2.0 * abs(model.delta_omega))
        nodes = (-node, node)
    else:
        nodes = ()
    return FringeMetrics(
        depth=model.visibility,
        dip_fwhm=2.0 * half,
        gamma_inv_e_half_width=inv_e,
        beat_nodes=nodes,
    )


# The numeric transform below is only a test oracle for the closed-form g1
# expressions.  A +/-110 MHz span leaves ~7e-3 of a MHz-scale Lorentzian's
# area in the truncated tails, so the default grid is much wider.
DEFAULT_ORACLE_SPAN = 1.76e9   # Hz, half-range
DEFAULT_ORACLE_POINTS = 2**22


def default_psd_grid(lineshape: Lineshape,
                     span: float = DEFAULT_ORACLE_SPAN,
                     n: int = DEFAULT_ORACLE_POINTS):
    """Uniform frequency grid and PSD samples for ``psd_to_g1_numeric``."""
    f = (np.arange(n) - n // 2) * (2.0 * span / n)
    return f, lineshape_psd(lineshape, f)


def psd_to_g1_numeric(freqs: np.ndarray, psd: np.ndarray):
    """Discrete Fourier transform of a sampled unit-area PSD.

    Returns ``(tau, g1_samples)`` on the conjugate time grid, normalized to
    1 at zero lag.  Requires the grid to span at least 20x the sampled
    line's FWHM and to carry unit area to 1e-3.
    """
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    if freqs.shape != psd.shape or freqs.ndim != 1 or freqs.size < 16:
        raise ValueError("freqs and psd must be equal-length 1-d arrays")
    df = freqs[1] - freqs[0]
    if not np.allclose(np.diff(freqs), df, rtol=1e-9, atol=0.0):
        raise ValueError("frequency grid must be uniform")

    span = freqs[-1] - freqs[0]
    half_max = psd.max() / 2.0
    above = np.nonzero(psd >= half_max)[0]
    fwhm_est = max(freqs[above[-1]] - freqs[above[0]], df)
    if span < 20.0 * fwhm_est:
        raise InsufficientSpanError(
            f"grid span {span:g} Hz < 20x estimated line width {fwhm_est:g} Hz"
        )
    area = np.trapezoid(psd, freqs)
    if abs(area - 1.0) > 1e-3:
        raise InsufficientSpanError(
            f"sampled PSD area {area:.6f} deviates from 1 by more than 1e-3"
        )

    n = freqs.size
    # place f = 0 at index 0, transform, and shift back to centered time
    g = np.fft.ifft(np.fft.ifftshift(psd)) * n * df
    tau = np.fft.fftshift(np.fft.fftfreq(n, d=df))
    g = np.fft.fftshift(g).real
    g0 = g[n // 2]
    if g0 <= 0.0:
        raise InsufficientSpanError("transform has non-positive zero-lag value")
    return tau, g / g0


def dump_psd_csv(path, freqs, psd):
    """Two-column CSV (frequency_Hz, density_per_Hz) of a sampled spectrum."""
    data = np.column_stack([freqs, psd])
    np.savetxt(path, data, delimiter=",", header="frequency_Hz,density_per_Hz",
               comments="")

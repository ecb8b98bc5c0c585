"""Parameter extraction: fringe fitting, beat spectra, model comparison.

The fringe fit is a weighted nonlinear least squares of

    N(dT) = baseline * [1 - V * Gamma(dT) * cos(d_omega * dT)]

with Gamma either a free-decay-time exponential ("effective-lorentzian"),
the closed-form product of two fixed lineshapes ("physical"), or the same
with the lineshape widths free ("physical-free").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.optimize import least_squares

from . import spectral
from .correlator import NormalizedFringe
from .spectral import FMTriangle, Gaussian, Lineshape, Lorentzian, Rectangular

GAMMA_FORMS = ("effective-lorentzian", "physical", "physical-free")


class FitError(RuntimeError):
    pass


class NonConvergenceError(FitError):
    pass


class RankDeficientError(FitError):
    """One or more parameters are unidentifiable from the data."""


class TooFewSegmentsError(ValueError):
    pass


class AmbiguousSpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class FitModel:
    """Choice of coherence envelope and free parameters for fit_hom.

    V is always free.  delta_omega and baseline are free unless fixed here;
    the physical forms need both lineshapes.
    """

    gamma_form: str = "effective-lorentzian"
    lineshape_1: Lineshape | None = None
    lineshape_2: Lineshape | None = None
    fit_delta_omega: bool = True
    fixed_delta_omega: float = 0.0  # rad/s, used when fit_delta_omega is False
    fit_baseline: bool = True
    signed_gamma: bool = False

    def __post_init__(self):
        if self.gamma_form not in GAMMA_FORMS:
            raise ValueError(
                f"gamma_form {self.gamma_form!r} not one of {GAMMA_FORMS}"
            )
        if self.gamma_form != "effective-lorentzian" and (
            self.lineshape_1 is None or self.lineshape_2 is None
        ):
            raise ValueError(f"{self.gamma_form} fit requires both lineshapes")


@dataclass(frozen=True)
class FitParameter:
    value: float
    sigma: float


@dataclass
class HomFit:
    """Converged fit result; uncertainties are 1-sigma from the Jacobian."""

    gamma_form: str
    params: dict              # name -> FitParameter
    delta_omega_sign: int     # +1/-1; magnitude is in params["delta_omega_abs"]
    reduced_chi2: float
    residuals: np.ndarray = field(repr=False)
    converged: bool = True
    n_points: int = 0

    @property
    def visibility(self) -> FitParameter:
        return self.params["visibility"]

    def to_dict(self) -> dict:
        return {
            "gamma_form": self.gamma_form,
            "params": {k: {"value": p.value, "sigma": p.sigma}
                       for k, p in sorted(self.params.items())},
            "delta_omega_sign": self.delta_omega_sign,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "n_points": self.n_points,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _scale_lineshape(ls: Lineshape, s: float) -> Lineshape:
    if isinstance(ls, Lorentzian):
        return Lorentzian(ls.fwhm * s)
    if isinstance(ls, Gaussian):
        return Gaussian(ls.fwhm * s)
    if isinstance(ls, Rectangular):
        return Rectangular(ls.width * s)
    return FMTriangle(ls.intrinsic_fwhm * s, ls.mod_rate, ls.deviation * s)


def rebin_fringe(fringe: NormalizedFringe, factor: int) -> NormalizedFringe:
    """Aggregate adjacent bins; used when per-bin counts are too low for
    the Gaussian error approximation."""
    n = (fringe.values.size // factor) * factor
    counts = fringe.values[:n] * fringe.baseline
    blocks = counts.reshape(-1, factor).sum(axis=1)
    delta_t = fringe.delta_t[:n].reshape(-1, factor).mean(axis=1)
    baseline = fringe.baseline * factor
    return NormalizedFringe(
        delta_t=delta_t,
        values=blocks / baseline,
        errors=np.sqrt(np.maximum(blocks, 1.0)) / baseline,
        baseline=baseline,
    )


def _auto_init(fringe: NormalizedFringe, want_delta_omega: bool):
    t = fringe.delta_t
    v = fringe.values
    wing = np.abs(t) >= 0.75 * np.abs(t).max()
    baseline0 = float(v[wing].mean())
    v0 = float(np.clip(baseline0 - v.min(), 1e-3, 1.0))
    # 1/e crossing of the smoothed dip magnitude gives the decay-time guess
    dip = np.abs(baseline0 - v)
    k = min(9, max(3, dip.size // 100) | 1)
    smooth = np.convolve(dip, np.ones(k) / k, mode="same")
    center = np.argmin(np.abs(t))
    tail = smooth[center:] < v0 / np.e
    tau_c0 = float(t[center:][np.argmax(tail)]) if tail.any() else abs(t).max() / 10.0
    if tau_c0 <= 0.0:
        tau_c0 = abs(t).max() / 10.0
    d_omega0 = 0.0
    if want_delta_omega:
        sel = np.abs(t) <= 4.0 * tau_c0
        if sel.sum() >= 8:
            sig = baseline0 - v[sel]
            dt_bin = t[1] - t[0]
            spec_mag = np.abs(np.fft.rfft(sig - sig.mean()))
            freqs = np.fft.rfftfreq(sig.size, d=dt_bin)
            d_omega0 = 2.0 * np.pi * float(freqs[np.argmax(spec_mag)])
    return baseline0, v0, tau_c0, d_omega0


def fit_hom(fringe: NormalizedFringe, model: FitModel = FitModel(),
            init: dict | None = None) -> HomFit:
    """Weighted least-squares fit of the coincidence fringe.

    ``init`` may override the automatic starting values with any of the
    parameter names (visibility, tau_c, width_scale_1, width_scale_2,
    delta_omega, baseline).
    """
    if fringe.baseline < 10.0:
        fringe = rebin_fringe(fringe, 4)

    names = ["visibility"]
    if model.gamma_form == "effective-lorentzian":
        names.append("tau_c")
    elif model.gamma_form == "physical-free":
        names += ["width_scale_1", "width_scale_2"]
    if model.fit_delta_omega:
        names.append("delta_omega")
    if model.fit_baseline:
        names.append("baseline")

    n_free = len(names)
    if fringe.values.size < 10 * n_free:
        raise FitError(
            f"{fringe.values.size} bins is fewer than 10x the {n_free} free "
            "parameters"
        )

    t = fringe.delta_t
    values = fringe.values
    weights = 1.0 / fringe.errors
    bin_width = float(t[1] - t[0])
    omega_max = 2.0 * np.pi / (2.0 * bin_width)

    baseline0, v0, tau_c0, d_omega0 = _auto_init(fringe, model.fit_delta_omega)
    defaults = {
        "visibility": v0,
        "tau_c": tau_c0,
        "width_scale_1": 1.0,
        "width_scale_2": 1.0,
        "delta_omega": min(abs(d_omega0), omega_max * 0.99),
        "baseline": baseline0,
    }
    if init:
        unknown = set(init) - set(defaults)
        if unknown:
            raise ValueError(f"unknown init parameters: {sorted(unknown)}")
        defaults.update(init)
    x0 = np.array([defaults[n] for n in names])

    bounds_lo = {"visibility": 0.0, "tau_c": 1e-12, "width_scale_1": 1e-3,
                 "width_scale_2": 1e-3, "delta_omega": -omega_max,
                 "baseline": 1e-6 * baseline0}
    bounds_hi = {"visibility": 1.0, "tau_c": 1e-3, "width_scale_1": 1e3,
                 "width_scale_2": 1e3, "delta_omega": omega_max,
                 "baseline": 1e6 * baseline0}
    lo = np.array([bounds_lo[n] for n in names])
    hi = np.array([bounds_hi[n] for n in names])
    x0 = np.clip(x0, lo + 1e-15, hi - 1e-15)

    abs_t = np.abs(t)

    def gamma_of(p):
        if model.gamma_form == "effective-lorentzian":
            return np.exp(-abs_t / p["tau_c"])
        if model.gamma_form == "physical":
            return spectral.mutual_coherence(
                model.lineshape_1, model.lineshape_2, t, signed=model.signed_gamma
            )
        l1 = _scale_lineshape(model.lineshape_1, p["width_scale_1"])
        l2 = _scale_lineshape(model.lineshape_2, p["width_scale_2"])
        return spectral.mutual_coherence(l1, l2, t, signed=model.signed_gamma)

    def solve(active_names, fixed_domega):
        def residuals(x):
            p = dict(zip(active_names, x))
            p.setdefault("delta_omega", fixed_domega)
            p.setdefault("baseline", 1.0)
            pred = p["baseline"] * (
                1.0 - p["visibility"] * gamma_of(p) * np.cos(p["delta_omega"] * t)
            )
            return (values - pred) * weights

        sel = [names.index(n) for n in active_names]
        res = least_squares(residuals, x0[sel], bounds=(lo[sel], hi[sel]),
                            method="trf", xtol=1e-8, ftol=1e-12, gtol=1e-12,
                            max_nfev=200 * (len(active_names) + 1))
        if res.status == 0:
            raise NonConvergenceError(
                f"fit did not converge within 200 iterations (cost {res.cost:g})"
            )
        _, sv, vt = np.linalg.svd(res.jac, full_matrices=False)
        if sv[0] == 0.0 or sv[-1] / sv[0] < 1e-10:
            worst = active_names[int(np.argmax(np.abs(vt[-1])))]
            return res, None, worst
        cov = (vt.T / sv**2) @ vt
        return res, np.sqrt(np.diag(cov)), None

    domega_pinned = False
    active = list(names)

    def solve_with_fallback():
        nonlocal domega_pinned, active
        fixed = 0.0 if domega_pinned else model.fixed_delta_omega
        res, sigmas, degenerate = solve(active, fixed)
        if degenerate == "delta_omega" and not domega_pinned:
            # cos is flat at the origin, so a true beat of zero makes the
            # beat parameter locally unidentifiable; pin it at 0 if the dip
            # itself is significant, otherwise the model is indeterminate
            active = [n for n in names if n != "delta_omega"]
            domega_pinned = True
            res, sigmas, degenerate = solve(active, 0.0)
            if sigmas is not None:
                v_idx = active.index("visibility")
                if res.x[v_idx] < 5.0 * sigmas[v_idx]:
                    raise RankDeficientError(
                        "parameter 'delta_omega' is unidentifiable: fringe "
                        "depth is consistent with zero"
                    )
        if degenerate is not None:
            raise RankDeficientError(
                f"parameter {degenerate!r} is unidentifiable from this fringe"
            )
        return res, sigmas

    res, sigmas = solve_with_fallback()

    # second pass with errors taken from the fitted model instead of the
    # observed counts: observed-count weighting biases every parameter low
    # by ~1/counts-per-bin, which matters at low statistics
    p = dict(zip(active, res.x))
    p.setdefault("delta_omega", 0.0 if domega_pinned else model.fixed_delta_omega)
    p.setdefault("baseline", 1.0)
    pred = p["baseline"] * (
        1.0 - p["visibility"] * gamma_of(p) * np.cos(p["delta_omega"] * t)
    )
    weights[:] = fringe.baseline / np.sqrt(
        np.maximum(pred * fringe.baseline, 1.0)
    )
    for name, val in zip(active, res.x):
        x0[names.index(name)] = val
    res, sigmas = solve_with_fallback()

    params = {}
    d_omega_sign = 1
    for name, val, sig in zip(active, res.x, sigmas):
        if name == "delta_omega":
            d_omega_sign = -1 if val < 0 else 1
            params["delta_omega_abs"] = FitParameter(abs(float(val)), float(sig))
        else:
            params[name] = FitParameter(float(val), float(sig))
    if domega_pinned or not model.fit_delta_omega:
        fixed = 0.0 if domega_pinned else model.fixed_delta_omega
        params["delta_omega_abs"] = FitParameter(abs(fixed), 0.0)
        d_omega_sign = -1 if fixed < 0 else 1

    dof = max(values.size - len(active), 1)
    return HomFit(
        gamma_form=model.gamma_form,
        params=params,
        delta_omega_sign=d_omega_sign,
        reduced_chi2=float(np.sum(res.fun**2) / dof),
        residuals=res.fun,
        converged=True,
        n_points=int(values.size),
    )


@dataclass
class BeatSpectrum:
    frequency: np.ndarray  # Hz, centered grid
    density: np.ndarray    # 1/Hz


def beat_psd(field_1: np.ndarray, field_2: np.ndarray, dt: float,
             segment_length: int = 1 << 14,
             overlap: float = 0.5) -> BeatSpectrum:
    """Welch (Hann window) spectral density of the two-field beat signal.

    The beat is e1 * conj(e2); its spectrum is the convolution of the two
    optical spectra, offset by the detuning difference.
    """
    if field_1.shape != field_2.shape:
        raise ValueError("field streams must have equal length")
    step = segment_length - int(overlap * segment_length)
    n_segments = 1 + max(field_1.size - segment_length, 0) // max(step, 1)
    if field_1.size < segment_length or n_segments < 20:
        raise TooFewSegmentsError(
            f"only {n_segments} Welch segments; need >= 20 for variance control"
        )
    x = field_1 * np.conj(field_2)
    freqs, psd = signal.welch(
        x, fs=1.0 / dt, window="hann", nperseg=segment_length,
        noverlap=int(overlap * segment_length), detrend=False,
        return_onesided=False, scaling="density",
    )
    return BeatSpectrum(frequency=np.fft.fftshift(freqs),
                        density=np.fft.fftshift(psd.real))


@dataclass
class SpectralWidth:
    fwhm: float            # Hz
    edge_steepness: float  # width at 90% over width at 10% of peak


def _level_width(freq, dens, level):
    above = dens >= level
    idx = np.nonzero(above)[0]
    lo_i, hi_i = idx[0], idx[-1]
    if lo_i > 0:
        f_lo = np.interp(level, [dens[lo_i - 1], dens[lo_i]],
                         [freq[lo_i - 1], freq[lo_i]])
    else:
        f_lo = freq[0]
    if hi_i < dens.size - 1:
        f_hi = np.interp(level, [dens[hi_i + 1], dens[hi_i]],
                         [freq[hi_i + 1], freq[hi_i]])
    else:
        f_hi = freq[-1]
    return f_hi - f_lo


def psd_width(spectrum: BeatSpectrum, smooth_bins: int = 5) -> SpectralWidth:
    """FWHM by linear interpolation at half maximum, plus a flat-top
    diagnostic (ratio of the 90%- and 10%-level widths; ~1 for a rectangle,
    ~0.11 for a Lorentzian)."""
    dens = spectrum.density
    if smooth_bins > 1:
        k = smooth_bins | 1
        dens = np.convolve(dens, np.ones(k) / k, mode="same")
    peak = dens.max()
    above = dens >= peak / 2.0
    # merge sub-5-bin noise gaps before declaring multiple lobes
    idx = np.nonzero(above)[0]
    gaps = np.diff(idx)
    if np.any(gaps > 5):
        raise AmbiguousSpectrumError(
            "spectrum has multiple lobes above half maximum"
        )
    return SpectralWidth(
        fwhm=float(_level_width(spectrum.frequency, dens, peak / 2.0)),
        edge_steepness=float(
            _level_width(spectrum.frequency, dens, 0.9 * peak)
            / _level_width(spectrum.frequency, dens, 0.1 * peak)
        ),
    )


@dataclass
class ModelComparison:
    reduced_chi2: float
    max_abs_z: float
    z_scores: np.ndarray = field(repr=False)


def mc_vs_analytic(fringe: NormalizedFringe,
                   model: spectral.FringeModel) -> ModelComparison:
    """Per-bin z-scores of a Monte Carlo fringe against a fully specified
    analytic model (no free parameters).

    Errors come from the model prediction (Pearson residuals) rather than
    the observed counts, so low-count dip bins are not over-weighted."""
    pred = spectral.coincidence_probability(model, fringe.delta_t)
    sigma = np.sqrt(np.maximum(pred * fringe.baseline, 1.0)) / fringe.baseline
    z = (fringe.values - pred) / sigma
    return ModelComparison(
        reduced_chi2=float(np.mean(z**2)),
        max_abs_z=float(np.max(np.abs(z))),
        z_scores=z,
    )

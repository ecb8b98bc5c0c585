"""Field synthesis, beamsplitting, detection, and experiment orchestration."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwhom.lasersim import (
    PS_PER_S,
    ConfigurationError,
    DetectorSpec,
    ExperimentConfig,
    SourceSpec,
    beamsplit,
    config_from_dict,
    config_to_dict,
    detect,
    instantaneous_detuning,
    run_experiment,
    synthesize_field,
)
from cwhom.spectral import FMTriangle, Gaussian, Lorentzian, Rectangular

TRI = FMTriangle(intrinsic_fwhm=1.2e6, mod_rate=1e3, deviation=4.0e6)


def small_config(seed=3, duration=0.02, **kwargs):
    defaults = dict(
        source_1=SourceSpec(lineshape=Lorentzian(2.2e6), mean_rate=5e5,
                            rng_seed=seed),
        source_2=SourceSpec(lineshape=Lorentzian(2.2e6), mean_rate=5e5,
                            rng_seed=seed + 1),
        duration=duration,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class TestInstantaneousDetuning:
    def test_triangle_extremes(self):
        period = 1.0 / TRI.mod_rate
        assert instantaneous_detuning(TRI, 0.0) == pytest.approx(0.0, abs=1.0)
        assert instantaneous_detuning(TRI, period / 4.0) == pytest.approx(
            TRI.deviation / 2.0, rel=1e-9)
        assert instantaneous_detuning(TRI, period / 2.0) == pytest.approx(
            0.0, abs=1.0)
        assert instantaneous_detuning(TRI, 3.0 * period / 4.0) == pytest.approx(
            -TRI.deviation / 2.0, rel=1e-9)

    def test_periodicity(self):
        t = np.linspace(0.0, 1.0 / TRI.mod_rate, 257)
        np.testing.assert_allclose(
            instantaneous_detuning(TRI, t),
            instantaneous_detuning(TRI, t + 5.0 / TRI.mod_rate),
            atol=1e-3)


class TestSynthesizeField:
    def test_unit_magnitude_and_length(self):
        spec = SourceSpec(lineshape=TRI, mean_rate=1e5, rng_seed=0)
        e = synthesize_field(spec, 1e-4, 2e-9, seed=0)
        assert e.size == 50_000
        np.testing.assert_allclose(np.abs(e), 1.0, rtol=1e-12)

    def test_fm_phase_tracks_detuning(self):
        # numerical derivative of the deterministic sweep phase must equal
        # the closed-form instantaneous detuning (tiny intrinsic linewidth
        # so diffusion is negligible)
        spec = SourceSpec(lineshape=FMTriangle(1e-2, 1e3, 4e6),
                          mean_rate=1e5, rng_seed=0)
        dt = 2e-9
        e = synthesize_field(spec, 2e-3, dt, seed=0)
        phase = np.unwrap(np.angle(e))
        f_inst = np.diff(phase) / (2.0 * np.pi * dt)
        t_mid = (np.arange(f_inst.size) + 0.5) * dt
        expect = instantaneous_detuning(spec.lineshape, t_mid)
        assert np.max(np.abs(f_inst - expect)) < 2e4  # << 4 MHz deviation

    def test_lorentzian_autocorrelation(self):
        # |<E(t) E*(t+tau)>| must follow exp(-pi * fwhm * tau)
        fwhm = 2.2e6
        spec = SourceSpec(lineshape=Lorentzian(fwhm), mean_rate=1e5, rng_seed=0)
        dt = 2e-9
        e = synthesize_field(spec, 5e-3, dt, seed=11)
        tau_c = 1.0 / (np.pi * fwhm)
        for tau in (0.5 * tau_c, tau_c, 2.0 * tau_c):
            k = int(round(tau / dt))
            ac = np.abs(np.mean(e[:-k] * np.conj(e[k:])))
            assert ac == pytest.approx(np.exp(-np.pi * fwhm * k * dt), abs=0.02)

    def test_detuning_shifts_carrier(self):
        spec = SourceSpec(lineshape=Lorentzian(1e5), mean_rate=1e5,
                          detuning=3.5e6, rng_seed=0)
        dt = 2e-9
        e = synthesize_field(spec, 1e-3, dt, seed=2)
        f = np.fft.fftfreq(e.size, d=dt)
        peak = f[np.argmax(np.abs(np.fft.fft(e)))]
        assert peak == pytest.approx(3.5e6, abs=5e4)


class TestBeamsplit:
    @given(r1=st.floats(1e3, 1e7), r2=st.floats(1e3, 1e7),
           o=st.floats(0.0, 1.0), seed=st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_energy_conservation(self, r1, r2, o, seed):
        rng = np.random.default_rng(seed)
        e1 = np.exp(1j * rng.uniform(0, 2 * np.pi, 64))
        e2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 64))
        out_a, out_b = beamsplit(e1, e2, o, (r1, r2))
        np.testing.assert_allclose(out_a + out_b, r1 + r2, rtol=1e-9)
        assert np.all(out_a >= -1e-9) and np.all(out_b >= -1e-9)

    def test_zero_overlap_is_flat(self):
        rng = np.random.default_rng(0)
        e1 = np.exp(1j * rng.uniform(0, 2 * np.pi, 256))
        e2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 256))
        out_a, out_b = beamsplit(e1, e2, 0.0, (4e5, 6e5))
        np.testing.assert_allclose(out_a, 5e5, rtol=1e-12)
        np.testing.assert_allclose(out_b, 5e5, rtol=1e-12)

    def test_full_overlap_reaches_zero(self):
        # equal rates and a pi/2 phase difference extinguish one output
        n = 8
        e1 = np.ones(n, dtype=complex)
        e2 = np.exp(1j * np.pi / 2.0) * np.ones(n)
        out_a, out_b = beamsplit(e1, e2, 1.0, (1e6, 1e6))
        assert np.max(out_a) < 1e-6 * 2e6 or np.max(out_b) < 1e-6 * 2e6

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            beamsplit(np.ones(4, complex), np.ones(5, complex), 1.0, (1e5, 1e5))


class TestDetect:
    DT = 2e-9

    def test_rate_matches_intensity(self):
        spec = DetectorSpec(efficiency=0.5, dead_time=0.0, dark_rate=0.0,
                            jitter_sigma=0.0)
        span = 0.2
        intensity = np.full(int(span / self.DT), 1e6)
        ts = detect(intensity, self.DT, spec, seed=4)
        rate = ts.size / span
        assert rate == pytest.approx(5e5, rel=0.01)

    def test_dark_counts_only(self):
        spec = DetectorSpec(efficiency=0.5, dead_time=0.0, dark_rate=1e4,
                            jitter_sigma=0.0)
        intensity = np.zeros(int(0.1 / self.DT))
        ts = detect(intensity, self.DT, spec, seed=5)
        assert ts.size / 0.1 == pytest.approx(1e4, rel=0.1)

    def test_dead_time_enforced(self):
        spec = DetectorSpec(efficiency=1.0, dead_time=22e-9, dark_rate=0.0,
                            jitter_sigma=0.0)
        intensity = np.full(int(2e-3 / self.DT), 5e6)
        ts = detect(intensity, self.DT, spec, seed=6)
        assert ts.size > 1000
        assert np.min(np.diff(ts)) >= int(22e-9 * PS_PER_S)

    def test_strictly_increasing_with_jitter(self):
        spec = DetectorSpec(efficiency=1.0, dead_time=0.0, dark_rate=0.0,
                            jitter_sigma=0.35e-9)
        intensity = np.full(int(1e-3 / self.DT), 5e6)
        ts = detect(intensity, self.DT, spec, seed=7)
        assert np.all(np.diff(ts) > 0)

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValueError):
            detect(np.array([-1.0]), self.DT, DetectorSpec(), seed=0)


class TestExperiment:
    def test_determinism(self):
        cfg = small_config()
        r1 = run_experiment(cfg)
        r2 = run_experiment(cfg)
        np.testing.assert_array_equal(r1.events_a, r2.events_a)
        np.testing.assert_array_equal(r1.events_b, r2.events_b)

    def test_thread_count_invariance(self):
        cfg = small_config(seed=9)
        r1 = run_experiment(cfg, threads=1)
        r2 = run_experiment(cfg, threads=2)
        np.testing.assert_array_equal(r1.events_a, r2.events_a)
        np.testing.assert_array_equal(r1.events_b, r2.events_b)

    def test_singles_rates_and_dead_time(self):
        cfg = small_config(seed=12, duration=0.05)
        res = run_experiment(cfg)
        dead_ps = int(cfg.detector_a.dead_time * PS_PER_S)
        for ev in (res.events_a, res.events_b):
            rate = ev.size / cfg.duration
            # ~1.4% loss to dead time at these rates
            assert rate == pytest.approx(5e5, rel=0.03)
            assert np.min(np.diff(ev)) >= dead_ps

    def test_too_coarse_sample_dt_rejected(self):
        with pytest.raises(ConfigurationError):
            small_config(sample_dt=1e-7)

    def test_too_short_duration_rejected(self):
        with pytest.raises(ConfigurationError):
            small_config(duration=1e-5)

    def test_invalid_overlap_rejected(self):
        with pytest.raises(ConfigurationError):
            small_config(mode_overlap=1.5)


class TestConfigSerialization:
    @pytest.mark.parametrize("ls", [
        Lorentzian(2.2e6), Rectangular(5.2e6), Gaussian(3e6), TRI,
    ], ids=lambda s: type(s).__name__)
    def test_round_trip(self, ls):
        cfg = small_config(source_1=SourceSpec(lineshape=ls, mean_rate=4e5,
                                               detuning=1e6, rng_seed=17))
        assert config_from_dict(config_to_dict(cfg)) == cfg

"""Command-line driver: reproduction presets, configurable runs, stages.

Exit codes: 0 success, 2 configuration/validation error, 3 fit
non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis, correlator, eventio, lasersim, presets, spectral, svgplot
from .analysis import FitModel, NonConvergenceError, RankDeficientError
from .correlator import HistogramSpec
from .lasersim import ConfigurationError, ExperimentConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_manifest(outdir: Path, source: str, cfg: ExperimentConfig | None,
                    artifacts: list):
    manifest = {
        "source": source,
        "config": lasersim.config_to_dict(cfg) if cfg is not None else None,
        "seeds": [cfg.source_1.rng_seed, cfg.source_2.rng_seed] if cfg else None,
        "output_dir": str(outdir),
        "artifacts": {name: _sha256(outdir / name) for name in sorted(artifacts)},
    }
    path = outdir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _load_toml(path: str) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _config_from_toml(doc: dict) -> tuple:
    """Returns (ExperimentConfig, HistogramSpec, FitModel)."""
    for key in ("source_1", "source_2"):
        if key not in doc:
            raise ConfigurationError(f"missing required [{key}] section")
    cfg_dict = {
        "source_1": doc["source_1"],
        "source_2": doc["source_2"],
    }
    for key in ("detector_a", "detector_b"):
        if key in doc:
            cfg_dict[key] = doc[key]
    cfg_dict.update(doc.get("experiment", {}))
    try:
        cfg = lasersim.config_from_dict(cfg_dict)
    except TypeError as exc:
        raise ConfigurationError(f"bad configuration field: {exc}") from exc
    hist = HistogramSpec(**doc.get("histogram", {}))
    fit_doc = dict(doc.get("fit", {}))
    gamma_form = fit_doc.pop("gamma_form", "physical")
    fit_model = FitModel(
        gamma_form=gamma_form,
        lineshape_1=cfg.source_1.lineshape,
        lineshape_2=cfg.source_2.lineshape,
        **fit_doc,
    )
    return cfg, hist, fit_model


def _events_duration_ps(cfg: ExperimentConfig) -> int:
    return int(round(cfg.duration * lasersim.PS_PER_S))


def run_pipeline(cfg: ExperimentConfig, hist_spec: HistogramSpec,
                 fit_model: FitModel, outdir: Path, source: str,
                 threads: int = 1, simulate_only: bool = False,
                 fmt: str = "csv"):
    """Simulate, correlate, normalize, fit; emit artifacts + manifest."""
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts = []

    result = lasersim.run_experiment(cfg, threads=threads)
    eventio.write_events(outdir / "events.bin", result.events_a, result.events_b,
                         _events_duration_ps(cfg))
    artifacts.append("events.bin")
    if fmt == "json":
        with open(outdir / "run_metadata.json", "w") as f:
            json.dump(result.metadata, f, indent=2, sort_keys=True)
            f.write("\n")
        artifacts.append("run_metadata.json")
    if simulate_only:
        manifest = _write_manifest(outdir, source, cfg, artifacts)
        return manifest, None, None

    hist = correlator.correlate(result.events_a, result.events_b, hist_spec,
                                duration=cfg.duration)
    fringe = correlator.normalize(hist)
    correlator.write_histogram_csv(outdir / "histogram.csv", hist, fringe)
    correlator.write_histogram_metadata(
        outdir / "histogram_meta.json", hist,
        extra={"source": source, "baseline_counts_per_bin": fringe.baseline},
    )
    artifacts += ["histogram.csv", "histogram_meta.json"]

    fit = analysis.fit_hom(fringe, fit_model)
    with open(outdir / "fit.json", "w") as f:
        f.write(fit.to_json())
        f.write("\n")
    artifacts.append("fit.json")

    fit_curve = _fit_prediction(fit, fit_model, fringe.delta_t)
    svgplot.render_fringe_svg(outdir / "fringe.svg", fringe.delta_t,
                              fringe.values, fit_curve)
    artifacts.append("fringe.svg")

    manifest = _write_manifest(outdir, source, cfg, artifacts)
    return manifest, fringe, fit


def _fit_prediction(fit, model: FitModel, delta_t: np.ndarray) -> np.ndarray:
    p = {k: v.value for k, v in fit.params.items()}
    d_omega = fit.delta_omega_sign * p.get("delta_omega_abs", 0.0)
    if model.gamma_form == "effective-lorentzian":
        gamma = np.exp(-np.abs(delta_t) / p["tau_c"])
    elif model.gamma_form == "physical":
        gamma = spectral.mutual_coherence(model.lineshape_1, model.lineshape_2,
                                          delta_t, signed=model.signed_gamma)
    else:
        from .analysis import _scale_lineshape
        gamma = spectral.mutual_coherence(
            _scale_lineshape(model.lineshape_1, p["width_scale_1"]),
            _scale_lineshape(model.lineshape_2, p["width_scale_2"]),
            delta_t, signed=model.signed_gamma,
        )
    baseline = p.get("baseline", 1.0)
    return baseline * (1.0 - p["visibility"] * gamma * np.cos(d_omega * delta_t))


_PRESET_OVERRIDE_KEYS = ("duration", "rate", "mode_overlap", "sample_dt",
                         "segment_length")


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} is not key=value")
        key, _, val = pair.partition("=")
        if key not in _PRESET_OVERRIDE_KEYS:
            raise ConfigurationError(
                f"unknown override {key!r}; expected one of {_PRESET_OVERRIDE_KEYS}"
            )
        out[key] = float(val)
    return out


def cmd_preset(args) -> int:
    over = _parse_overrides(args.set)
    cfg = presets.preset_config(
        args.name,
        seed=args.seed,
        duration=over.pop("duration", args.duration),
        rate=over.pop("rate", presets.DEFAULT_RATE),
        mode_overlap=over.pop("mode_overlap", presets.DEFAULT_OVERLAP),
    )
    if over:
        cfg = presets.with_overrides(cfg, **over)
    fit_model = FitModel(gamma_form="physical",
                         lineshape_1=cfg.source_1.lineshape,
                         lineshape_2=cfg.source_2.lineshape)
    outdir = Path(args.out) if args.out else Path(args.name)
    manifest, fringe, fit = run_pipeline(
        cfg, HistogramSpec(), fit_model, outdir, source=f"preset:{args.name}",
        threads=args.threads, fmt=args.format,
    )
    if fit is not None:
        v = fit.params["visibility"]
        print(f"{args.name}: V = {v.value:.4f} +/- {v.sigma:.4f}, "
              f"reduced chi2 = {fit.reduced_chi2:.3f}")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_run(args) -> int:
    doc = _load_toml(args.config)
    cfg, hist_spec, fit_model = _config_from_toml(doc)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg,
                      source_1=replace(cfg.source_1, rng_seed=args.seed),
                      source_2=replace(cfg.source_2, rng_seed=args.seed + 1))
    if args.duration is not None:
        cfg = presets.with_overrides(cfg, duration=args.duration)
    outdir = Path(args.out) if args.out else Path("run_output")
    run_pipeline(cfg, hist_spec, fit_model, outdir,
                 source=f"config:{args.config}", threads=args.threads,
                 simulate_only=args.simulate_only, fmt=args.format)
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    path = Path(args.events)
    if path.suffix == ".csv":
        events_a, events_b = eventio.read_events_csv(path)
        duration = None
    else:
        events_a, events_b, duration_ps = eventio.read_events(path)
        duration = duration_ps / lasersim.PS_PER_S
    spec = HistogramSpec(bin_width=args.bin_width * 1e-9,
                         window=args.window * 1e-9)
    hist = correlator.correlate(events_a, events_b, spec, duration=duration)
    fringe = correlator.normalize(hist)
    outdir = Path(args.out) if args.out else Path(".")
    outdir.mkdir(parents=True, exist_ok=True)
    correlator.write_histogram_csv(outdir / "histogram.csv", hist, fringe)
    correlator.write_histogram_metadata(outdir / "histogram_meta.json", hist,
                                        extra={"source": f"events:{args.events}"})
    print(f"histogram written to {outdir / 'histogram.csv'}")
    return EXIT_OK


def read_fringe_csv(path):
    """Read the histogram CSV (bin_center_ns, counts, normalized, error)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    keep = np.isfinite(data[:, 2])
    delta_t = data[keep, 0] * 1e-9
    counts = data[keep, 1]
    values = data[keep, 2]
    errors = data[keep, 3]
    ok = values > 0
    baseline = float(np.median(counts[ok] / values[ok])) if ok.any() else 1.0
    return correlator.NormalizedFringe(delta_t=delta_t, values=values,
                                       errors=errors, baseline=baseline)


def cmd_fit(args) -> int:
    fringe = read_fringe_csv(args.fringe)
    fit_model = FitModel(gamma_form=args.gamma_form)
    fit = analysis.fit_hom(fringe, fit_model)
    out = Path(args.out) if args.out else Path("fit.json")
    if out.is_dir():
        out = out / "fit.json"
    with open(out, "w") as f:
        f.write(fit.to_json())
        f.write("\n")
    v = fit.params["visibility"]
    print(f"V = {v.value:.4f} +/- {v.sigma:.4f}; report in {out}")
    return EXIT_OK


def cmd_beat(args) -> int:
    if args.config in presets.PRESET_NAMES:
        cfg = presets.preset_config(args.config, seed=args.seed or 1)
    else:
        cfg, _, _ = _config_from_toml(_load_toml(args.config))
    duration = args.duration if args.duration is not None else 0.05
    dt = cfg.sample_dt
    e1 = lasersim.synthesize_field(cfg.source_1, duration, dt,
                                   seed=cfg.source_1.rng_seed)
    e2 = lasersim.synthesize_field(cfg.source_2, duration, dt,
                                   seed=cfg.source_2.rng_seed)
    spectrum = analysis.beat_psd(e1, e2, dt)
    outdir = Path(args.out) if args.out else Path(".")
    outdir.mkdir(parents=True, exist_ok=True)
    spectral.dump_psd_csv(outdir / "beat_psd.csv", spectrum.frequency,
                          spectrum.density)
    width = analysis.psd_width(spectrum)
    with open(outdir / "beat_width.json", "w") as f:
        json.dump({"fwhm_hz": width.fwhm,
                   "edge_steepness": width.edge_steepness},
                  f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"beat FWHM = {width.fwhm / 1e6:.3f} MHz "
          f"(steepness {width.edge_steepness:.3f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cwhom",
                                description="CW two-photon interference "
                                            "simulator and analysis toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("preset", help="run a named reproduction preset")
    sp.add_argument("name", choices=presets.PRESET_NAMES)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--duration", type=float, default=presets.DEFAULT_DURATION)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a configuration field")
    common(sp)
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("run", help="run an experiment from a TOML config")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--simulate-only", action="store_true",
                    help="emit only the event stream")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("correlate", help="histogram an event-stream file")
    sp.add_argument("events")
    sp.add_argument("--bin-width", type=float, default=0.5, help="ns")
    sp.add_argument("--window", type=float, default=2000.0, help="ns half-range")
    common(sp)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("fit", help="fit a normalized fringe CSV")
    sp.add_argument("fringe")
    sp.add_argument("--gamma-form", choices=analysis.GAMMA_FORMS,
                    default="effective-lorentzian")
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("beat", help="beat spectrum of a config's two sources")
    sp.add_argument("config", help="preset name or TOML path")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--duration", type=float)
    common(sp)
    sp.set_defaults(func=cmd_beat)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, correlator.SpecMismatchError,
            eventio.EventFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NonConvergenceError, RankDeficientError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())

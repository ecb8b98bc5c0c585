"""Shared fixtures: expensive preset runs are executed once per session."""

from __future__ import annotations

import numpy as np
import pytest

from cwhom import correlator, lasersim, presets


class PresetRun:
    """One simulated preset with its histogram and normalized fringe."""

    def __init__(self, cfg, result, hist, fringe):
        self.cfg = cfg
        self.result = result
        self.hist = hist
        self.fringe = fringe


_CACHE = {}


def run_preset(name: str, seed: int = 1, duration: float = 2.0,
               mode_overlap: float = presets.DEFAULT_OVERLAP) -> PresetRun:
    key = (name, seed, duration, mode_overlap)
    if key not in _CACHE:
        cfg = presets.preset_config(name, seed=seed, duration=duration,
                                    mode_overlap=mode_overlap)
        result = lasersim.run_experiment(cfg)
        hist = correlator.correlate(result.events_a, result.events_b,
                                    duration=cfg.duration)
        fringe = correlator.normalize(hist)
        _CACHE[key] = PresetRun(cfg, result, hist, fringe)
    return _CACHE[key]


@pytest.fixture(scope="session")
def fig3_run():
    """fig3 preset at default overlap; identical config to fig4-zero and
    fig5-0m, so it stands in for all three."""
    return run_preset("fig3")


@pytest.fixture(scope="session")
def fig3_ideal_run():
    """fig3 with perfect mode overlap and balanced rates (V -> 0.5)."""
    return run_preset("fig3", mode_overlap=1.0)

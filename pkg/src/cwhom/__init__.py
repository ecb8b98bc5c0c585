"""Desk-scale simulator and analysis toolkit for time-resolved two-photon
interference between independent CW coherent sources."""

from .spectral import (
    FMTriangle,
    FringeModel,
    Gaussian,
    Lineshape,
    Lorentzian,
    Rectangular,
    coincidence_probability,
    fringe_metrics,
    g1,
    lineshape_psd,
    mutual_coherence,
    psd_to_g1_numeric,
)
from .lasersim import (
    DetectorSpec,
    ExperimentConfig,
    SourceSpec,
    beamsplit,
    detect,
    instantaneous_detuning,
    run_experiment,
    synthesize_field,
)
from .correlator import (
    CoincidenceHistogram,
    HistogramSpec,
    NormalizedFringe,
    correlate,
    merge,
    normalize,
    singles_stats,
)
from .analysis import (
    FitModel,
    HomFit,
    beat_psd,
    fit_hom,
    mc_vs_analytic,
    psd_width,
)

__version__ = "0.1.0"

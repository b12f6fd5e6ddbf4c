"""Trace-driven simulation of confidence-gated edge/cloud inference offloading."""

from .calibration import (
    DensityAware,
    Dirichlet,
    FitReport,
    HistogramBinning,
    Identity,
    Temperature,
    calibrate_trace,
    fit_dac,
    fit_dirichlet,
    fit_histogram_binning,
    fit_temperature,
)
from .controller import ModelChoice, DecisionOutcome, confusion_counts, decide, ideal_model, metrics, sweep
from .experience import (
    LatencyConfig,
    OperatingPoint,
    PenaltyTable,
    Scenario,
    aggregate,
    min_uii_threshold,
    pareto_front,
    scenario,
    uii,
)
from .reliability import ReliabilityReport, assign_bin, bin_stats, ece
from .synth import SynthParams, generate, generate_preset, make_paperlike_presets
from .trace import PredictionRecord, Trace, load_trace, mix_traces, split_by_tag, top_confidence, validate, write_trace

__version__ = "0.1.0"

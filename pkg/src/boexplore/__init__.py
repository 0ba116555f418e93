"""Exploration measures for Bayesian optimization.

Trace metrics (tour length and entropy of the observed points), a small GP
and acquisition toolkit, synthetic benchmarks, an experiment runner and the
analysis used to compare how much different optimizers explore.
"""

from .acquisition import (
    AcquisitionSpec,
    TrustRegionState,
    batch_select,
    ei,
    kg,
    maximize_af,
    mes,
    pi,
    raasp_candidates,
    sample_max_values,
    tr_update,
    ucb,
)
from .analysis import (
    OE_REVERSED,
    PERFORMANCE,
    RankTable,
    aggregate_normalized_otsd,
    emit_plot_data,
    mean_relative_ranking,
    verify_otsd_bound,
)
from .benchmarks import BENCHMARKS, Benchmark, doe, evaluate, get_benchmark
from .errors import (
    BOExploreError,
    ConfigError,
    InputError,
    ModelFitError,
    NotFittedError,
    TraceFormatError,
    TraceParseError,
)
from .harness import ExperimentConfig, RunRecord, read_trace, run_experiment, write_trace
from .metrics import (
    MetricSeries,
    ObservationTrace,
    TourState,
    exact_tsp,
    oe,
    oe_series,
    otsd_insert,
    otsd_normalized,
    otsd_series,
    psi_bound,
)
from .surrogate import GpModel, KernelParams, fit, kernel, predict, sample_posterior_function

__version__ = "0.1.0"

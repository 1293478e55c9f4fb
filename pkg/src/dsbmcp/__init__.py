"""Change-point detection for dynamic stochastic block model network sequences."""

from .bench import ExperimentReport, ScenarioSpec, build_scenario, emit_trajectory, run_experiment
from .cluster import (
    DegenerateClustersError,
    Embedding,
    MisclassReport,
    approx_kmeans,
    cluster_segment,
    degree_profile_classify,
    misclassification,
    spectral_embed,
)
from .cpd import (
    ChangePointFit,
    SearchGrid,
    UndefinedBlockMeanError,
    block_means,
    dsbm_criterion,
    dsbm_criterion_scan,
    er_criterion_scan,
    estimate_2step,
    estimate_boundary_variant,
    estimate_every_time_point,
    estimate_known,
    fixed_matrix_criterion_scan,
)
from .infer import (
    BootstrapResult,
    BoundaryWindowError,
    GammaUndefinedError,
    NuUndefinedError,
    RegimeDiagnostics,
    SnrReport,
    adaptive_bootstrap,
    proposition41_check,
    regime_diagnostics,
    simulate_limit_law,
    snr_report,
)
from .netcore import (
    AdjacencySeries,
    BlockMatrix,
    CommunityAssignment,
    DsbmSpec,
    EdgeProbMatrix,
    edge_prob_matrix,
    frobenius_gap,
    load_series_binary,
    load_series_text,
    make_rng,
    sample_dsbm,
    sample_sbm,
    save_series_binary,
    save_series_text,
)

__version__ = "0.1.0"

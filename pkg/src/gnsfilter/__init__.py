"""Graph Normalized Sign adaptive filtering and baselines for graph signals under impulsive noise."""

from .data import DatasetBundle, DatasetParseError, generate_synthetic_dataset, load_dataset_csv, save_dataset_csv
from .filters import FilterConfig, FilterKind, FilterState, build_gns_normalizer, init_state, step
from .graph import (
    GraphTopology,
    LaplacianSpectrum,
    build_knn_graph,
    eigendecompose,
    gft,
    igft,
    laplacian,
)
from .harness import (
    ExperimentConfig,
    MaskSpec,
    RunResult,
    SyntheticSpec,
    detect_steady_state,
    run_online_prediction,
    spatial_mse,
    spectral_mae,
    tune_step_size,
)
from .noise import AlphaStableParams, flom_abs_moment, sample_sas
from .sampling import (
    BandlimitProjector,
    FrequencySet,
    IdentifiabilityError,
    SamplingMask,
    build_projector,
    greedy_select_frequencies,
)
from .studies import alpha_sweep, convergence_study

__all__ = [
    "AlphaStableParams",
    "BandlimitProjector",
    "DatasetBundle",
    "DatasetParseError",
    "ExperimentConfig",
    "FilterConfig",
    "FilterKind",
    "FilterState",
    "FrequencySet",
    "GraphTopology",
    "IdentifiabilityError",
    "LaplacianSpectrum",
    "MaskSpec",
    "RunResult",
    "SamplingMask",
    "SyntheticSpec",
    "alpha_sweep",
    "build_gns_normalizer",
    "build_knn_graph",
    "build_projector",
    "convergence_study",
    "detect_steady_state",
    "eigendecompose",
    "flom_abs_moment",
    "generate_synthetic_dataset",
    "gft",
    "greedy_select_frequencies",
    "igft",
    "init_state",
    "laplacian",
    "load_dataset_csv",
    "run_online_prediction",
    "sample_sas",
    "save_dataset_csv",
    "spatial_mse",
    "spectral_mae",
    "step",
    "tune_step_size",
]

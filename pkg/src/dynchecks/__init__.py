"""Dynamic measurement schedules for local single-shot checks on the toric code."""

from .code import (
    CheckSet,
    InvalidParameter,
    NotAGeneratingSet,
    build_fixed_width_checks,
    build_local_checks,
    build_single_shot_checks,
    build_variable_width_checks,
    conversion_matrix,
)
from .schedule import Schedule, make_schedule, min_window, predicted_time_distance, time_distance_bfs
from .circuit import Circuit, build_memory_experiment, build_phenomenological_experiment
from .noise import NoiseModel, attach_noise, enumerate_error_mechanisms, pauli_frame_sample, sample_blocks
from .graph import (
    DecodingGraph,
    UnsupportedHyperedge,
    compile_circuit_graph,
    compile_phenomenological_graph,
    decompose_space_edge_first,
    decompose_time_edge_first,
)
from .decode import Correction, Decoder, UnmatchableSyndrome, full_history_decode, mwpm_decode, sliding_window_decode
from .harness import ExperimentConfig, FitFailure, FitResult, fit_threshold, run_montecarlo, sweep_report, wilson_interval

__version__ = "0.1.0"

"""Monte Carlo simulator and band-assignment optimizer for multiband UNB IoT uplinks."""

from unbsim.core import (
    Assignment,
    DecodeStats,
    Point2D,
    SimConfig,
    Topology,
    TransmissionEvent,
    band_of_frequency,
    distance,
    validate_assignment,
)
from unbsim.harness import (
    ExperimentResult,
    MonteCarloRun,
    load_config,
    run_monte_carlo,
    run_realization,
    sweep,
    write_results_csv,
)
from unbsim.sinr import DecodeTable, SinrTable, build_decode_table, metrics
from unbsim.solvers import (
    QuadraticAssignmentObjective,
    build_p3_objective,
    build_p4_objective,
    oracle_best_assignment,
    random_assignment,
    solve_enumeration,
    solve_local_search,
)
from unbsim.training import run_full_training, run_low_overhead_training

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "DecodeStats",
    "DecodeTable",
    "ExperimentResult",
    "MonteCarloRun",
    "Point2D",
    "QuadraticAssignmentObjective",
    "SimConfig",
    "SinrTable",
    "Topology",
    "TransmissionEvent",
    "band_of_frequency",
    "build_decode_table",
    "build_p3_objective",
    "build_p4_objective",
    "distance",
    "load_config",
    "metrics",
    "oracle_best_assignment",
    "random_assignment",
    "run_full_training",
    "run_low_overhead_training",
    "run_monte_carlo",
    "run_realization",
    "solve_enumeration",
    "solve_local_search",
    "sweep",
    "validate_assignment",
    "write_results_csv",
    "__version__",
]

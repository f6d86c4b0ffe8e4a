from .config import (
    LEAKAGE_THRESHOLD,
    EnsembleResult,
    IntegratorConfig,
    Method,
    TrajectoryResult,
    TrajectorySummary,
)
from .noise import NoiseStream
from .run import default_dt, run_ensemble, run_trajectory
from .steps import (
    record_increment,
    sme_increment,
    sme_step,
    sse_increment,
    sse_step,
    unconditional_evolve,
)

__all__ = [
    "LEAKAGE_THRESHOLD",
    "EnsembleResult",
    "IntegratorConfig",
    "Method",
    "NoiseStream",
    "TrajectoryResult",
    "TrajectorySummary",
    "default_dt",
    "record_increment",
    "run_ensemble",
    "run_trajectory",
    "sme_increment",
    "sme_step",
    "sse_increment",
    "sse_step",
    "unconditional_evolve",
]

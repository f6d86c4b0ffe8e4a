"""Integrator configuration and trajectory output containers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

LEAKAGE_THRESHOLD = 1e-5


class Method(str, enum.Enum):
    EULER_MARUYAMA = "euler_maruyama"
    HEUN_DRIFT_EULER_NOISE = "heun_drift_euler_noise"


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings for one stochastic run.

    ``lambda_schedule`` is a tuple of (t_start, value) pairs giving a
    piecewise-constant coupling strength; the first entry must sit at
    t=0 and times must strictly increase.  ``None`` keeps the model's
    own coupling.
    """

    dt: float
    t_final: float
    seed: int = 0
    method: Method = Method.HEUN_DRIFT_EULER_NOISE
    snapshot_stride: int = 1
    lambda_schedule: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ConfigError(f"t_final {self.t_final} < dt {self.dt}")
        if self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.lambda_schedule is not None:
            sched = tuple((float(t), float(v)) for t, v in self.lambda_schedule)
            if not sched or sched[0][0] != 0.0:
                raise ConfigError("lambda_schedule must start at t=0")
            times = [t for t, _ in sched]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError("lambda_schedule times must strictly increase")
            object.__setattr__(self, "lambda_schedule", sched)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class TrajectoryResult:
    """Output of one stochastic trajectory.

    ``exp_series``/``var_series`` map observable name to a series on
    ``times``; ``record`` holds the per-step measurement increments dr.
    """

    times: np.ndarray
    exp_series: dict
    var_series: dict
    record: np.ndarray | None
    max_leakage: float
    final_state: object
    diagnostics: dict = field(default_factory=dict)
    leakage_exceeded: bool = False
    seed: int = 0
    trajectory_index: int = 0


@dataclass(frozen=True)
class TrajectorySummary:
    trajectory_index: int
    max_leakage: float
    max_trace_drift: float
    max_hermiticity_error: float
    failed: bool = False
    error: str | None = None


@dataclass
class EnsembleResult:
    mean: TrajectoryResult
    summaries: list
    trajectories: list | None = None

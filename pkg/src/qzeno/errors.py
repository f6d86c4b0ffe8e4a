"""Exception types shared across the package."""


class QZenoError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionError(QZenoError):
    """Requested Hilbert-space dimension is not usable (e.g. dim < 2)."""


class DimensionMismatchError(QZenoError):
    """Operator/state dimensions are incompatible."""


class TruncationLeakageError(QZenoError):
    """Requested state does not fit in the truncated Fock space."""


class NegativeRateError(QZenoError):
    """A decay/dephasing rate was negative."""


class FrameUnsupportedError(QZenoError):
    """The requested rotating/lab frame is not defined for this scenario."""


class NanDetectedError(QZenoError):
    """Integration produced a non-finite state.

    Carries enough context (step index, seed) to replay the failing
    trajectory.
    """

    def __init__(self, message, step=None, seed=None, trajectory_index=None):
        super().__init__(message)
        self.step = step
        self.seed = seed
        self.trajectory_index = trajectory_index


class LeakageExceededError(QZenoError):
    """Top-Fock-level population crossed the configured threshold."""


class DimensionTooLargeError(QZenoError):
    """Deterministic density-matrix evolution was asked for an
    impractically large space."""


class EmptySeriesError(QZenoError):
    """A time series was empty where data is required."""


class MissingObservableError(QZenoError):
    """Requested observable was not recorded in the trajectory."""


class InvalidCaseError(QZenoError):
    """Unknown preset case label."""


class ConfigError(QZenoError):
    """Malformed run-configuration file or inconsistent RunConfig."""


class OutputDirError(QZenoError):
    """Output directory missing or not writable; nothing was written."""


class NonpositiveInputError(QZenoError):
    """Device-parameter calculator received a nonpositive quantity."""


class EnsembleError(QZenoError):
    """One or more trajectories in an ensemble failed."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = tuple(failures)

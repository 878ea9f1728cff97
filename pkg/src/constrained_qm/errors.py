"""Exception hierarchy shared by all modules."""


class ConstrainedQMError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ConstrainedQMError, ValueError):
    pass


class DegenerateCurveError(ConstrainedQMError, ValueError):
    pass


class OutOfTubeError(ConstrainedQMError, ValueError):
    pass


class ConvergenceError(ConstrainedQMError, RuntimeError):
    pass


class ChartWidthError(ConstrainedQMError, ValueError):
    pass


class FrameError(ConstrainedQMError, ValueError):
    pass


class DegenerateEmbeddingError(ConstrainedQMError, ValueError):
    pass


class ConfinementError(ConstrainedQMError, ValueError):
    pass


class IntervalTooSmallError(ConstrainedQMError, ValueError):
    pass


class OrthogonalityError(ConstrainedQMError, ValueError):
    pass


class OutOfRegionError(ConstrainedQMError, ValueError):
    pass


class InvalidPacketError(ConstrainedQMError, ValueError):
    pass


class SingularDispersionError(ConstrainedQMError, ValueError):
    pass


class DomainExitError(ConstrainedQMError, RuntimeError):
    """Trajectory left its declared domain; ``time`` holds the exit time."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class DegenerateMetricError(ConstrainedQMError, ValueError):
    pass


class IntegratorToleranceError(ConstrainedQMError, RuntimeError):
    pass


class BoundaryBreachError(ConstrainedQMError, RuntimeError):
    """Wavefunction density reached the edge of the periodic box."""


class GridMismatchError(ConstrainedQMError, ValueError):
    pass


class StepError(ConstrainedQMError, RuntimeError):
    pass


class StudyAbortedError(ConstrainedQMError, RuntimeError):
    """A convergence study was stopped by a rejected run at ``hbar``."""

    def __init__(self, message, hbar):
        super().__init__(message)
        self.hbar = hbar


class ConfigurationError(ConstrainedQMError, ValueError):
    pass


class ScenarioError(ConfigurationError):
    pass


class GenericityError(ConstrainedQMError, ValueError):
    """Initial data outside the generic case covered by the limit theorem."""

"""Exception hierarchy shared by every module of the package."""


class C1AlphaError(Exception):
    """Base class for all errors raised by c1alpha."""


class ResolutionError(C1AlphaError, ValueError):
    """The grid is too coarse for the requested operation."""


class DomainError(C1AlphaError, ValueError):
    """An argument lies outside the domain on which the operation is defined."""


class ConstructionError(C1AlphaError, RuntimeError):
    """A tabulated object failed its own consistency checks."""


class AmplitudeError(C1AlphaError, ValueError):
    """A corrugation amplitude exceeds the range of the profile table."""


class DegeneracyError(C1AlphaError, ValueError):
    """An immersion (or a field derived from it) degenerated."""


class OscillationError(C1AlphaError, ValueError):
    """No probe vector keeps a uniform distance from the tangent planes."""


class InsufficientDataError(C1AlphaError, ValueError):
    """Too few samples to fit a scaling exponent."""


class ParameterError(C1AlphaError, ValueError):
    """Iteration parameters violate one of the admissibility bounds."""


class BoundaryProximityError(C1AlphaError, ValueError):
    """The degree is requested too close to the image of the boundary."""


class ConfigError(C1AlphaError, ValueError):
    """A run configuration failed validation.

    ``problems`` lists every violated check, not only the first one.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class StageAbort(C1AlphaError, RuntimeError):
    """A stage could not be completed.

    Carries the stage/step indices and, when available, the grid index of the
    worst offending sample.
    """

    def __init__(self, message, stage=None, step=None, worst_index=None, cause=None):
        self.stage = stage
        self.step = step
        self.worst_index = worst_index
        self.cause = cause
        where = []
        if stage is not None:
            where.append(f"stage {stage}")
        if step is not None:
            where.append(f"step {step}")
        if worst_index is not None:
            where.append(f"worst point {tuple(int(i) for i in worst_index)}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class AdmissibilityError(StageAbort):
    """The rescaled metric left the ball on which the frame stays positive."""


class DivergenceError(C1AlphaError, RuntimeError):
    """Measured defect exceeded the schedule by more than the allowed factor."""

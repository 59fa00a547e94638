"""Domain-specific exceptions shared across the library."""


class ChargeGameError(Exception):
    """Base class for library errors."""


class DegenerateFleetError(ChargeGameError):
    """Some vehicle cannot reach any charging station."""


class EmptyPolytopeError(ChargeGameError):
    """The admissible allocation set of a company is empty."""


class InfeasibleTargetError(ChargeGameError):
    """An integer station target violates the matching feasibility condition."""


class ZeroGainError(ChargeGameError):
    """A driver has zero surge gain at its target station and cannot be incentivized."""


class PipelineStageError(ChargeGameError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

"""Exception hierarchy for hardyspace."""


class HardyError(Exception):
    """Base class for all errors raised by this package."""


class CapacityError(HardyError):
    """Grid exceeds the configured point cap."""


class ConstructionError(HardyError):
    """Operator construction produced an invalid discretization."""


class SymbolError(HardyError):
    """A symbol evaluated to non-finite values or failed a structural check."""


class SeminormError(HardyError):
    """Numerical derivatives did not converge under refinement."""


class PreconditionError(HardyError, ValueError):
    """An operation was called outside its documented preconditions."""


class UnsupportedDimensionError(HardyError, ValueError):
    pass


class TrivialFunctionError(HardyError):
    """The maximal function vanishes identically; nothing to decompose."""


class PartitionError(HardyError):
    """A (point, scale) pair was claimed by two tent cells."""


class SupportViolation(HardyError):
    """Atom mass outside its ball exceeds the support tolerance."""


class UnknownGeneratorError(HardyError, KeyError):
    pass


class ConfigError(HardyError, ValueError):
    pass


class StageError(HardyError):
    """A pipeline stage failed; carries the function, operator and stage."""

    def __init__(self, message: str, function: str = "", operator: str = "",
                 stage: str = ""):
        super().__init__(f"[{function}/{operator}/{stage}] {message}")
        self.function = function
        self.operator = operator
        self.stage = stage

"""Exception hierarchy for pcsched."""


class PCSError(Exception):
    """Base class for every error raised by this package."""


class TooFewSamples(PCSError, ValueError):
    pass


class DegenerateSamples(PCSError, ValueError):
    pass


class ZeroWeightSum(PCSError, ValueError):
    pass


class EmptySamples(PCSError, ValueError):
    pass


class InvalidLoad(PCSError, ValueError):
    pass


class EmptyStage(PCSError, ValueError):
    pass


class EmptyTopology(PCSError, ValueError):
    pass


class MissingLoad(PCSError, KeyError):
    """A component of the topology has no load / samples attached."""

    def __init__(self, component):
        super().__init__(component)
        self.component = component

    def __str__(self):
        return f"no load for component {self.component!r}"


class InconsistentMatrix(PCSError, ValueError):
    pass


class TooLarge(PCSError, ValueError):
    pass


class BadConfig(PCSError, ValueError):
    pass


class SaturationAbort(PCSError, RuntimeError):
    pass


class EmptyTrace(PCSError, ValueError):
    pass


class InsufficientTraining(PCSError, ValueError):
    pass


class ParseError(PCSError, ValueError):
    pass


class ValidationError(PCSError, ValueError):
    """Scenario validation failure; carries the offending field and line."""

    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {message}{where}")

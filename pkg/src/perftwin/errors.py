"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration/usage problems,
problems with input data, and numeric failures.
"""


class PerfTwinError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PerfTwinError):
    """Bad usage, configuration, or artifact combination."""


class DataError(PerfTwinError):
    """Input data is malformed or violates a domain constraint."""


class NumericError(PerfTwinError, ArithmeticError):
    """A computation cannot proceed on the given numbers."""


# data errors


class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SchemaError(DataError):
    pass


class SpecValidationError(DataError):
    """Carries every violated constraint of a workload spec."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations)
        super().__init__(msg or "invalid spec")


class TooFewLoads(DataError):
    pass


class DegenerateGroup(DataError):
    pass


class NonPositivePerf(DataError):
    pass


class UnitUnknown(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


# numeric errors


class ShapeMismatch(NumericError, ValueError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class DimensionUnsupported(NumericError, ValueError):
    pass


class NonFiniteValue(NumericError):
    pass


class DegenerateSample(NumericError):
    pass


class DegenerateInput(NumericError):
    pass


class ZeroMean(NumericError):
    pass


class ZeroStd(NumericError):
    pass


class ZeroBandwidth(NumericError):
    pass


class EmptyInput(NumericError, ValueError):
    pass


# configuration errors


class UnknownParameter(ConfigError):
    pass


class SplitMismatch(ConfigError):
    pass


class GridTooLarge(ConfigError):
    pass

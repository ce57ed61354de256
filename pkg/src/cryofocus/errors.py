"""Exception hierarchy.

Every error carries the process exit code the command-line interface maps it
to: 2 input/config, 3 insufficient data, 4 analysis failure, 5 infeasible.
"""


class CryofocusError(Exception):
    exit_code = 2


class ParameterError(CryofocusError, ValueError):
    """A numeric argument is outside its admissible domain."""


class InvalidElementError(ParameterError):
    pass


class EmptySystemError(ParameterError):
    pass


class InvalidLensError(ParameterError):
    pass


class ConfigError(CryofocusError):
    pass


class UnknownMaterialError(ConfigError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class FormatError(CryofocusError):
    """An input file could not be parsed."""


class InsufficientDataError(CryofocusError):
    exit_code = 3


class AnalysisError(CryofocusError):
    exit_code = 4


class AfocalImageError(AnalysisError):
    """The conjugate image lies at infinity."""


class SingularConfigurationError(AnalysisError):
    pass


class NoEdgeError(AnalysisError):
    pass


class AmbiguousEdgeError(AnalysisError):
    pass


class DegenerateError(AnalysisError):
    pass


class NoCrossingError(AnalysisError):
    pass


class InfeasibleCompensationError(CryofocusError):
    exit_code = 5


class DegenerateCompensationError(InfeasibleCompensationError):
    """The free material does not contract, so no length compensates."""

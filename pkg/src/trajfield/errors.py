"""Exception hierarchy.

Input errors (bad configuration, shapes, indices, files) and numeric errors
(rank deficiency, divergence, degenerate geometry) are kept apart so the CLI
can map them onto distinct exit codes.
"""


class TrajFieldError(Exception):
    """Base class for all package errors."""


class InputError(TrajFieldError, ValueError):
    """Invalid user input."""


class ConfigError(InputError):
    pass


class ShapeError(InputError):
    pass


class DomainError(InputError):
    """A parameter lies outside the domain of an operation (e.g. t not in [0, 1])."""


class FieldIndexError(InputError, IndexError):
    pass


class FormatError(InputError):
    """Malformed TFZ container or tensor file."""


class MetricError(InputError):
    """A metric has no terms to average over."""


class NumericError(TrajFieldError, ArithmeticError):
    """Numerical failure."""


class RankDeficiencyError(NumericError):
    pass


class NumericDomainError(NumericError):
    pass


class OptimizationError(NumericError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class AlignmentError(NumericError):
    pass


class CameraEstimationError(NumericError):
    pass

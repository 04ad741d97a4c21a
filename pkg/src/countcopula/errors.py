"""Exception hierarchy for countcopula."""


class CountCopulaError(Exception):
    """Base class for all countcopula errors."""


class InputError(CountCopulaError):
    """Invalid user-supplied value (bad cut-off, unknown species, ...)."""


class ParameterError(CountCopulaError):
    """Parameter vector violates a model constraint (e.g. non-monotone coefficients)."""


class EvaluationError(CountCopulaError):
    """Likelihood or probability evaluation failed at a specific datum."""


class UnsupportedLinkError(CountCopulaError):
    """Requested inverse link is accepted by the API but not implemented."""


class IngestError(InputError):
    """Malformed input file; carries the offending line number where known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

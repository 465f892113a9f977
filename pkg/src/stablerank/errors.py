"""Exception hierarchy shared across the package."""


class StableRankError(Exception):
    """Base class for all errors raised by this package."""


class EvaluationFailure(StableRankError):
    """The black-box model (or its bridge) signalled an error during evaluation."""


class InvalidBudget(StableRankError):
    """A sample count or budget parameter is too small to be usable."""


class TooManyFeatures(StableRankError):
    """Exact enumeration was requested for a dimension it cannot handle."""


class SingularDesign(StableRankError):
    """The coalition design matrix is rank-deficient; the fit is not identified."""


class DegenerateVariance(StableRankError):
    """A variance input is missing, negative, or based on fewer than two draws."""


class NonPositiveGap(StableRankError):
    """Sample-size planning needs a strictly positive estimated gap."""


class DegenerateDesign(StableRankError):
    """All residual correlations vanish; no feature can be selected."""


class ParseError(StableRankError):
    """A dataset, model, or attribution file could not be parsed.

    Carries ``line`` (1-based) and optionally ``column`` for error reporting.
    """

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class BridgeHandshakeError(StableRankError):
    """The external model bridge did not complete the hello/ok handshake."""


class ConfigError(StableRankError):
    """An experiment or CLI configuration is inconsistent or incomplete."""

"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``"core.NotPSD"``,
``"qp.NotConverged"``, ...) which the command-line front end reports verbatim.
"""

from __future__ import annotations


class MinimaxError(Exception):
    """Base class for all domain errors raised by this package."""

    module = "minimax_cate"

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"


class CoreError(MinimaxError):
    module = "core"


class LengthMismatch(CoreError, ValueError):
    pass


class NonPositiveVariance(CoreError, ValueError):
    pass


class NegativeCovariance(CoreError, ValueError):
    pass


class AsymmetricCovariance(CoreError, ValueError):
    pass


class NotPSD(CoreError, ValueError):
    pass


class NonPositiveB(CoreError, ValueError):
    pass


class NegativeShare(CoreError, ValueError):
    pass


class ClosedFormError(MinimaxError):
    module = "closed_form"


class IndexOutOfRange(ClosedFormError, IndexError):
    pass


class InvalidB(ClosedFormError, ValueError):
    pass


class CorrelatedProblem(ClosedFormError, ValueError):
    """The closed-form solver only handles uncorrelated estimators."""


class QpError(MinimaxError):
    module = "qp"


class NotConverged(QpError, RuntimeError):
    """Sweep budget exhausted; ``solution`` holds the best iterate."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class NegativeCovarianceUnsupported(QpError, ValueError):
    pass


class OutOfBox(QpError, ValueError):
    pass


class DesignError(MinimaxError):
    module = "designs"


class EmptyStratum(DesignError, ValueError):
    pass


class EmptyControlSet(DesignError, ValueError):
    pass


class NonNestedControls(DesignError, ValueError):
    pass


class InvalidDesign(DesignError, ValueError):
    pass


class SimulateError(MinimaxError):
    module = "simulate"


class InvalidConfig(SimulateError, ValueError):
    pass


class SingularDesign(SimulateError, ValueError):
    pass


class OracleError(MinimaxError):
    module = "oracle"


class TooManyGroups(OracleError, ValueError):
    pass


class ResolutionTooCoarse(OracleError, ValueError):
    pass


class CliError(MinimaxError):
    module = "cli"


class ParseError(CliError, ValueError):
    pass

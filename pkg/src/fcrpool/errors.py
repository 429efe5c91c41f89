"""Exception types shared across the package.

``ValidationError`` subclasses signal bad inputs and map to CLI exit code 2;
``BudgetExceeded`` and ``MaxIterExceeded`` signal exhausted solve budgets and
map to exit code 3.
"""


class PoolError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(PoolError):
    """Invalid input data or arguments."""


class EmptyInput(ValidationError):
    pass


class DegeneratePair(ValidationError):
    """Two points with coinciding coordinates where distinct ones are required."""


class TooFarApart(ValidationError):
    """Point pair further apart than the circle diameter."""


class UnknownId(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class ParseError(ValidationError):
    """CSV/JSON input could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptySample(ValidationError):
    """A sampling request resolved to zero participants."""


class ShapeMismatch(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class InconsistentFamily(ValidationError):
    """Circle family references asset ids absent from the point set."""


class Infeasible(PoolError):
    """No feasible solution exists (cannot occur for the standard pool model)."""


class BudgetExceeded(PoolError):
    """Node budget of the exact solver was exhausted.

    Carries the best incumbent found so far (may be ``None``), the proven
    lower bound, and the number of explored nodes.
    """

    def __init__(self, message, best=None, lower_bound=None, nodes=None):
        super().__init__(message)
        self.best = best
        self.lower_bound = lower_bound
        self.nodes = nodes


class MaxIterExceeded(PoolError):
    """Iteration cap of the consensus solver was reached; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TransportError(PoolError):
    """A simulated message was lost or misrouted (always a bug)."""

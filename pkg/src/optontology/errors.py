"""Exception types shared across the package."""


class OptOntologyError(Exception):
    """Base class for every error this package raises on purpose."""


class ProblemFormatError(OptOntologyError):
    """Problem file could not be parsed.

    ``line``/``col`` are set for JSON syntax errors; ``where`` names the
    offending field for semantic errors (undeclared variable, bad cone tag,
    unknown op, wrong payload shape).
    """

    def __init__(self, message, *, line=None, col=None, where=None):
        super().__init__(message)
        self.line = line
        self.col = col
        self.where = where


class EvalDomainError(OptOntologyError):
    """Expression evaluated outside its domain (log of a nonpositive value,
    monomial off the positive orthant, fractional power of a negative base)."""


class UnboundVariableError(OptOntologyError):
    """Expression references a variable the assignment does not cover."""


class UnboundParameterError(OptOntologyError):
    """Expression references a named parameter with no bound value."""


class NondifferentiableError(OptOntologyError):
    """Analytic gradient requested at a kink (euclidean norm at residual zero)."""


class TransformError(OptOntologyError):
    """A rewrite rule was applied to a problem outside its scope."""


class NotReducible(TransformError):
    """Second-order rows cannot be collapsed to linear ones: some matrix
    block is nonzero. ``index`` is the first offending constraint."""

    def __init__(self, index):
        super().__init__(f"constraint {index} has a nonzero matrix block; "
                         "the norm does not reduce to a constant")
        self.index = index


class NotGP(TransformError):
    """Problem is not in posynomial form, so the log-space rewrite is undefined."""


class ShapeMismatch(TransformError):
    """LP is not in either recognized primal shape for dualization."""


class SolverError(OptOntologyError):
    """A solver could not run on the given problem (precondition failure)."""


class NoInterior(SolverError):
    """Barrier method found no strictly feasible start (or equality rows
    make the interior empty by construction)."""


class NumericalError(OptOntologyError):
    """Internal numerical failure (non-finite data where finite is required,
    eigenvalue iteration not converging)."""


class InvalidProblem(OptOntologyError):
    """Operation requires a problem that passes validation."""

    def __init__(self, violations):
        first = violations[0] if violations else None
        super().__init__(f"problem fails validation: {first}")
        self.violations = list(violations)

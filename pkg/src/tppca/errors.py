"""Exception hierarchy shared across the package."""


class TppcaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TppcaError, ValueError):
    """Malformed or out-of-range input."""


class CutLocusError(TppcaError, ValueError):
    """A point lies at (or numerically near) the cut locus of a base point."""


class NumericError(TppcaError, ArithmeticError):
    """A numerical routine failed; ``diagnostics`` carries the details."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConvergenceError(NumericError):
    """An iterative solver stopped without meeting its tolerance.

    ``last`` holds the final (or best) iterate and ``residual`` the
    corresponding residual, so callers can still inspect the result.
    """

    def __init__(self, message, last=None, residual=None, **diagnostics):
        super().__init__(message, **diagnostics)
        self.last = last
        self.residual = residual


class NewickError(InvalidInputError):
    """Syntax or format error in a Newick string."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class TreeStructureError(InvalidInputError):
    """The tree is not a rooted bifurcating tree with valid lengths."""


class ReconciliationError(InvalidInputError):
    """Dataset species and tree leaves do not match one to one."""

    def __init__(self, message, missing_in_data=(), missing_in_tree=()):
        super().__init__(message)
        self.missing_in_data = list(missing_in_data)
        self.missing_in_tree = list(missing_in_tree)


class StageError(TppcaError):
    """Failure inside a pipeline stage; wraps the original exception."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error

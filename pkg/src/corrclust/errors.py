"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class UnsupportedError(ValueError):
    """The instance or configuration is outside what an algorithm handles."""


class SizeGuardError(ValueError):
    """An exhaustive oracle was asked to enumerate too large an instance."""


class InfeasibleError(ValueError):
    """No candidate satisfies the hard constraints (e.g. infinite edges)."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(RuntimeError):
    """LP solver failed; ``best`` carries the last feasible iterate if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class AuditError(AssertionError):
    """A runtime guarantee (profit, diameter, per-vertex bound) was violated."""

"""Exception taxonomy shared by the core modules, the service and the CLI.

The CLI maps these onto process exit codes: usage errors exit 1, resource-cap
errors exit 2, everything else (convergence, data, invariant violations)
exits 3.
"""


class UsageError(ValueError):
    """Invalid arguments, configuration or identifiers."""


class GraphConstructionError(UsageError):
    """A level graph came out disconnected; a larger cone cutoff is needed."""


class ResourceCapError(RuntimeError):
    """A configured resource cap (node or edge budget) would be exceeded."""


class DataError(RuntimeError):
    """Degenerate data, e.g. atomic weights that break half-measure search."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])

"""Exception hierarchy shared by all phasesync modules."""


class PhaseSyncError(Exception):
    """Base class for domain errors raised by phasesync."""


class ShapeError(PhaseSyncError, ValueError):
    """Input array has the wrong shape or dimensions do not match."""


class NotSemiSectorialError(PhaseSyncError):
    """The numerical range contains the origin in its interior."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class NumericalDegeneracyError(PhaseSyncError):
    """A structural property holds only within tolerance and cannot be resolved."""


class NotEssentiallySemiSectorialError(PhaseSyncError):
    """No diagonal scaling tried renders the matrix semi-sectorial."""


class PreconditionError(PhaseSyncError):
    """An operation's documented precondition is violated."""


class NoSpanningTreeError(PreconditionError):
    """The graph has no root (its condensation has several sources)."""


class NotStronglyConnectedError(PreconditionError):
    """The graph is required to be strongly connected but is not."""


class NotSemiSimpleError(PhaseSyncError):
    """An imaginary-axis eigenvalue carries a Jordan block."""


class SingularResidueError(PhaseSyncError):
    """A residue matrix at a persistent mode is singular."""


class PoleEvaluationError(PhaseSyncError):
    """A transfer matrix was evaluated at (or numerically on top of) a pole."""


class SearchFailure(PhaseSyncError):
    """The low-gain search found no gain certifying synchronization."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

"""Exception types shared across the package."""


class JointIdaError(Exception):
    """Base class for all package-specific errors."""


class GraphFormatError(JointIdaError):
    """Malformed graph/SEM text input (bad syntax, duplicate edges, bad indices)."""


class CycleError(GraphFormatError):
    """A directed cycle was found where an acyclic graph is required."""


class NoConsistentExtensionError(JointIdaError):
    """A partially directed graph admits no acyclic extension with the required
    collider structure; the input is not a valid equivalence-class graph."""


class EnumerationSizeError(JointIdaError):
    """Equivalence-class enumeration was refused because the graph exceeds the cap."""


class NumericalError(JointIdaError):
    """Base class for numerical failures (exit code 3 in the CLI)."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix required to be positive definite is not, within tolerance.

    ``label`` identifies the variable whose pivot failed, when known.
    """

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class SingularMatrixError(NumericalError):
    """A linear system needed by an estimator is singular."""

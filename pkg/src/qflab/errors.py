"""Exception hierarchy shared by all qflab modules."""


class QflabError(Exception):
    """Base class for every error raised by qflab."""


class NotADensityMatrix(QflabError):
    """Operator fails the unit-trace / positivity test."""


class CutoffUnsafe(QflabError):
    """Boson state or operation reaches too close to the occupation cutoff."""


class DimensionOverflow(QflabError):
    """Requested Fock space exceeds the configured dimension guard."""


class InvalidBogoliubov(QflabError):
    """Block map violates the defining relations for its statistics."""


class BranchAmbiguity(QflabError):
    """Matrix logarithm does not yield a quadratic generator of the right form."""


class NotPure(QflabError):
    """Gaussian data fails the purity precondition."""


class NotAntisymmetric(QflabError):
    """Matrix handed to the Pfaffian is not antisymmetric."""


class SpeciesMismatch(QflabError):
    """Objects of different statistics were combined."""


class NonConvergence(QflabError):
    """Optimizer did not meet its convergence criterion."""


class ParseError(QflabError, ValueError):
    """Malformed ladder-operator expression.

    Attributes
    ----------
    position : int
        Zero-based character offset of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position

"""Exception hierarchy.

Input-shaped problems derive from :class:`InvalidInput`, numerical and
resource problems from :class:`ComputationError`; the CLI maps the two
families to exit codes 2 and 3.
"""


class AnosovLabError(Exception):
    pass


class InvalidInput(AnosovLabError, ValueError):
    pass


class ComputationError(AnosovLabError, ArithmeticError):
    pass


class InvalidMatrix(InvalidInput):
    pass


class InvalidIndex(InvalidInput, IndexError):
    pass


class InvalidFlag(InvalidInput):
    pass


class InvalidFunctional(InvalidInput):
    pass


class PreconditionViolation(InvalidInput):
    pass


class NotTransverse(InvalidInput):
    pass


class OutsideDomain(InvalidInput):
    pass


class NumericalFailure(ComputationError):
    pass


class DegenerateGap(ComputationError):
    """A singular-value gap needed for an attracting flag is too small."""

    def __init__(self, k, gap, tol):
        super().__init__(f"alpha_{k} gap {gap:.3e} below tolerance {tol:.1e}")
        self.k = k
        self.gap = gap


class BudgetExceeded(ComputationError):
    pass


class DedupAmbiguous(ComputationError):
    """Two products are neither clearly equal nor clearly distinct."""

    def __init__(self, word_a, word_b, distance):
        super().__init__(
            f"words {word_a!r} and {word_b!r} at relative projective distance {distance:.3e}"
        )
        self.words = (word_a, word_b)
        self.distance = distance


class EmptySample(ComputationError):
    pass


class RankAmbiguous(ComputationError):
    def __init__(self, singular_value, band):
        super().__init__(f"singular value {singular_value:.3e} inside ambiguity band {band}")
        self.singular_value = singular_value


class InsufficientData(ComputationError):
    pass


class InsufficientOverlap(ComputationError):
    pass


class ShadowAmbiguous(ComputationError):
    pass


class CocompactnessGap(ComputationError):
    def __init__(self, location, distance):
        super().__init__(
            f"no orbit point within R of the ray at depth {location:.4f} "
            f"(nearest at {distance:.4f})"
        )
        self.location = location
        self.distance = distance

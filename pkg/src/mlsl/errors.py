"""Exception types shared across the package."""


class MlslError(Exception):
    """Base class for all package errors."""


class MalformedDocument(MlslError):
    """Config document cannot be parsed at all."""


class InvariantViolation(MlslError):
    """A validated quantity broke its declared invariant; names the field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionMismatch(MlslError):
    """Vector or grid dimensions disagree."""


class NonFiniteState(MlslError):
    """A state left the finite range (blow-up guard)."""


class OutOfBox(MlslError):
    """A Gaussian packet does not fit inside the periodic box."""


class MassLeak(MlslError):
    """Probability mass reached the outer edge of the periodic box."""


class ResolutionInsufficient(MlslError):
    """Phase grid cannot resolve the requested momentum content."""


class SizeExceeded(MlslError):
    """Problem size above the supported cap."""


class NotConverged(MlslError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class NotNormalized(MlslError):
    """Input measure or density does not have unit mass."""


class NotPSD(MlslError):
    """Matrix is not symmetric positive semidefinite."""


class NonPositiveInput(MlslError):
    """A strictly positive parameter was zero or negative."""


class SupportViolation(MlslError):
    """Initial atoms sit outside the declared energy sublevel set."""


class GCViolated(MlslError):
    """Geometric observability condition failed on the sampled lattice."""


class IoFailure(MlslError):
    """Output files could not be written."""

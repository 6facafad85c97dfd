"""Exception types shared across the package."""


class RcregError(Exception):
    """Base class for all rcreg errors."""


class DimensionError(RcregError, ValueError):
    """Input has an inconsistent or unsupported shape."""


class DomainError(RcregError, ValueError):
    """Input value lies outside the admissible domain."""


class NotIdentifiableError(RcregError):
    """The covariate support cannot identify the covariance matrix.

    Carries the 1-based indices of covariates with fewer than three
    support points.
    """

    def __init__(self, deficient_coordinates):
        self.deficient_coordinates = list(deficient_coordinates)
        super().__init__(
            "covariance matrix not identifiable: coordinates "
            f"{self.deficient_coordinates} have fewer than 3 support points"
        )


class ExplosionError(RcregError):
    """A Cartesian support product exceeds the configured size cap."""


class InfeasibleError(RcregError):
    """No positive semidefinite completion is consistent with the inputs."""


class SingularDesignError(RcregError):
    """A design matrix is rank deficient where full rank is required."""


class SingularGramError(RcregError):
    """An empirical Gram matrix is numerically singular."""


class WitnessContradictionError(RcregError):
    """The closed-form certificate and the solver disagree.

    Raised when both certificate conditions hold but the coordinate
    descent solution does not match the closed-form one; indicates a
    solver defect, not bad user input.
    """

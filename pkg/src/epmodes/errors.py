"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An input parameter is outside its validity range."""


class DegenerateEnvironmentError(ParameterError):
    """The requested environment has an identically zero correlation function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class NumericalError(RuntimeError):
    """A numerical routine failed to converge."""


class StiffnessError(NumericalError):
    """The ODE integrator underflowed its step size."""


class AmbiguousClusterError(NumericalError):
    """Eigenvalue clustering could not be resolved unambiguously."""


class BracketError(RuntimeError):
    """A 1-D search bracket does not contain the sought feature."""


class TrackingError(RuntimeError):
    """Perturbed eigenvalues could not be tracked back to their cluster."""


class NotInRegimeError(RuntimeError):
    """The requested observable does not exist for these parameters."""


class UnsupportedConfigurationError(ValueError):
    """The operation is not defined for this model configuration."""


class BlockMixingError(RuntimeError):
    """The generator does not decompose into the expected sectors."""

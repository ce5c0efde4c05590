"""Exception hierarchy shared by all simulator modules."""


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(SimulationError):
    """Fock truncation dimension is too small or inconsistent."""


class DimensionMismatchError(SimulationError):
    """Operands live in Fock spaces of different dimension."""


class InvalidParameterError(SimulationError):
    """A physical parameter is outside its allowed range."""


class TruncationInadequateError(SimulationError):
    """Requested state does not fit in the truncated basis."""


class TruncationOverflowError(SimulationError):
    """Population leaked into the truncation tail during a run."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StepTooLargeError(SimulationError):
    """A single integrator step moved the state too far.

    ``dominant_term`` names the contribution (hamiltonian, damping,
    noise) with the largest norm at the failing step.
    """

    def __init__(self, message, dominant_term=None, time=None):
        super().__init__(message)
        self.dominant_term = dominant_term
        self.time = time


class NumericError(SimulationError):
    """Non-finite value encountered during integration."""


class DivergenceError(SimulationError):
    """Classical trajectory escaped to non-finite amplitude."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UndefinedSectionError(SimulationError):
    """A stroboscopic section is undefined (zero modulation frequency)."""


class InsufficientCoverageError(SimulationError):
    """Time series does not span the window an analysis requires."""


class HermiticityError(SimulationError):
    """Reconstruction residue exceeded the hermiticity tolerance."""


class ConfigError(SimulationError):
    """Run configuration is malformed or out of range."""

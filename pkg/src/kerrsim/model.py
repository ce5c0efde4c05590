"""Physical parameters and operator builders for the two-tone Kerr oscillator.

Internally hbar = 1 and the decay rate gamma = 1, so every rate is
dimensionless (a ratio to gamma) and time is measured in units of
1/gamma.  `gamma_abs` is carried only for converting intracavity
results to output-field units.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError
from .fock import BandedOperator

REGULAR = "regular"
CHAOTIC = "chaotic"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class SystemParams:
    """Oscillator and drive parameters, all in units of gamma.

    chi        Kerr (self-phase-modulation) strength
    detuning   oscillator frequency minus first drive frequency
    omega1     Rabi frequency of the first drive (complex allowed)
    omega2     Rabi frequency of the second drive
    delta_mod  difference of the two drive frequencies; 2*pi/delta_mod
               is the modulation period
    n_bath     mean thermal quanta of the reservoir
    gamma_abs  absolute decay rate, used only for unit conversion
    """

    chi: float
    detuning: float
    omega1: complex
    omega2: complex
    delta_mod: float
    n_bath: float = 0.0
    gamma_abs: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega1", complex(self.omega1))
        object.__setattr__(self, "omega2", complex(self.omega2))
        if self.n_bath < 0:
            raise InvalidParameterError(f"n_bath must be >= 0, got {self.n_bath}")
        if self.gamma_abs <= 0:
            raise InvalidParameterError(f"gamma_abs must be > 0, got {self.gamma_abs}")

    @property
    def period(self) -> float:
        """Modulation period 2*pi/delta_mod."""
        if self.delta_mod == 0:
            raise InvalidParameterError("period undefined for delta_mod = 0")
        return 2.0 * np.pi / abs(self.delta_mod)


def drive_coefficient(p: SystemParams, t: float) -> complex:
    """Coefficient of the creation operator at time t."""
    return p.omega1 + p.omega2 * cmath.exp(-1j * p.delta_mod * t)


def hamiltonian_at(p: SystemParams, t: float, dim: int) -> BandedOperator:
    """H(t) in units of hbar*gamma, as a tridiagonal banded operator.

    Diagonal entries are detuning*n + chi*n^2; the off-diagonals carry
    the two-tone drive, periodic in t with period 2*pi/delta_mod.
    """
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    n = np.arange(dim, dtype=np.float64)
    diag = p.detuning * n + p.chi * n * n
    f = drive_coefficient(p, t)
    sqrt_n1 = np.sqrt(n[: dim - 1] + 1.0)
    return BandedOperator(
        dim,
        {
            0: diag.astype(np.complex128),
            +1: np.conj(f) * sqrt_n1,
            -1: f * sqrt_n1,
        },
    )


def lindblad_ops(p: SystemParams, dim: int) -> tuple[BandedOperator, BandedOperator]:
    """Damping channels (sqrt(N+1) a, sqrt(N) a+) in gamma = 1 units.

    For a vacuum bath the second operator is identically zero; callers
    can skip it via `is_zero()`.
    """
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    if p.n_bath < 0:
        raise InvalidParameterError(f"n_bath must be >= 0, got {p.n_bath}")
    sqrt_n1 = np.sqrt(np.arange(1.0, dim))
    l_down = BandedOperator(dim, {1: np.sqrt(p.n_bath + 1.0) * sqrt_n1})
    l_up = BandedOperator(dim, {-1: np.sqrt(p.n_bath) * sqrt_n1})
    return l_down, l_up


def scale_params(p: SystemParams, lam: float) -> SystemParams:
    """Amplitude-scaling transformation alpha -> lam*alpha.

    chi' = chi/lam^2, detuning' = detuning + chi*(1 - 1/lam^2),
    omega' = lam*omega; the modulation frequency, decay rate and bath
    occupation are untouched.  The classical equation of motion is
    exactly equivariant under this map.
    """
    if lam <= 0:
        raise InvalidParameterError(f"scaling factor must be > 0, got {lam}")
    lam2 = lam * lam
    return replace(
        p,
        chi=p.chi / lam2,
        detuning=p.detuning + p.chi * (1.0 - 1.0 / lam2),
        omega1=lam * p.omega1,
        omega2=lam * p.omega2,
    )


def classify_regime(p: SystemParams) -> str:
    """Advisory label for the expected classical dynamics.

    Heuristic windows only: chaos needs comparable drive amplitudes and
    a modulation frequency of order gamma; never used to gate anything.
    """
    a1 = abs(p.omega1)
    a2 = abs(p.omega2)
    if a2 == 0.0 or a1 == 0.0:
        return REGULAR
    ratio = a1 / a2
    d = abs(p.delta_mod)
    if d < 0.1 or d > 100.0 or not (0.2 <= ratio <= 5.0):
        return REGULAR
    if 1.0 <= d <= 20.0 and 0.8 <= ratio <= 1.25:
        return CHAOTIC
    return INDETERMINATE

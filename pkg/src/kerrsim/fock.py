"""Truncated Fock-space linear algebra.

States are complex amplitude vectors over the number basis |0>..|D-1>,
operators are stored by diagonals (every operator in this model is
banded), so applying an operator costs O(bands * D) instead of O(D^2).
All containers are frozen after construction and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    TruncationInadequateError,
)

TAIL_WINDOW = 5  # top Fock levels audited for truncation leakage


def _frozen(arr, dtype=np.complex128):
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FockVector:
    """State vector c_n = <n|psi> in a D-level truncated Fock basis."""

    dim: int
    amps: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidDimensionError(f"Fock dimension must be >= 2, got {self.dim}")
        amps = _frozen(self.amps)
        if amps.shape != (self.dim,):
            raise DimensionMismatchError(
                f"amplitude array has shape {amps.shape}, expected ({self.dim},)"
            )
        object.__setattr__(self, "amps", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "FockVector":
        """Return the unit-norm version of this state (idempotent)."""
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        if abs(n - 1.0) < 1e-15:
            return self
        return FockVector(self.dim, self.amps / n)

    def tail_population(self, window: int = TAIL_WINDOW) -> float:
        """Population in the top `window` levels; leakage indicator."""
        w = min(window, self.dim)
        return float(np.sum(np.abs(self.amps[self.dim - w:]) ** 2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


@dataclass(frozen=True)
class BandedOperator:
    """Complex operator stored by diagonals.

    ``bands[k]`` holds the k-th diagonal: for k >= 0 entry j is element
    (j, j+k); for k < 0 entry j is element (j+|k|, j). Band arrays have
    length dim - |k|.
    """

    dim: int
    bands: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidDimensionError(f"operator dimension must be >= 1, got {self.dim}")
        frozen_bands = {}
        for k, band in self.bands.items():
            k = int(k)
            if abs(k) >= self.dim:
                raise InvalidDimensionError(
                    f"band offset {k} outside dimension {self.dim}"
                )
            band = _frozen(band)
            if band.shape != (self.dim - abs(k),):
                raise DimensionMismatchError(
                    f"band {k} has length {band.shape[0]}, expected {self.dim - abs(k)}"
                )
            frozen_bands[k] = band
        object.__setattr__(self, "bands", frozen_bands)

    def band(self, k: int) -> np.ndarray:
        """The k-th diagonal, zeros if absent."""
        if k in self.bands:
            return self.bands[k]
        return np.zeros(self.dim - abs(k), dtype=np.complex128)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        offsets = {abs(k) for k in self.bands}
        for k in offsets:
            upper = self.band(k)
            lower = self.band(-k)
            if np.max(np.abs(lower - upper.conj()), initial=0.0) > tol:
                return False
        return True

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(np.max(np.abs(b), initial=0.0) <= tol for b in self.bands.values())

    def adjoint(self) -> "BandedOperator":
        return BandedOperator(self.dim, {-k: b.conj() for k, b in self.bands.items()})

    def scale(self, factor: complex) -> "BandedOperator":
        return BandedOperator(self.dim, {k: factor * b for k, b in self.bands.items()})

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for k, band in self.bands.items():
            if k >= 0:
                out[np.arange(self.dim - k), np.arange(k, self.dim)] = band
            else:
                m = -k
                out[np.arange(m, self.dim), np.arange(self.dim - m)] = band
        return out


def compose(a: BandedOperator, b: BandedOperator) -> BandedOperator:
    """Operator product a @ b, still stored by diagonals."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"compose dims {a.dim} != {b.dim}")
    dim = a.dim
    out: dict[int, np.ndarray] = {}
    for ka, ba in a.bands.items():
        for kb, bb in b.bands.items():
            k = ka + kb
            if abs(k) >= dim:
                continue
            # rows i where both factors contribute: A[i, i+ka] * B[i+ka, i+k]
            lo = max(0, -ka, -k)
            hi = min(dim, dim - ka, dim - k)
            if hi <= lo:
                continue
            rows = np.arange(lo, hi)
            va = ba[rows] if ka >= 0 else ba[rows + ka]
            mid = rows + ka
            vb = bb[mid] if kb >= 0 else bb[mid + kb]
            acc = out.setdefault(k, np.zeros(dim - abs(k), dtype=np.complex128))
            idx = rows if k >= 0 else rows + k
            acc[idx] += va * vb
    return BandedOperator(dim, out)


def add(a: BandedOperator, b: BandedOperator) -> BandedOperator:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"add dims {a.dim} != {b.dim}")
    out = {k: np.array(v) for k, v in a.bands.items()}
    for k, v in b.bands.items():
        if k in out:
            out[k] = out[k] + v
        else:
            out[k] = v
    return BandedOperator(a.dim, out)


def build_annihilation(dim: int) -> BandedOperator:
    """Boson annihilation operator a, a|n> = sqrt(n)|n-1>."""
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    return BandedOperator(dim, {1: np.sqrt(np.arange(1.0, dim))})


def build_creation(dim: int) -> BandedOperator:
    """Boson creation operator, the conjugate transpose of annihilation."""
    return build_annihilation(dim).adjoint()


def build_number(dim: int) -> BandedOperator:
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    return BandedOperator(dim, {0: np.arange(dim, dtype=np.float64)})


def build_number_squared(dim: int) -> BandedOperator:
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    n = np.arange(dim, dtype=np.float64)
    return BandedOperator(dim, {0: n * n})


def build_identity(dim: int) -> BandedOperator:
    return BandedOperator(dim, {0: np.ones(dim)})


def make_vacuum(dim: int) -> FockVector:
    amps = np.zeros(dim, dtype=np.complex128)
    amps[0] = 1.0
    return FockVector(dim, amps)


def make_fock(level: int, dim: int) -> FockVector:
    amps = np.zeros(dim, dtype=np.complex128)
    amps[level] = 1.0
    return FockVector(dim, amps)


def make_coherent(alpha: complex, dim: int, tail_tol: float = 1e-8) -> FockVector:
    """Coherent state |alpha> truncated to `dim` levels.

    Amplitudes are built in log space (log-gamma for the factorial) so
    large |alpha| cannot overflow, then renormalized.  Raises
    TruncationInadequateError when the audited tail carries more than
    `tail_tol` population.
    """
    if dim < 2:
        raise InvalidDimensionError(f"need dim >= 2, got {dim}")
    alpha = complex(alpha)
    if alpha == 0:
        return make_vacuum(dim)
    n = np.arange(dim)
    log_mag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1.0)
    phase = n * np.angle(alpha)
    amps = np.exp(log_mag + 1j * phase)
    state = FockVector(dim, amps).normalize()
    tail = state.tail_population()
    if tail > tail_tol:
        raise TruncationInadequateError(
            f"coherent state alpha={alpha} leaves {tail:.3e} population in the "
            f"top {TAIL_WINDOW} of {dim} levels (tolerance {tail_tol:.1e})"
        )
    return state


def apply(op: BandedOperator, psi: FockVector) -> FockVector:
    """Banded matrix-vector product op @ psi."""
    if op.dim != psi.dim:
        raise DimensionMismatchError(f"operator dim {op.dim} != state dim {psi.dim}")
    return FockVector(psi.dim, apply_to_array(op, psi.amps))


def apply_to_array(op: BandedOperator, amps: np.ndarray) -> np.ndarray:
    dim = op.dim
    out = np.zeros(dim, dtype=np.complex128)
    for k, band in op.bands.items():
        if k >= 0:
            out[: dim - k] += band * amps[k:]
        else:
            m = -k
            out[m:] += band * amps[: dim - m]
    return out


def expect(op: BandedOperator, psi: FockVector) -> complex:
    """Expectation value <psi|op|psi>; real up to roundoff for Hermitian op."""
    if op.dim != psi.dim:
        raise DimensionMismatchError(f"operator dim {op.dim} != state dim {psi.dim}")
    return complex(np.vdot(psi.amps, apply_to_array(op, psi.amps)))


@dataclass(frozen=True)
class DensityMatrix:
    """Dense rho_nm in the Fock basis.

    The container itself stays permissive (time derivatives are stored
    here too); `validate_state` checks the physical-state invariants.
    """

    dim: int
    elems: np.ndarray

    def __post_init__(self):
        elems = _frozen(self.elems)
        if elems.shape != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"density matrix shape {elems.shape}, expected ({self.dim}, {self.dim})"
            )
        object.__setattr__(self, "elems", elems)

    def trace(self) -> complex:
        return complex(np.trace(self.elems))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.elems - self.elems.conj().T), initial=0.0))

    def min_diagonal(self) -> float:
        return float(np.min(self.elems.diagonal().real))

    def validate_state(self, herm_tol=1e-10, trace_tol=1e-8, diag_tol=-1e-10) -> "DensityMatrix":
        defect = self.hermiticity_defect()
        if defect > herm_tol:
            raise ValueError(f"density matrix hermiticity defect {defect:.3e} > {herm_tol:.1e}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {tr} deviates from 1 beyond {trace_tol:.1e}")
        md = self.min_diagonal()
        if md < diag_tol:
            raise ValueError(f"density matrix diagonal entry {md:.3e} below {diag_tol:.1e}")
        return self

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.dim, self.elems / self.trace().real)


def pure_density(psi: FockVector) -> DensityMatrix:
    return DensityMatrix(psi.dim, np.outer(psi.amps, psi.amps.conj()))


def thermal_density(n_mean: float, dim: int) -> DensityMatrix:
    """Thermal state with mean occupation n_mean (geometric populations)."""
    if n_mean < 0:
        raise ValueError(f"thermal occupation must be >= 0, got {n_mean}")
    if n_mean == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        ratio = n_mean / (1.0 + n_mean)
        p = ratio ** np.arange(dim) / (1.0 + n_mean)
        p /= p.sum()  # renormalize the truncated geometric series
    return DensityMatrix(dim, np.diag(p.astype(np.complex128)))

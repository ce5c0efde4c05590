"""Wigner quasiprobability reconstruction from Fock-basis density matrices.

The function is assembled on a native polar grid from the analytic
coefficients of |m><n| projectors: associated Laguerre polynomials with
a Gaussian envelope and a vortex phase exp(i(m-n)theta).  The radial
factor sqrt(min!/max!) (2r)^|m-n| exp(-2r^2) L_k^q(4r^2) is carried as
one jointly-scaled quantity through an upward recurrence in the degree,
with power-of-two rescaling, because the separate factors overflow or
underflow doubles long before the product (which is bounded by 2/pi)
does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import HermiticityError, InvalidParameterError, NumericError
from .fock import DensityMatrix

TWO_OVER_PI = 2.0 / math.pi
RESIDUE_LIMIT = 1e-6
SKIP_TOL = 1e-14
_RESCALE_LIMIT = 2.0**840
_RESCALE_POW = 840  # rescale by 2^-840, tracked in a per-radius exponent


@dataclass(frozen=True)
class WignerGrid:
    """Polar-sampled real Wigner field with quadrature metadata.

    Radial nodes are Gauss-Legendre points on (0, r_max) and
    `weights_r` already carries the polar measure factor r, so
    integrals are sum(values * weights_r[:, None] * weights_theta).
    X = r*cos(theta), Y = r*sin(theta).
    """

    r_values: np.ndarray
    theta_values: np.ndarray
    values: np.ndarray
    weights_r: np.ndarray
    weights_theta: np.ndarray
    imag_residue: float = 0.0

    def __post_init__(self):
        if self.values.shape != (len(self.r_values), len(self.theta_values)):
            raise InvalidParameterError(
                f"values shape {self.values.shape} does not match grid "
                f"({len(self.r_values)}, {len(self.theta_values)})"
            )
        if not np.all(np.isfinite(self.values)):
            raise NumericError("Wigner grid contains non-finite values")


def polar_nodes(r_max: float, n_r: int = 256, n_theta: int = 180):
    """Gauss-Legendre radial nodes/weights (with the r factor) and uniform angles."""
    if r_max <= 0 or n_r < 2 or n_theta < 4:
        raise InvalidParameterError("need r_max > 0, n_r >= 2, n_theta >= 4")
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * r_max * (x + 1.0)
    w_r = 0.5 * r_max * w * r
    theta = np.arange(n_theta) * (2.0 * math.pi / n_theta)
    w_theta = np.full(n_theta, 2.0 * math.pi / n_theta)
    return r, w_r, theta, w_theta


def _scaled_laguerre_seed(q: int, r: np.ndarray):
    """log of sqrt(1/q!) (2r)^q exp(-2r^2), the k = 0 radial factor."""
    return q * np.log(2.0 * r) - 2.0 * r * r - 0.5 * gammaln(q + 1.0)


def _radial_sums(diag_plus, diag_minus, q: int, r: np.ndarray):
    """Radial profiles sum_k d[k] (-1)^k P_k^(q)(r) for the +q and -q diagonals.

    P_k is the full radial coefficient (Laguerre, power, Gaussian and
    factorial ratio in one), advanced by the three-term recurrence.  It
    is carried as mantissa * 2^e2 with exact power-of-two rescaling:
    the true values are bounded by pi/2 but the mantissa relative to
    the k = 0 seed can pass through exp(2 r^2), far beyond double
    range.  ldexp at readout collapses truly negligible values to zero.
    """
    x = 4.0 * r * r
    kmax = len(diag_plus)
    log2_seed = _scaled_laguerre_seed(q, r) / math.log(2.0)
    e2 = np.floor(log2_seed)
    mant = np.exp2(log2_seed - e2)
    e2 = e2.astype(np.int64)
    p_prev = np.ones_like(r)  # mantissa of P_0 relative to the seed
    p_curr = (1.0 + q - x) / math.sqrt(1.0 + q)
    sum_plus = np.zeros(len(r), dtype=np.complex128)
    sum_minus = np.zeros(len(r), dtype=np.complex128)

    sign = 1.0
    for k in range(kmax):
        p_k = p_prev if k == 0 else p_curr
        term = _ldexp_clamped(sign * p_k * mant, e2)
        dp = diag_plus[k]
        dm = diag_minus[k]
        if abs(dp) >= SKIP_TOL:
            sum_plus += dp * term
        if abs(dm) >= SKIP_TOL:
            sum_minus += dm * term
        sign = -sign
        if k == kmax - 1:
            break
        if k >= 1:
            kk = float(k)
            c1 = math.sqrt((kk + 1.0) / (kk + 1.0 + q))
            c2 = math.sqrt((kk + q) * (kk + 1.0) * kk / (kk + 1.0 + q))
            p_next = (c1 * (2.0 * kk + 1.0 + q - x) * p_curr - c2 * p_prev) / (kk + 1.0)
            p_prev = p_curr
            p_curr = p_next
            big = np.abs(p_curr) > _RESCALE_LIMIT
            if big.any():
                f = np.where(big, 2.0**-_RESCALE_POW, 1.0)
                p_curr = p_curr * f
                p_prev = p_prev * f
                e2 = e2 + np.where(big, _RESCALE_POW, 0)
    return sum_plus, sum_minus


def _ldexp_clamped(mantissa: np.ndarray, e2: np.ndarray) -> np.ndarray:
    # ldexp only accepts int32 exponents; clamping is safe because
    # anything past +-20000 is an exact 0 or would have overflowed anyway
    return np.ldexp(mantissa, np.clip(e2, -20000, 20000).astype(np.int32))


def wigner_coeff(m: int, n: int, r: float, theta: float) -> complex:
    """Wigner coefficient of |m><n| at polar point (r, theta).

    Satisfies wigner_coeff(m, n, ...) == conj(wigner_coeff(n, m, ...));
    magnitude never exceeds 2/pi.
    """
    if m < 0 or n < 0 or r < 0:
        raise InvalidParameterError("need m, n >= 0 and r >= 0")
    k = min(m, n)
    q = abs(m - n)
    if r == 0.0:
        if q != 0:
            return 0.0 + 0.0j
        radial = (-1.0) ** k  # L_k(0) = 1, unit seed
        return complex(TWO_OVER_PI * radial)
    d = np.zeros(k + 1)
    d[k] = 1.0
    rr = np.array([float(r)])
    s_plus, _ = _radial_sums(d, d, q, rr)
    val = TWO_OVER_PI * s_plus[0].real * np.exp(1j * (m - n) * theta)
    if not np.isfinite(val.real) or not np.isfinite(val.imag):
        raise NumericError(f"non-finite Wigner coefficient for m={m}, n={n}, r={r}")
    return complex(val)


def wigner_from_rho(
    rho: DensityMatrix,
    r_max: float | None = None,
    n_r: int = 256,
    n_theta: int = 180,
) -> WignerGrid:
    """Reconstruct W(r, theta) = sum_mn rho_nm W_mn on a polar grid.

    The real part is stored; the largest imaginary residue is recorded
    on the grid and raises HermiticityError above 1e-6.  Diagonals of
    rho whose entries all fall below 1e-14 are skipped.
    """
    dim = rho.dim
    elems = rho.elems
    if r_max is None:
        pops = elems.diagonal().real
        n_mean = max(float(pops @ np.arange(dim)), 0.0)
        r_max = math.sqrt(n_mean) + 6.0
    r, w_r, theta, w_theta = polar_nodes(r_max, n_r, n_theta)

    q_offsets = []
    profiles = []
    for q in range(dim):
        diag_plus = np.ascontiguousarray(np.diagonal(elems, offset=q))
        diag_minus = np.ascontiguousarray(np.diagonal(elems, offset=-q))
        if (
            np.max(np.abs(diag_plus)) < SKIP_TOL
            and np.max(np.abs(diag_minus)) < SKIP_TOL
        ):
            continue
        s_plus, s_minus = _radial_sums(diag_plus, diag_minus, q, r)
        # rho_{n, n+q} pairs with a phase exp(+iq theta), rho_{n+q, n}
        # with exp(-iq theta)
        q_offsets.append(q)
        profiles.append((s_plus, s_minus))

    w_complex = np.zeros((n_r, n_theta), dtype=np.complex128)
    for q, (s_plus, s_minus) in zip(q_offsets, profiles):
        phase = np.exp(1j * q * theta)
        if q == 0:
            w_complex += np.outer(s_plus, phase)
        else:
            w_complex += np.outer(s_plus, phase)
            w_complex += np.outer(s_minus, phase.conj())
    w_complex *= TWO_OVER_PI

    residue = float(np.max(np.abs(w_complex.imag), initial=0.0))
    if residue > RESIDUE_LIMIT:
        raise HermiticityError(
            f"imaginary residue {residue:.3e} exceeds {RESIDUE_LIMIT:.1e}; "
            f"input density matrix is not Hermitian"
        )
    return WignerGrid(
        r_values=r,
        theta_values=theta,
        values=np.ascontiguousarray(w_complex.real),
        weights_r=w_r,
        weights_theta=w_theta,
        imag_residue=residue,
    )


def integrate_wigner(grid: WignerGrid) -> float:
    """Quadrature of W over the plane; near 1 for a valid state."""
    return float(grid.weights_r @ grid.values @ grid.weights_theta)


def wigner_at(rho: DensityMatrix, x: float, y: float) -> float:
    """W evaluated at a single Cartesian phase-space point."""
    r = math.hypot(x, y)
    theta = math.atan2(y, x)
    if r == 0.0:
        # only the q = 0 diagonal survives at the origin
        pops = rho.elems.diagonal()
        signs = (-1.0) ** np.arange(rho.dim)
        return float(TWO_OVER_PI * np.real(pops @ signs))
    rr = np.array([r])
    total = 0.0 + 0.0j
    for q in range(rho.dim):
        diag_plus = np.ascontiguousarray(np.diagonal(rho.elems, offset=q))
        diag_minus = np.ascontiguousarray(np.diagonal(rho.elems, offset=-q))
        if (
            np.max(np.abs(diag_plus)) < SKIP_TOL
            and np.max(np.abs(diag_minus)) < SKIP_TOL
        ):
            continue
        s_plus, s_minus = _radial_sums(diag_plus, diag_minus, q, rr)
        if q == 0:
            total += s_plus[0]
        else:
            total += s_plus[0] * np.exp(1j * q * theta)
            total += s_minus[0] * np.exp(-1j * q * theta)
    return float(TWO_OVER_PI * total.real)


def grid_to_cartesian(grid: WignerGrid):
    """Flatten to (x, y, w) columns, radius-major (theta fastest)."""
    r = np.repeat(grid.r_values, len(grid.theta_values))
    th = np.tile(grid.theta_values, len(grid.r_values))
    return r * np.cos(th), r * np.sin(th), grid.values.ravel()


def centroid(grid: WignerGrid, positive_only: bool = True):
    """(X, Y) centroid of the (optionally positive part of the) field."""
    vals = grid.values.copy()
    if positive_only:
        vals[vals < 0] = 0.0
    weight = grid.weights_r[:, None] * grid.weights_theta[None, :]
    total = float(np.sum(vals * weight))
    if total <= 0:
        raise InvalidParameterError("cannot take centroid of a non-positive field")
    x = grid.r_values[:, None] * np.cos(grid.theta_values)[None, :]
    y = grid.r_values[:, None] * np.sin(grid.theta_values)[None, :]
    return (
        float(np.sum(vals * weight * x) / total),
        float(np.sum(vals * weight * y) / total),
    )

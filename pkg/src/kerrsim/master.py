"""Deterministic Lindblad master-equation oracle.

Integrates the full density matrix with a classic fixed-step 4th-order
scheme, sharing the step-size rule with the stochastic engine so the
two can be compared without integrator-mismatch ambiguity.  Intended
for small-to-moderate truncation where dense D x D storage is cheap;
the operators themselves stay banded and are applied by diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError, StepTooLargeError
from .fock import BandedOperator, DensityMatrix, compose
from .model import SystemParams, drive_coefficient, lindblad_ops
from .qsd import _check_grid

TRACE_DRIFT_LIMIT = 1e-6  # per-step renormalization beyond this aborts


@dataclass(frozen=True)
class MasterConfig:
    """Time grid and truncation for a density-matrix run."""

    dt: float
    t_end: float
    record_times: np.ndarray
    dim: int

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be > 0, got {self.dt}")
        if self.dim < 2:
            raise InvalidParameterError(f"dim must be >= 2, got {self.dim}")
        rec, rec_steps = _check_grid(self.record_times, self.dt, self.t_end, "record_times")
        rec.setflags(write=False)
        object.__setattr__(self, "record_times", rec)
        object.__setattr__(self, "_record_steps", rec_steps)


def _left_apply(op: BandedOperator, mat: np.ndarray, out: np.ndarray, scale=1.0):
    """out += scale * (op @ mat) using the diagonals of op."""
    dim = op.dim
    for k, band in op.bands.items():
        if k >= 0:
            out[: dim - k, :] += (scale * band)[:, None] * mat[k:, :]
        else:
            m = -k
            out[m:, :] += (scale * band)[:, None] * mat[: dim - m, :]


def _right_apply(mat: np.ndarray, op: BandedOperator, out: np.ndarray, scale=1.0):
    """out += scale * (mat @ op) using the diagonals of op."""
    dim = op.dim
    for k, band in op.bands.items():
        if k >= 0:
            out[:, k:] += mat[:, : dim - k] * (scale * band)[None, :]
        else:
            m = -k
            out[:, : dim - m] += mat[:, m:] * (scale * band)[None, :]


class _Generator:
    """Precomputed operator pieces for one parameter set and dimension."""

    def __init__(self, p: SystemParams, dim: int):
        self.p = p
        self.dim = dim
        n = np.arange(dim, dtype=np.float64)
        self.hdiag = p.detuning * n + p.chi * n * n
        self.sqrt_n1 = np.sqrt(n[:-1] + 1.0)
        l_down, l_up = lindblad_ops(p, dim)
        self.channels = []
        for op in (l_down, l_up):
            if op.is_zero():
                continue
            self.channels.append((op, op.adjoint(), compose(op.adjoint(), op)))

    def apply(self, rho: np.ndarray, t: float) -> np.ndarray:
        """-i[H(t), rho] + sum_i (Li rho Li+ - 1/2 {Li+ Li, rho})."""
        dim = self.dim
        out = np.zeros_like(rho)

        # commutator with the banded Hamiltonian
        f = drive_coefficient(self.p, t)
        h = BandedOperator(
            dim,
            {
                0: self.hdiag.astype(np.complex128),
                1: np.conj(f) * self.sqrt_n1,
                -1: f * self.sqrt_n1,
            },
        )
        _left_apply(h, rho, out, -1j)
        _right_apply(rho, h, out, +1j)

        for op, op_dag, op_dag_op in self.channels:
            l_rho = np.zeros_like(rho)
            _left_apply(op, rho, l_rho)
            _right_apply(l_rho, op_dag, out)
            _left_apply(op_dag_op, rho, out, -0.5)
            _right_apply(rho, op_dag_op, out, -0.5)
        return out


def liouvillian_apply(rho: DensityMatrix, p: SystemParams, t: float) -> DensityMatrix:
    """Time derivative of rho under the master equation.

    Hermitian and traceless up to roundoff for Hermitian input.
    """
    gen = _Generator(p, rho.dim)
    return DensityMatrix(rho.dim, gen.apply(np.asarray(rho.elems), t))


def run_master(
    p: SystemParams, cfg: MasterConfig, initial: DensityMatrix
) -> list[tuple[float, DensityMatrix]]:
    """Fixed-step RK4 integration, recording at the configured times.

    The state is re-symmetrized and trace-renormalized every step; a
    per-step trace drift above 1e-6 raises StepTooLargeError.
    """
    if initial.dim != cfg.dim:
        raise DimensionMismatchError(
            f"initial dim {initial.dim} != config dim {cfg.dim}"
        )
    initial.validate_state()
    gen = _Generator(p, cfg.dim)
    rho = np.array(initial.elems, dtype=np.complex128)
    dt = cfg.dt
    rec_steps = set(cfg._record_steps.tolist())
    n_steps = int(cfg._record_steps[-1]) if len(cfg._record_steps) else 0

    out: list[tuple[float, DensityMatrix]] = []
    if 0 in rec_steps:
        out.append((0.0, DensityMatrix(cfg.dim, rho.copy())))
    for k in range(n_steps):
        t = k * dt
        k1 = gen.apply(rho, t)
        k2 = gen.apply(rho + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = gen.apply(rho + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = gen.apply(rho + dt * k3, t + dt)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        drift = abs(tr - 1.0)
        if drift > TRACE_DRIFT_LIMIT:
            raise StepTooLargeError(
                f"trace drifted by {drift:.3e} in one step at t = {t + dt:.6g}; "
                f"reduce dt",
                time=t + dt,
            )
        rho = rho / tr
        if (k + 1) in rec_steps:
            out.append((float((k + 1) * dt), DensityMatrix(cfg.dim, rho.copy())))
    return out


def rho_stats(rho: DensityMatrix) -> tuple[float, float, float, float]:
    """(n_mean, n2_mean, variance, Q) from the Fock diagonal.

    Q is NaN when the mean occupation is numerically zero.
    """
    pops = rho.elems.diagonal().real
    n = np.arange(rho.dim, dtype=np.float64)
    n_mean = float(pops @ n)
    n2_mean = float(pops @ (n * n))
    var = n2_mean - n_mean * n_mean
    if n_mean < 1e-12:
        return n_mean, n2_mean, var, float("nan")
    return n_mean, n2_mean, var, (var - n_mean) / n_mean

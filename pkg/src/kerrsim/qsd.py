"""Stochastic quantum-state-diffusion integration of single trajectories.

The pure-state unraveling drives a Fock-space vector with two complex
Wiener channels (one per damping operator).  A step is an Ito
Euler-Maruyama update of the unnormalized increment

    d|psi> = -i H |psi> dt
             - 1/2 sum_i (Li+Li - 2<Li+>Li + <Li><Li+>) |psi> dt
             + sum_i (Li - <Li>) |psi> dxi_i

followed by explicit renormalization, with every expectation value
taken on the pre-step state.  The ensemble mean of |psi><psi| then
reproduces the damped-oscillator master equation, which is what the
`master` module checks against.

`run_trajectory` drives a compiled kernel; `qsd_step` is the plain
numpy reference used to validate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .classical import estimate_peak_excitation
from .errors import (
    InvalidParameterError,
    NumericError,
    StepTooLargeError,
    TruncationOverflowError,
)
from .fock import FockVector, apply_to_array
from .model import SystemParams, drive_coefficient, hamiltonian_at, lindblad_ops

GRID_ALIGN_TOL = 1e-9  # record times must sit on the step grid this tightly
STEP_NORM_LIMIT = 0.3  # diagnostic bound on a single |d psi|
_FLUSH = 1e-200  # amplitudes below this are snapped to zero (subnormal stall guard)

_TERM_NAMES = {1: "hamiltonian", 2: "damping", 3: "noise"}


def _check_grid(times, dt, t_end, label):
    arr = np.asarray(times, dtype=np.float64)
    if arr.size and (np.any(arr < -GRID_ALIGN_TOL) or np.any(arr > t_end + GRID_ALIGN_TOL)):
        raise InvalidParameterError(f"{label} must lie within [0, t_end]")
    if np.any(np.diff(arr) <= 0):
        raise InvalidParameterError(f"{label} must be strictly increasing")
    steps = np.round(arr / dt).astype(np.int64)
    if np.max(np.abs(arr - steps * dt), initial=0.0) > GRID_ALIGN_TOL:
        raise InvalidParameterError(
            f"every entry of {label} must be an integer multiple of dt"
        )
    return arr, steps


@dataclass(frozen=True)
class TrajectoryConfig:
    """Time grid, truncation and RNG seed for one stochastic trajectory."""

    dt: float
    t_end: float
    record_times: np.ndarray
    dim: int
    seed: int
    tail_threshold: float = 1e-6
    snapshot_times: tuple = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be > 0, got {self.dt}")
        if self.dim < 2:
            raise InvalidParameterError(f"dim must be >= 2, got {self.dim}")
        rec, rec_steps = _check_grid(self.record_times, self.dt, self.t_end, "record_times")
        rec.setflags(write=False)
        object.__setattr__(self, "record_times", rec)
        object.__setattr__(self, "_record_steps", rec_steps)
        _, snap_steps = _check_grid(
            np.asarray(sorted(self.snapshot_times)), self.dt, self.t_end, "snapshot_times"
        )
        object.__setattr__(self, "_snapshot_steps", snap_steps)


@dataclass(frozen=True)
class WienerPair:
    """Complex Ito increments for the two damping channels."""

    dxi1: complex
    dxi2: complex


@dataclass(frozen=True)
class TrajectoryRecord:
    time: float
    n_mean: float
    n2_mean: float
    tail_pop: float
    amps_snapshot: FockVector | None = None


def draw_wiener(rng: np.random.Generator, dt: float) -> WienerPair:
    """Draw one pair of complex Wiener increments.

    Each channel gets sqrt(dt/2) * (g + i*g') with independent standard
    normals, so mean 0, vanishing dxi*dxi correlation and
    <dxi dxi*> = dt per channel.  Consumes exactly four normals from
    the stream, matching the compiled kernel's layout.
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    g = rng.standard_normal(4)
    scale = math.sqrt(dt / 2.0)
    return WienerPair(
        scale * (g[0] + 1j * g[1]),
        scale * (g[2] + 1j * g[3]),
    )


def default_step(p: SystemParams, dim: int) -> float:
    """Default dt: bounds the fastest phase rotation and drift to 0.05.

    Covers the Kerr rotation at the truncation edge, the drive in the
    highest level, and the thermal in/out rates.  Acceptance runs are
    additionally convergence-checked by halving.
    """
    rot = (
        abs(p.detuning)
        + abs(p.chi) * (dim - 1) ** 2
        + 2.0 * (abs(p.omega1) + abs(p.omega2)) * math.sqrt(dim)
    )
    rate = max(rot, (p.n_bath + 1.0) * dim, 1.0)
    return 0.05 / rate


def default_dim(p: SystemParams, t_end: float = 12.0) -> int:
    """Truncation sized from a classical pre-run of the mean field.

    Poissonian-width headroom (10 sigma) plus a flat safety margin on
    the classical peak excitation; the tail audit enforces adequacy at
    run time.
    """
    n_peak = estimate_peak_excitation(p, t_end)
    return int(math.ceil(n_peak + 10.0 * math.sqrt(n_peak) + 10.0))


def qsd_step(
    psi: FockVector, p: SystemParams, t: float, dt: float, w: WienerPair
) -> FockVector:
    """Single Euler-Maruyama update, numpy reference implementation.

    Deterministic given (psi, p, t, dt, w); raises StepTooLargeError
    when |d psi| reaches the diagnostic bound, naming the largest of
    the hamiltonian / damping / noise contributions.
    """
    amps = psi.amps
    dim = psi.dim
    h = hamiltonian_at(p, t, dim)
    l_down, l_up = lindblad_ops(p, dim)

    h_term = -1j * apply_to_array(h, amps) * dt
    damp_term = np.zeros(dim, dtype=np.complex128)
    noise_term = np.zeros(dim, dtype=np.complex128)
    for op, dxi in ((l_down, w.dxi1), (l_up, w.dxi2)):
        if op.is_zero():
            continue
        l_psi = apply_to_array(op, amps)
        e_l = complex(np.vdot(amps, l_psi))
        ldl_psi = apply_to_array(op.adjoint(), l_psi)
        damp_term += -0.5 * (ldl_psi - 2.0 * np.conj(e_l) * l_psi + abs(e_l) ** 2 * amps) * dt
        noise_term += (l_psi - e_l * amps) * dxi

    dpsi = h_term + damp_term + noise_term
    new = amps + dpsi
    norm = np.linalg.norm(new)
    if not np.isfinite(norm):
        raise NumericError(f"non-finite amplitude after step at t = {t:.6g}")
    d_norm = np.linalg.norm(dpsi)
    if d_norm >= STEP_NORM_LIMIT:
        norms = {
            "hamiltonian": np.linalg.norm(h_term),
            "damping": np.linalg.norm(damp_term),
            "noise": np.linalg.norm(noise_term),
        }
        dominant = max(norms, key=norms.get)
        raise StepTooLargeError(
            f"|d psi| = {d_norm:.3f} >= {STEP_NORM_LIMIT} at t = {t:.6g}; "
            f"dominant term: {dominant}",
            dominant_term=dominant,
            time=t,
        )
    return FockVector(dim, new / norm)


@njit(cache=True, nogil=True)
def _advance(psi, scratch, hdiag, s1, nvec, n1vec, nsteps, dt, t0,
             om1, om2, dmod, c1, c2, normals):
    """Advance `nsteps` Euler-Maruyama steps in place.

    Returns (status, failed_step, h_norm, damp_norm, noise_norm) with
    status 0 = ok, 1 = step too large, 2 = non-finite.
    """
    dim = psi.shape[0]
    sq1 = np.sqrt(c1)
    sq2 = np.sqrt(c2)
    rt = np.sqrt(dt / 2.0)
    limit2 = STEP_NORM_LIMIT * STEP_NORM_LIMIT
    for k in range(nsteps):
        t = t0 + k * dt
        f = om1 + om2 * np.exp(-1j * dmod * t)
        cf = np.conj(f)
        ea = 0j
        for i in range(dim - 1):
            ea += np.conj(psi[i]) * s1[i] * psi[i + 1]
        cea = np.conj(ea)
        abs2 = ea.real * ea.real + ea.imag * ea.imag
        dxi1 = rt * (normals[k, 0] + 1j * normals[k, 1])
        dxi2 = rt * (normals[k, 2] + 1j * normals[k, 3])
        nd = 0.0
        nn = 0.0
        for i in range(dim):
            up = s1[i] * psi[i + 1] if i < dim - 1 else 0j
            dn = s1[i - 1] * psi[i - 1] if i > 0 else 0j
            base = psi[i]
            dc = -0.5 * ((c1 + c2) * abs2 + c1 * nvec[i] + c2 * n1vec[i]) - 1j * hdiag[i]
            dpsi = (dc * base + (c1 * cea - 1j * cf) * up + (c2 * ea - 1j * f) * dn) * dt \
                + sq1 * (up - ea * base) * dxi1 + sq2 * (dn - cea * base) * dxi2
            w = base + dpsi
            scratch[i] = w
            nd += dpsi.real * dpsi.real + dpsi.imag * dpsi.imag
            nn += w.real * w.real + w.imag * w.imag
        if not np.isfinite(nn):
            return 2, k, 0.0, 0.0, 0.0
        if nd >= limit2:
            # diagnose: recompute the three contributions separately
            h2 = 0.0
            g2 = 0.0
            w2 = 0.0
            for i in range(dim):
                up = s1[i] * psi[i + 1] if i < dim - 1 else 0j
                dn = s1[i - 1] * psi[i - 1] if i > 0 else 0j
                base = psi[i]
                ht = -1j * (hdiag[i] * base + cf * up + f * dn) * dt
                gt = (-0.5 * ((c1 + c2) * abs2 + c1 * nvec[i] + c2 * n1vec[i]) * base
                      + c1 * cea * up + c2 * ea * dn) * dt
                wt = sq1 * (up - ea * base) * dxi1 + sq2 * (dn - cea * base) * dxi2
                h2 += ht.real * ht.real + ht.imag * ht.imag
                g2 += gt.real * gt.real + gt.imag * gt.imag
                w2 += wt.real * wt.real + wt.imag * wt.imag
            return 1, k, np.sqrt(h2), np.sqrt(g2), np.sqrt(w2)
        inv = 1.0 / np.sqrt(nn)
        for i in range(dim):
            w = scratch[i] * inv
            re = w.real
            im = w.imag
            if -_FLUSH < re < _FLUSH:
                re = 0.0
            if -_FLUSH < im < _FLUSH:
                im = 0.0
            psi[i] = complex(re, im)
    return 0, -1, 0.0, 0.0, 0.0


def _raise_kernel_failure(status, step, t0, dt, h_n, g_n, w_n):
    t_fail = t0 + step * dt
    if status == 2:
        raise NumericError(f"non-finite amplitude at t = {t_fail:.6g}")
    norms = {"hamiltonian": h_n, "damping": g_n, "noise": w_n}
    dominant = max(norms, key=norms.get)
    raise StepTooLargeError(
        f"|d psi| >= {STEP_NORM_LIMIT} at t = {t_fail:.6g}; dominant term: {dominant}",
        dominant_term=dominant,
        time=t_fail,
    )


def _trajectory_core(p: SystemParams, cfg: TrajectoryConfig, initial: FockVector):
    """Shared fast path: returns per-record arrays and raw snapshots."""
    if initial.dim != cfg.dim:
        raise InvalidParameterError(
            f"initial state dim {initial.dim} != config dim {cfg.dim}"
        )
    if abs(initial.norm() - 1.0) > 1e-9:
        raise InvalidParameterError("initial state must be normalized")

    dim = cfg.dim
    n = np.arange(dim, dtype=np.float64)
    hdiag = p.detuning * n + p.chi * n * n
    s1 = np.sqrt(n + 1.0)
    n1 = n + 1.0
    c1 = p.n_bath + 1.0
    c2 = p.n_bath

    rec_steps = cfg._record_steps
    snap_steps = cfg._snapshot_steps
    events = np.unique(np.concatenate([rec_steps, snap_steps]))
    rec_set = set(rec_steps.tolist())
    snap_set = set(snap_steps.tolist())

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    psi = np.array(initial.amps, dtype=np.complex128)
    scratch = np.empty(dim, dtype=np.complex128)

    n_out = np.empty(len(rec_steps))
    n2_out = np.empty(len(rec_steps))
    tail_out = np.empty(len(rec_steps))
    snaps = np.empty((len(snap_steps), dim), dtype=np.complex128)

    window = min(5, dim)
    cursor = 0
    i_rec = 0
    i_snap = 0
    for target in events:
        nsteps = int(target - cursor)
        if nsteps > 0:
            normals = rng.standard_normal((nsteps, 4))
            status, kf, hn, gn, wn = _advance(
                psi, scratch, hdiag, s1, n, n1, nsteps, cfg.dt, cursor * cfg.dt,
                p.omega1, p.omega2, p.delta_mod, c1, c2, normals,
            )
            if status != 0:
                _raise_kernel_failure(status, cursor + kf, 0.0, cfg.dt, hn, gn, wn)
            cursor = int(target)
        prob = psi.real**2 + psi.imag**2
        t_now = cursor * cfg.dt
        if target in rec_set:
            tail = float(prob[dim - window:].sum())
            if tail >= cfg.tail_threshold:
                raise TruncationOverflowError(
                    f"tail population {tail:.3e} >= {cfg.tail_threshold:.1e} "
                    f"at t = {t_now:.6g} (dim {dim})",
                    time=t_now,
                )
            n_out[i_rec] = float(prob @ n)
            n2_out[i_rec] = float(prob @ (n * n))
            tail_out[i_rec] = tail
            i_rec += 1
        if target in snap_set:
            snaps[i_snap] = psi
            i_snap += 1
    return n_out, n2_out, tail_out, snaps


def run_trajectory(
    p: SystemParams, cfg: TrajectoryConfig, initial: FockVector
) -> list[TrajectoryRecord]:
    """Integrate one trajectory, emitting a record per record time.

    Identical seed means bit-identical records.  Raises
    TruncationOverflowError (with the offending time) if the audited
    tail ever reaches the configured threshold.
    """
    n_out, n2_out, tail_out, snaps = _trajectory_core(p, cfg, initial)
    snap_steps = cfg._snapshot_steps
    snap_by_step = {int(s): snaps[j] for j, s in enumerate(snap_steps)}
    records = []
    for j, t in enumerate(cfg.record_times):
        step = int(cfg._record_steps[j])
        amps = snap_by_step.get(step)
        records.append(
            TrajectoryRecord(
                time=float(t),
                n_mean=float(n_out[j]),
                n2_mean=float(n2_out[j]),
                tail_pop=float(tail_out[j]),
                amps_snapshot=FockVector(cfg.dim, amps) if amps is not None else None,
            )
        )
    return records

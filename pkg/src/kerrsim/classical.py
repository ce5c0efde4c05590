"""Classical counterpart of the quantum model.

Covers the rotating-wave mean-field equation for the complex amplitude
alpha(t) = <a(t)>, the underlying two-tone Duffing oscillator it is the
envelope of, stroboscopic Poincare sections, and the largest Lyapunov
exponent.  Time is in units of 1/gamma (gamma = 1) except in the
Duffing equation, which is integrated in absolute units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DivergenceError, InvalidParameterError, UndefinedSectionError
from .model import SystemParams


@dataclass(frozen=True)
class ClassicalState:
    """Mean-field amplitude; X = Re alpha, Y = Im alpha."""

    alpha: complex

    @property
    def x(self) -> float:
        return self.alpha.real

    @property
    def y(self) -> float:
        return self.alpha.imag


@dataclass(frozen=True)
class DuffingParams:
    """Two-tone driven Duffing oscillator in absolute units.

    The rotating-wave reduction is meaningful only for omega0 much
    larger than gamma_abs.
    """

    omega0: float
    omega1: float
    omega2: float
    gamma_abs: float
    chi_abs: float
    drive1: float
    drive2: float

    def __post_init__(self):
        if self.omega0 <= 0:
            raise InvalidParameterError(f"omega0 must be > 0, got {self.omega0}")


@dataclass(frozen=True)
class ClassicalTrajectory:
    times: np.ndarray
    alphas: np.ndarray

    def states(self):
        return [ClassicalState(complex(a)) for a in self.alphas]


@dataclass(frozen=True)
class PoincareSet:
    """Stroboscopic samples of alpha, one per modulation period."""

    points: np.ndarray  # (n, 2) columns X, Y
    phase: float
    skipped_transient: int


def rwa_rhs(state: ClassicalState, p: SystemParams, t: float) -> complex:
    """d(alpha)/dt of the mean-field equation at time t."""
    a = state.alpha
    drive = p.omega1 + p.omega2 * np.exp(-1j * p.delta_mod * t)
    return (
        -0.5 * a
        - 1j * (p.detuning + p.chi * (1.0 + 2.0 * abs(a) ** 2)) * a
        - 1j * drive
    )


@njit(cache=True, nogil=True)
def _rwa_step(a, t, dt, chi, det, om1, om2, dmod):
    def rhs(a, t):
        drive = om1 + om2 * np.exp(-1j * dmod * t)
        aa = a.real * a.real + a.imag * a.imag
        return -0.5 * a - 1j * ((det + chi * (1.0 + 2.0 * aa)) * a + drive)

    k1 = rhs(a, t)
    k2 = rhs(a + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(a + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(a + dt * k3, t + dt)
    return a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True, nogil=True)
def _rwa_run(a0, t0, dt, nsteps, chi, det, om1, om2, dmod, out):
    a = a0
    out[0] = a
    for k in range(nsteps):
        a = _rwa_step(a, t0 + k * dt, dt, chi, det, om1, om2, dmod)
        out[k + 1] = a
        if not (np.isfinite(a.real) and np.isfinite(a.imag)):
            return k + 1
    return -1


@njit(cache=True, nogil=True)
def _rwa_advance(a0, t0, dt, nsteps, chi, det, om1, om2, dmod):
    a = a0
    for k in range(nsteps):
        a = _rwa_step(a, t0 + k * dt, dt, chi, det, om1, om2, dmod)
        if not (np.isfinite(a.real) and np.isfinite(a.imag)):
            return a, k + 1
    return a, -1


def default_rwa_dt(p: SystemParams, alpha_max: float) -> float:
    """Step bound keeping the fastest phase rotation under 0.05 rad."""
    rate = abs(p.detuning) + abs(p.chi) * (1.0 + 2.0 * alpha_max**2) + 1.0
    return 0.05 / rate


def integrate_rwa(
    p: SystemParams, alpha0: complex, t_end: float, dt: float
) -> ClassicalTrajectory:
    """Fixed-step 4th-order integration of the mean-field equation."""
    if dt <= 0 or t_end <= 0:
        raise InvalidParameterError("t_end and dt must be positive")
    nsteps = int(round(t_end / dt))
    out = np.empty(nsteps + 1, dtype=np.complex128)
    bad = _rwa_run(
        complex(alpha0), 0.0, dt, nsteps,
        p.chi, p.detuning, p.omega1, p.omega2, p.delta_mod, out,
    )
    if bad >= 0:
        raise DivergenceError(
            f"classical amplitude diverged at t = {bad * dt:.6g}", time=bad * dt
        )
    times = np.arange(nsteps + 1) * dt
    return ClassicalTrajectory(times, out)


def estimate_peak_excitation(p: SystemParams, t_end: float = 12.0) -> float:
    """Cheap classical estimate of max |alpha|^2 from the vacuum start.

    Used to size the Fock truncation; iterates the step bound until the
    observed peak is consistent with the one assumed for the step.
    """
    guess = max(1.0, abs(p.omega1) + abs(p.omega2))
    for _ in range(5):
        dt = default_rwa_dt(p, guess)
        try:
            traj = integrate_rwa(p, 0.0, t_end, dt)
        except DivergenceError:
            guess *= 2.0
            continue
        peak = float(np.max(np.abs(traj.alphas)))
        if peak <= guess * 1.05:
            return peak**2
        guess = peak
    return guess**2


def poincare(
    p: SystemParams,
    alpha0: complex,
    t0_phase: float,
    n_points: int,
    n_skip: int,
) -> PoincareSet:
    """Sample alpha once per modulation period at constant drive phase.

    Records at t = t0_phase + k * period for k = n_skip ..
    n_skip + n_points - 1, after integrating through the skipped
    transient periods.
    """
    if p.delta_mod == 0:
        raise UndefinedSectionError("Poincare section undefined for delta_mod = 0")
    if n_points < 1 or n_skip < 0:
        raise InvalidParameterError("need n_points >= 1 and n_skip >= 0")
    period = p.period
    amax2 = estimate_peak_excitation(p)
    dt_target = default_rwa_dt(p, np.sqrt(amax2) * 1.5)
    spp = max(1, int(np.ceil(period / dt_target)))
    dt = period / spp

    a = complex(alpha0)
    t = 0.0
    if t0_phase > 0:
        lead = max(1, int(np.ceil(t0_phase / dt)))
        a, bad = _rwa_advance(
            a, 0.0, t0_phase / lead, lead,
            p.chi, p.detuning, p.omega1, p.omega2, p.delta_mod,
        )
        if bad >= 0:
            raise DivergenceError("diverged before first section", time=bad * t0_phase / lead)
        t = t0_phase

    pts = np.empty((n_points, 2))
    for k in range(n_skip + n_points):
        if k >= n_skip:
            pts[k - n_skip, 0] = a.real
            pts[k - n_skip, 1] = a.imag
        a, bad = _rwa_advance(
            a, t, dt, spp, p.chi, p.detuning, p.omega1, p.omega2, p.delta_mod
        )
        if bad >= 0:
            raise DivergenceError(
                f"diverged in section period {k}", time=t + bad * dt
            )
        t += period
    return PoincareSet(pts, float(t0_phase), int(n_skip))


@njit(cache=True, nogil=True)
def _tangent_run(a0, b0, t0, dt, nsteps, chi, det, om1, om2, dmod):
    def rhs_pair(a, b, t):
        drive = om1 + om2 * np.exp(-1j * dmod * t)
        aa = a.real * a.real + a.imag * a.imag
        fa = -0.5 * a - 1j * ((det + chi * (1.0 + 2.0 * aa)) * a + drive)
        dfda = -0.5 - 1j * (det + chi * (1.0 + 4.0 * aa))
        dfdac = -2j * chi * a * a
        fb = dfda * b + dfdac * np.conj(b)
        return fa, fb

    a, b = a0, b0
    for k in range(nsteps):
        t = t0 + k * dt
        k1a, k1b = rhs_pair(a, b, t)
        k2a, k2b = rhs_pair(a + 0.5 * dt * k1a, b + 0.5 * dt * k1b, t + 0.5 * dt)
        k3a, k3b = rhs_pair(a + 0.5 * dt * k2a, b + 0.5 * dt * k2b, t + 0.5 * dt)
        k4a, k4b = rhs_pair(a + dt * k3a, b + dt * k3b, t + dt)
        a = a + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + (dt / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        if not (np.isfinite(a.real) and np.isfinite(a.imag)):
            return a, b, k + 1
    return a, b, -1


@dataclass(frozen=True)
class LyapunovResult:
    exponent: float
    trace: np.ndarray  # running estimate after each renormalization


def lyapunov_largest(
    p: SystemParams,
    alpha0: complex,
    t_total: float,
    renorm_interval: float | None = None,
) -> LyapunovResult:
    """Largest Lyapunov exponent by tangent-vector renormalization.

    The tangent dynamics linearizes the mean-field flow around the
    fiducial trajectory (the |alpha|^2 term makes it non-holomorphic,
    hence the conjugate coupling).  Exponent in units of gamma; for the
    linear chi = 0 flow it equals -1/2 exactly.
    """
    if renorm_interval is None:
        renorm_interval = p.period if p.delta_mod != 0 else 1.0
    if t_total <= 0 or renorm_interval <= 0:
        raise InvalidParameterError("t_total and renorm_interval must be positive")
    amax2 = estimate_peak_excitation(p)
    dt_target = default_rwa_dt(p, np.sqrt(amax2) * 1.5)
    spi = max(1, int(np.ceil(renorm_interval / dt_target)))
    dt = renorm_interval / spi
    n_intervals = max(1, int(round(t_total / renorm_interval)))

    a = complex(alpha0)
    b = 1.0 + 0.0j
    log_sum = 0.0
    trace = np.empty(n_intervals)
    t = 0.0
    for k in range(n_intervals):
        a, b, bad = _tangent_run(
            a, b, t, dt, spi, p.chi, p.detuning, p.omega1, p.omega2, p.delta_mod
        )
        if bad >= 0:
            raise DivergenceError(f"diverged in interval {k}", time=t + bad * dt)
        nb = abs(b)
        if nb == 0.0:
            raise DivergenceError("tangent vector collapsed to zero", time=t)
        log_sum += np.log(nb)
        b = b / nb
        t += renorm_interval
        trace[k] = log_sum / t
    return LyapunovResult(float(trace[-1]), trace)


@njit(cache=True, nogil=True)
def _duffing_run(e0, v0, dt, nsteps, om0, om1, om2, gam, chi, d1, d2, out_e, out_v):
    def acc(e, v, t):
        stiff = om0 * om0 * (1.0 + (2.0 * chi / om0) * (1.0 + 0.5 * e * e))
        force = 4.0 * om0 * (d1 * np.cos(om1 * t) + d2 * np.cos(om2 * t))
        return force - gam * v - stiff * e

    e, v = e0, v0
    out_e[0] = e
    out_v[0] = v
    for k in range(nsteps):
        t = k * dt
        k1e = v
        k1v = acc(e, v, t)
        k2e = v + 0.5 * dt * k1v
        k2v = acc(e + 0.5 * dt * k1e, k2e, t + 0.5 * dt)
        k3e = v + 0.5 * dt * k2v
        k3v = acc(e + 0.5 * dt * k2e, k3e, t + 0.5 * dt)
        k4e = v + dt * k3v
        k4v = acc(e + dt * k3e, k4e, t + dt)
        e = e + (dt / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        out_e[k + 1] = e
        out_v[k + 1] = v
        if not (np.isfinite(e) and np.isfinite(v)):
            return k + 1
    return -1


def integrate_duffing(
    dp: DuffingParams, e0: float, edot0: float, t_end: float, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the second-order oscillator as a first-order pair.

    Requires dt <= (2*pi/omega0)/50 so the carrier is resolved.
    Returns (times, E, Edot).
    """
    max_dt = (2.0 * np.pi / dp.omega0) / 50.0
    if dt > max_dt:
        raise InvalidParameterError(
            f"dt = {dt:.3e} too coarse for carrier period; need <= {max_dt:.3e}"
        )
    nsteps = int(round(t_end / dt))
    out_e = np.empty(nsteps + 1)
    out_v = np.empty(nsteps + 1)
    bad = _duffing_run(
        float(e0), float(edot0), dt, nsteps,
        dp.omega0, dp.omega1, dp.omega2, dp.gamma_abs, dp.chi_abs,
        dp.drive1, dp.drive2, out_e, out_v,
    )
    if bad >= 0:
        raise DivergenceError(f"Duffing amplitude diverged at t = {bad * dt:.6g}", time=bad * dt)
    return np.arange(nsteps + 1) * dt, out_e, out_v


def demodulate_envelope(
    times: np.ndarray, e: np.ndarray, edot: np.ndarray, omega1: float
) -> np.ndarray:
    """Slowly varying amplitude around the first drive frequency.

    Inverts E = alpha*exp(-i*omega1*t) + c.c. using the quadrature
    Edot/omega1, exact when the envelope varies slowly on the carrier.
    """
    return 0.5 * (e + 1j * edot / omega1) * np.exp(1j * omega1 * times)


def analytic_linear_response(p: SystemParams, t: float | np.ndarray) -> complex | np.ndarray:
    """Exact alpha(t) for chi = 0 from the vacuum initial condition."""
    if p.chi != 0:
        raise InvalidParameterError("analytic response only valid for chi = 0")
    pole1 = 0.5 + 1j * p.detuning
    pole2 = 0.5 + 1j * (p.detuning - p.delta_mod)
    part = lambda tt: (-1j * p.omega1 / pole1) - 1j * p.omega2 * np.exp(-1j * p.delta_mod * tt) / pole2
    return part(t) - part(0.0) * np.exp(-pole1 * t)

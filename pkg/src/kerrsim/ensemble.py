"""Trajectory ensembles and the statistics built from them.

Trajectories are embarrassingly parallel: each owns an RNG stream
derived from (base_seed, index) by a fixed mixing function, results
land in index-ordered arrays, and every reduction runs centrally with
numpy's pairwise summation.  Output is therefore bit-identical for any
worker count.

Two variance conventions are kept side by side: `var_rho` is the
variance of the ensemble-averaged state (the density-operator number
variance), `var_traj` averages the per-trajectory variances.  They
differ by the ensemble variance of the per-trajectory mean, which is
non-negative, so var_rho >= var_traj always.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError, InsufficientCoverageError, SimulationError
from .fock import DensityMatrix, FockVector, make_vacuum
from .model import SystemParams
from .qsd import TrajectoryConfig, _trajectory_core

WORKERS_ENV = "KERRSIM_WORKERS"

_MASK64 = (1 << 64) - 1


def mix_seed(base_seed: int, index: int) -> int:
    """Per-trajectory seed: splitmix64 of base_seed + golden-gamma*(index+1).

    Fixed for reproducibility; trajectory i depends only on
    (base_seed, i), never on worker layout.
    """
    z = (base_seed + 0x9E3779B97F4A7C15 * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def resolve_workers(hint: int | None) -> int:
    if hint is not None and hint >= 1:
        return int(hint)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            val = int(env)
            if val >= 1:
                return val
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class EnsembleConfig:
    """Trajectory count, base seed and optional snapshot request."""

    m: int
    base_seed: int
    workers: int | None = None
    accumulate_rho_at: tuple = ()

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameterError(f"need at least one trajectory, got m = {self.m}")
        object.__setattr__(
            self, "accumulate_rho_at", tuple(sorted(float(t) for t in self.accumulate_rho_at))
        )


@dataclass(frozen=True)
class OutputFieldParams:
    """Cavity-output conversion constants.

    detector_eff is the dimensionless quantum output of the detector;
    count_window is the photon counting time, which should stay well
    inside one modulation period.
    """

    gamma_abs: float
    detector_eff: float = 1.0
    count_window: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.detector_eff <= 1.0):
            raise InvalidParameterError(
                f"detector_eff must be in (0, 1], got {self.detector_eff}"
            )
        if self.gamma_abs <= 0:
            raise InvalidParameterError(f"gamma_abs must be > 0, got {self.gamma_abs}")


@dataclass(frozen=True)
class EnsembleStats:
    """Time-gridded ensemble estimators.

    q_rho is the Mandel parameter of the averaged state, q_traj the one
    built from the per-trajectory variance average.  Standard errors for
    the Q series are delete-one jackknife estimates over trajectories.
    """

    times: np.ndarray
    n_mean: np.ndarray
    var_rho: np.ndarray
    var_traj: np.ndarray
    q_rho: np.ndarray
    q_traj: np.ndarray
    stderr_n: np.ndarray
    stderr_q_rho: np.ndarray
    stderr_q_traj: np.ndarray
    m: int
    rho_snapshots: dict


def mandel_q(n_mean: float, variance: float) -> float:
    """(variance - n_mean) / n_mean; NaN when the mean is numerically zero.

    Never below -1 for valid (non-negative) inputs.
    """
    if n_mean < 0 or variance < 0:
        raise InvalidParameterError(
            f"moments must be non-negative, got n_mean={n_mean}, variance={variance}"
        )
    if n_mean < 1e-12:
        return float("nan")
    return (variance - n_mean) / n_mean


def _q_series(n_mean: np.ndarray, variance: np.ndarray) -> np.ndarray:
    out = np.full_like(n_mean, np.nan)
    ok = n_mean >= 1e-12
    out[ok] = (variance[ok] - n_mean[ok]) / n_mean[ok]
    return out


def accumulate_rho(snapshots) -> DensityMatrix:
    """Average outer product of pure-state snapshots.

    Exactly Hermitian by construction; the trace equals the mean squared
    norm of the inputs (1 for normalized snapshots).
    """
    if isinstance(snapshots, np.ndarray) and snapshots.ndim == 2:
        stack = np.ascontiguousarray(snapshots, dtype=np.complex128)
    else:
        snapshots = list(snapshots)
        if not snapshots:
            raise InvalidParameterError("cannot accumulate an empty snapshot set")
        dims = {s.dim for s in snapshots}
        if len(dims) != 1:
            raise InvalidParameterError(f"snapshot dimensions differ: {sorted(dims)}")
        stack = np.array([s.amps for s in snapshots])
    if stack.shape[0] == 0:
        raise InvalidParameterError("cannot accumulate an empty snapshot set")
    rho = (stack.T @ stack.conj()) / stack.shape[0]
    return DensityMatrix(stack.shape[1], rho)


def _jackknife_q(sum_a: np.ndarray, sum_b: np.ndarray,
                 a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Delete-one jackknife stderr of Q built from two trajectory sums.

    Q is (B/A - 1) evaluated per leave-one-out sample, where A is the
    mean of rows `a` (occupation) and B the mean of rows `b` (variance
    numerator definition differs per convention).
    """
    m = a.shape[0]
    if m < 2:
        return np.full(a.shape[1], np.nan)
    mu_a = (sum_a[None, :] - a) / (m - 1)
    mu_b = (sum_b[None, :] - b) / (m - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(mu_a >= 1e-12, (mu_b - mu_a * mu_a - mu_a) / mu_a, np.nan)
    q_bar = np.mean(q, axis=0)
    var = (m - 1) / m * np.sum((q - q_bar[None, :]) ** 2, axis=0)
    return np.sqrt(var)


def _jackknife_q_traj(sum_a: np.ndarray, sum_v: np.ndarray,
                      a: np.ndarray, v: np.ndarray) -> np.ndarray:
    m = a.shape[0]
    if m < 2:
        return np.full(a.shape[1], np.nan)
    mu_a = (sum_a[None, :] - a) / (m - 1)
    mu_v = (sum_v[None, :] - v) / (m - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(mu_a >= 1e-12, (mu_v - mu_a) / mu_a, np.nan)
    q_bar = np.mean(q, axis=0)
    var = (m - 1) / m * np.sum((q - q_bar[None, :]) ** 2, axis=0)
    return np.sqrt(var)


def run_ensemble(
    p: SystemParams, tcfg: TrajectoryConfig, ecfg: EnsembleConfig
) -> EnsembleStats:
    """Run m vacuum-start trajectories and reduce their statistics.

    Deterministic for fixed (base_seed, m, params, tcfg) regardless of
    the worker count; an overflowing trajectory aborts the whole
    ensemble naming the failing index.
    """
    m = ecfg.m
    n_rec = len(tcfg.record_times)
    snap_times = ecfg.accumulate_rho_at
    n_arr = np.empty((m, n_rec))
    n2_arr = np.empty((m, n_rec))
    snaps = np.empty((m, len(snap_times), tcfg.dim), dtype=np.complex128)
    initial = make_vacuum(tcfg.dim)

    def one(i: int):
        cfg_i = replace(
            tcfg, seed=mix_seed(ecfg.base_seed, i), snapshot_times=snap_times
        )
        try:
            n_i, n2_i, _tails, snaps_i = _trajectory_core(p, cfg_i, initial)
        except SimulationError as exc:
            raise type(exc)(
                f"trajectory {i} (seed {cfg_i.seed}): {exc}"
            ) from exc
        n_arr[i] = n_i
        n2_arr[i] = n2_i
        if len(snap_times):
            snaps[i] = snaps_i

    workers = resolve_workers(ecfg.workers)
    if workers == 1 or m == 1:
        for i in range(m):
            one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(m)))

    sum_n = np.sum(n_arr, axis=0)
    sum_n2 = np.sum(n2_arr, axis=0)
    v_arr = n2_arr - n_arr**2
    sum_v = np.sum(v_arr, axis=0)

    n_mean = sum_n / m
    var_rho = sum_n2 / m - n_mean**2
    var_traj = sum_v / m
    q_rho = _q_series(n_mean, var_rho)
    q_traj = _q_series(n_mean, var_traj)
    if m >= 2:
        stderr_n = np.std(n_arr, axis=0, ddof=1) / np.sqrt(m)
    else:
        stderr_n = np.full(n_rec, np.nan)

    rho_snapshots = {}
    for j, t_snap in enumerate(snap_times):
        rho_snapshots[t_snap] = accumulate_rho(snaps[:, j, :])

    return EnsembleStats(
        times=np.array(tcfg.record_times),
        n_mean=n_mean,
        var_rho=var_rho,
        var_traj=var_traj,
        q_rho=q_rho,
        q_traj=q_traj,
        stderr_n=stderr_n,
        stderr_q_rho=_jackknife_q(sum_n, sum_n2, n_arr, n2_arr),
        stderr_q_traj=_jackknife_q_traj(sum_n, sum_v, n_arr, v_arr),
        m=m,
        rho_snapshots=rho_snapshots,
    )


def output_field_stats(
    stats: EnsembleStats, ofp: OutputFieldParams, p: SystemParams | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Cavity-output intensity and photocount Mandel series.

    n_out = 2*gamma*<n> (photons per unit time through the output
    mirror); q_i = 2*gamma*eff*T*Q rescales the intracavity Mandel
    parameter to the photocount variance deviation.
    """
    if p is not None and p.delta_mod != 0:
        period_abs = (2.0 * np.pi / abs(p.delta_mod)) / ofp.gamma_abs
        if ofp.count_window >= 0.1 * period_abs:
            warnings.warn(
                f"count_window {ofp.count_window:.3g} is not small against the "
                f"modulation period {period_abs:.3g}; photocount formula assumes "
                f"T << period",
                stacklevel=2,
            )
    n_out = 2.0 * ofp.gamma_abs * stats.n_mean
    q_i = 2.0 * ofp.gamma_abs * ofp.detector_eff * ofp.count_window * stats.q_rho
    return n_out, q_i


@dataclass(frozen=True)
class Extrema:
    q_min: float
    t_min: float
    q_max: float
    t_max: float


def find_extrema(
    stats: EnsembleStats,
    p: SystemParams,
    transient: float = 5.0,
    convention: str = "rho",
) -> Extrema:
    """Extrema of Q over the last complete modulation period.

    The series must reach past the transient by at least one full
    period; ties resolve to the earlier time.
    """
    period = p.period
    times = stats.times
    t_hi = times[-1]
    t_lo = t_hi - period
    if t_lo < transient - 1e-9 or times[0] > t_lo + 1e-9:
        raise InsufficientCoverageError(
            f"need one full period (={period:.4g}) after the transient "
            f"(t = {transient:.4g}); series covers [{times[0]:.4g}, {t_hi:.4g}]"
        )
    q = stats.q_rho if convention == "rho" else stats.q_traj
    mask = times >= t_lo - 1e-9
    window_t = times[mask]
    window_q = q[mask]
    good = ~np.isnan(window_q)
    if not np.any(good):
        raise InsufficientCoverageError("Q undefined over the whole final period")
    window_t = window_t[good]
    window_q = window_q[good]
    i_min = int(np.argmin(window_q))
    i_max = int(np.argmax(window_q))
    return Extrema(
        q_min=float(window_q[i_min]),
        t_min=float(window_t[i_min]),
        q_max=float(window_q[i_max]),
        t_max=float(window_t[i_max]),
    )

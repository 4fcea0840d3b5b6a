"""Nonlinear solve by repeated linearized windows, plus the vanishing
regularization sweep.

Two nested loops live here. The inner one, ``picard_solve``, freezes the
coefficients of the quasilinear system at the previous iterate, solves the
resulting linear window, and repeats until successive iterates stop moving
in L2. The outer one, ``eta_continuation``, shrinks the elliptic
regularization toward zero and watches consecutive solutions settle into a
Cauchy sequence.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from .fields import quadrature_l2
from .linearized import (
    CLIP_TOLERANCE,
    DEFAULT_CFL_SAFETY,
    DEFAULT_SAMPLES_PER_WINDOW,
    ConstantCoefficients,
    FrozenCoefficients,
    SolverAbort,
    Trajectory,
    _sample_times,
    adaptive_dt,
    solve_linearized,
    transport_step,
)
from .operators import ReformState, exponent_identity_residual
from .params import FluidParams, ParameterError

DEFAULT_PICARD_TOL = 1e-10
DEFAULT_MAX_ITER = 50
IDENTITY_GUARD = 1e-10


class ContinuationError(RuntimeError):
    """A regularization level failed to converge; carries the level index."""

    def __init__(self, level: int, message: str):
        super().__init__(f"continuation level {level}: {message}")
        self.level = level


@dataclass(frozen=True)
class PicardIteration:
    """One row of the iteration history."""

    k: int
    S_k: float
    linf_delta: float
    wall_time: float


@dataclass(frozen=True)
class PicardTrace:
    iterations: tuple
    converged: bool
    final_k: int

    def __post_init__(self):
        for it in self.iterations:
            if not it.S_k >= 0.0:
                raise ValueError(f"contraction metric negative at k={it.k}")

    @property
    def final_S(self) -> float:
        return self.iterations[-1].S_k if self.iterations else math.inf

    def geometric_ratio(self) -> float:
        """Fitted per-iteration ratio of S_k from a log-linear least-squares
        fit over the strictly positive entries. Returns nan when fewer than
        two entries are positive (nothing to fit)."""
        ks = [it.k for it in self.iterations if it.S_k > 0.0]
        vals = [math.log(it.S_k) for it in self.iterations if it.S_k > 0.0]
        if len(ks) < 2:
            return math.nan
        slope = np.polyfit(ks, vals, 1)[0]
        return float(math.exp(slope))


def write_trace_csv(trace: PicardTrace, path, include_timing: bool = False) -> None:
    """Dump the iteration history. Timing is off by default so reruns of the
    same configuration produce byte-identical files."""
    fields = ["k", "S_k", "linf_delta"]
    if include_timing:
        fields.append("wall_time")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for it in trace.iterations:
            row = [it.k, f"{it.S_k:.17e}", f"{it.linf_delta:.17e}"]
            if include_timing:
                row.append(f"{it.wall_time:.6f}")
            writer.writerow(row)


def trace_summary(trace: PicardTrace) -> dict:
    return {
        "converged": trace.converged,
        "final_k": trace.final_k,
        "final_S": trace.final_S,
        "fitted_ratio": trace.geometric_ratio(),
        "iterations": len(trace.iterations),
    }


def _common_indices(a: Trajectory, b: Trajectory) -> range:
    ta = np.asarray(a.times, dtype=float)
    tb = np.asarray(b.times, dtype=float)
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0.0,
                                               atol=1e-10 * max(1.0, float(ta[-1]))):
        raise ValueError("trajectories are sampled on different time grids")
    return range(len(a.times))


def trajectory_gap(a: Trajectory, b: Trajectory) -> tuple[float, float, float]:
    """Sup-in-time squared L2 gaps between two trajectories, measured
    separately for the (phi, u) block and for the viscosity proxy, plus the
    sup-in-time pointwise gap. The two blocks are kept apart because the
    contraction metric adds their separate suprema."""
    grid = a.states[0].grid
    w_sq = 0.0
    v_sq = 0.0
    linf = 0.0
    for i in _common_indices(a, b):
        sa, sb = a.states[i], b.states[i]
        dphi = sa.phi.values - sb.phi.values
        du = sa.u.values - sb.u.values
        dvphi = sa.vphi.values - sb.vphi.values
        w_sq = max(w_sq, quadrature_l2(grid, dphi) ** 2 + quadrature_l2(grid, du) ** 2)
        v_sq = max(v_sq, quadrature_l2(grid, dvphi) ** 2)
        linf = max(linf, float(np.abs(dphi).max()),
                   float(np.abs(du).max()), float(np.abs(dvphi).max()))
    return w_sq, v_sq, linf


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """Sup over shared sample times of the combined L2 distance between
    states (all three fields in one norm)."""
    grid = a.states[0].grid
    best = 0.0
    for i in _common_indices(a, b):
        sa, sb = a.states[i], b.states[i]
        d = math.sqrt(
            quadrature_l2(grid, sa.phi.values - sb.phi.values) ** 2
            + quadrature_l2(grid, sa.u.values - sb.u.values) ** 2
            + quadrature_l2(grid, sa.vphi.values - sb.vphi.values) ** 2
        )
        best = max(best, d)
    return best


def _start_guess(init: ReformState, params: FluidParams, eta: float,
                 t_window: float, dt: float | None, cfl_safety: float,
                 sample_dt: float | None, clip: bool) -> Trajectory:
    """Iterate zero: both proxies advected by the initial velocity (stretch
    terms dropped), the velocity itself held constant. Any guess inside the
    contraction ball works; this one needs no extra solver machinery."""
    grid = init.grid
    zeros = np.zeros(grid.shape)
    provider = ConstantCoefficients(init.u.values, zeros, zeros)
    coeffs = FrozenCoefficients(provider=provider, eta=eta, t_window=t_window,
                                clip=clip)
    samples = _sample_times(t_window, sample_dt)
    floor = CLIP_TOLERANCE if clip else None

    vphi = init.vphi
    phi = init.phi
    u = init.u
    traj = Trajectory(states=[ReformState(vphi, phi, u, time=0.0, floor=floor)],
                      times=[0.0], eta=eta)
    speed = float(np.sqrt(np.sum(init.u.values ** 2, axis=0)).max())

    t = 0.0
    sample_idx = 0
    dt_floor = 1e-13 * max(t_window, 1.0)
    while t < t_window - 1e-12 * max(1.0, t_window):
        step = dt if dt is not None else adaptive_dt(params, grid, init.u.values,
                                                     zeros, cfl_safety)
        t_target = samples[sample_idx] if samples is not None and sample_idx < len(samples) else t_window
        if t + step >= t_target - 1e-12 * max(1.0, t_target):
            step = t_target - t
        if step <= dt_floor:
            raise SolverAbort("step size underflow", t, f"dt = {step:.3e}")
        vphi, _ = transport_step(params, vphi, coeffs, step, t)
        phi, _ = transport_step(params, phi, coeffs, step, t)
        t = t_target if abs(t + step - t_target) <= 1e-12 * max(1.0, t_target) else t + step
        traj.dt_history.append(step)
        traj.max_speed_history.append(speed)
        traj.clip_counts.append(0)
        traj.clipped_mass.append(0.0)
        at_sample = samples is None or (
            sample_idx < len(samples)
            and abs(t - samples[sample_idx]) <= 1e-12 * max(1.0, samples[sample_idx])
        )
        if at_sample:
            traj.states.append(ReformState(vphi, phi, u, time=t, floor=floor))
            traj.times.append(t)
            if samples is not None:
                sample_idx += 1
    return traj


def picard_solve(init: ReformState, params: FluidParams, eta: float,
                 t_window: float, picard_tol: float = DEFAULT_PICARD_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, *, dt: float | None = None,
                 cfl_safety: float = DEFAULT_CFL_SAFETY,
                 sample_dt: float | None = None, clip: bool = True,
                 forcing=None) -> tuple[Trajectory, PicardTrace]:
    """Iterate linearized window solves until the sup-in-time squared L2
    change between consecutive iterates drops to picard_tol.

    Each pass freezes the advecting velocity and both stretch coefficients
    at the previous iterate, transports the viscosity proxy first, and then
    solves the (phi, u) block with the fresh proxy in the viscous and source
    coefficients. Returns the last trajectory with the iteration history;
    a history that runs out of iterations comes back with converged=False
    rather than raising.
    """
    if not t_window > 0.0:
        raise ValueError(f"t_window must be positive, got {t_window}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    ident = exponent_identity_residual(params)
    if ident > IDENTITY_GUARD:
        raise ParameterError("exponent identities",
                             f"derived-constant residual {ident:.3e}")
    if sample_dt is None:
        sample_dt = t_window / DEFAULT_SAMPLES_PER_WINDOW

    prev = _start_guess(init, params, eta, t_window, dt, cfl_safety,
                        sample_dt, clip)
    iterations = []
    converged = False
    cur = prev
    k = 0
    for k in range(1, max_iter + 1):
        tic = time.perf_counter()
        coeffs = FrozenCoefficients(provider=prev.as_coefficients(), eta=eta,
                                    t_window=t_window, dt=dt,
                                    cfl_safety=cfl_safety, sample_dt=sample_dt,
                                    clip=clip, forcing=forcing)
        cur = solve_linearized(init, coeffs, params)
        w_sq, v_sq, linf = trajectory_gap(cur, prev)
        S = w_sq + v_sq
        iterations.append(PicardIteration(k=k, S_k=S, linf_delta=linf,
                                          wall_time=time.perf_counter() - tic))
        if S <= picard_tol:
            converged = True
            break
        prev = cur
    trace = PicardTrace(iterations=tuple(iterations), converged=converged,
                        final_k=k)
    return cur, trace


def fixed_point_residual(traj: Trajectory, init: ReformState,
                         params: FluidParams, eta: float, *,
                         dt: float | None = None,
                         cfl_safety: float = DEFAULT_CFL_SAFETY,
                         sample_dt: float | None = None, clip: bool = True,
                         forcing=None) -> float:
    """Run one more linearized solve from a converged trajectory and report
    how far it moves, in the same metric the iteration uses. Should land
    within a small multiple of picard_tol when the input really converged.
    The sample cadence is read off the trajectory unless given."""
    t_window = float(traj.times[-1])
    if sample_dt is None:
        if len(traj.times) < 2:
            raise ValueError("trajectory has no cadence to infer")
        sample_dt = float(traj.times[1] - traj.times[0])
    coeffs = FrozenCoefficients(provider=traj.as_coefficients(), eta=eta,
                                t_window=t_window, dt=dt,
                                cfl_safety=cfl_safety, sample_dt=sample_dt,
                                clip=clip, forcing=forcing)
    nxt = solve_linearized(init, coeffs, params)
    w_sq, v_sq, _ = trajectory_gap(nxt, traj)
    return w_sq + v_sq


@dataclass(frozen=True)
class EtaSchedule:
    """Geometric ladder of regularization strengths."""

    eta0: float
    factor: float
    max_levels: int
    cauchy_tol: float

    def __post_init__(self):
        if not 0.0 < self.eta0 <= 1.0:
            raise ValueError(f"eta0 must lie in (0, 1], got {self.eta0}")
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"factor must lie in (0, 1), got {self.factor}")
        if self.max_levels < 1:
            raise ValueError(f"max_levels must be at least 1, got {self.max_levels}")
        if not self.cauchy_tol > 0.0:
            raise ValueError(f"cauchy_tol must be positive, got {self.cauchy_tol}")

    def levels(self) -> list[float]:
        return [self.eta0 * self.factor**j for j in range(self.max_levels)]


@dataclass(frozen=True)
class ContinuationLevel:
    index: int
    eta: float
    picard_iters: int
    picard_S: float
    distance: float


@dataclass(frozen=True)
class ContinuationReport:
    levels: tuple
    reached_tol: bool
    final_trace: PicardTrace | None = None

    @property
    def distances(self) -> list[float]:
        """The consecutive-level gaps d_j, skipping the first level (which
        has nothing to compare against)."""
        return [lv.distance for lv in self.levels[1:]]


def write_continuation_csv(report: ContinuationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "eta", "picard_iters", "picard_S", "distance"])
        for lv in report.levels:
            writer.writerow([lv.index, f"{lv.eta:.17e}", lv.picard_iters,
                             f"{lv.picard_S:.17e}",
                             "" if math.isnan(lv.distance) else f"{lv.distance:.17e}"])


def eta_continuation(init: ReformState, params: FluidParams,
                     schedule: EtaSchedule, t_window: float,
                     picard_tol: float = DEFAULT_PICARD_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, *,
                     dt: float | None = None,
                     cfl_safety: float = DEFAULT_CFL_SAFETY,
                     sample_dt: float | None = None, clip: bool = True,
                     forcing=None) -> tuple[Trajectory, ContinuationReport]:
    """Solve at each regularization level in turn and measure how far
    consecutive solutions sit from each other. Stops early once the gap
    drops to schedule.cauchy_tol; a level that fails to converge aborts the
    sweep with its index."""
    levels: list[ContinuationLevel] = []
    prev_traj: Trajectory | None = None
    last_trace: PicardTrace | None = None
    reached = False
    for j, eta_j in enumerate(schedule.levels()):
        try:
            traj, trace = picard_solve(init, params, eta_j, t_window,
                                       picard_tol, max_iter, dt=dt,
                                       cfl_safety=cfl_safety,
                                       sample_dt=sample_dt, clip=clip,
                                       forcing=forcing)
        except SolverAbort as exc:
            raise ContinuationError(j, f"solver abort: {exc}") from exc
        if not trace.converged:
            raise ContinuationError(
                j, f"no convergence in {trace.final_k} iterations "
                   f"(S = {trace.final_S:.3e})")
        d = math.nan if prev_traj is None else trajectory_distance(traj, prev_traj)
        levels.append(ContinuationLevel(index=j, eta=eta_j,
                                        picard_iters=trace.final_k,
                                        picard_S=trace.final_S, distance=d))
        prev_traj = traj
        last_trace = trace
        if not math.isnan(d) and d <= schedule.cauchy_tol:
            reached = True
            break
    report = ContinuationReport(levels=tuple(levels), reached_tol=reached,
                                final_trace=last_trace)
    return prev_traj, report


@dataclass(frozen=True)
class WindowScanRow:
    t_window: float
    converged: bool
    final_S: float
    iterations: int


def window_scan(init: ReformState, params: FluidParams, eta: float,
                t_window0: float, doublings: int,
                picard_tol: float = DEFAULT_PICARD_TOL,
                max_iter: int = DEFAULT_MAX_ITER, **numerics) -> list[WindowScanRow]:
    """Double the window until the iteration stops converging. The first
    failing length, when one exists, quantifies the small-time restriction
    empirically; rows after the first failure are not attempted."""
    rows: list[WindowScanRow] = []
    t_win = t_window0
    for _ in range(doublings + 1):
        try:
            _, trace = picard_solve(init, params, eta, t_win, picard_tol,
                                    max_iter, **numerics)
            rows.append(WindowScanRow(t_window=t_win, converged=trace.converged,
                                      final_S=trace.final_S,
                                      iterations=trace.final_k))
            if not trace.converged:
                break
        except SolverAbort:
            rows.append(WindowScanRow(t_window=t_win, converged=False,
                                      final_S=math.inf, iterations=0))
            break
        t_win *= 2.0
    return rows

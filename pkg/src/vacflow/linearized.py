"""Linearized solver: frozen-coefficient transport and momentum stepping.

One outer step of size dt advances the viscosity proxy vphi by two SSP-RK3
transport half steps (pure advection plus the dilation source, coefficients
frozen), then advances (phi, u) with a third-order integrating-factor
Runge-Kutta scheme on Kutta nodes c = (0, 1/2, 1). The stiff
constant-coefficient shift

    M = nubar1 Lap + nubar2 grad div,
    nubar1 = alpha * max(vphi^2 + eta^2),
    nubar2 = max((vphi^2 + eta^2)(alpha + beta vphi^(2m)))_+,

is applied through its exact Fourier exponential (split into directions
parallel and perpendicular to k), and the explicit slope carries the full
right-hand side minus M u. Monotone nodes keep every exponential a decay
multiplier, so the scheme is stable at transport-limited step sizes
regardless of how stiff the shift is. Negative proxy values are clipped to
zero after each step; cells below the tolerance -1e-12 are counted and the
removed mass is tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid, ScalarField, VectorField
from .operators import ReformState, advect, stable_power
from .params import FluidParams

CLIP_TOLERANCE = -1e-12
DEFAULT_CFL_SAFETY = 0.4
DEFAULT_SAMPLES_PER_WINDOW = 32
STABILITY_COURANT = 0.9 * math.sqrt(3.0)


class SolverAbort(RuntimeError):
    """Raised when a run leaves its validity envelope (coefficient regime,
    NaN contamination, or step-size underflow)."""

    def __init__(self, reason: str, time: float, detail: str = ""):
        self.reason = reason
        self.time = time
        message = f"{reason} at t = {time:.6g}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


# -- coefficient providers ---------------------------------------------------


class ConstantCoefficients:
    """Coefficients frozen at a single state: velocity v, pressure-proxy
    phitilde, and viscosity-proxy vphitilde, all time independent."""

    def __init__(self, v: np.ndarray, phitilde: np.ndarray, vphitilde: np.ndarray):
        self.v = np.asarray(v, dtype=float)
        self.phitilde = np.asarray(phitilde, dtype=float)
        self.vphitilde = np.asarray(vphitilde, dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        return self.v

    def phi_coeff(self, t: float) -> np.ndarray:
        return self.phitilde

    def vphi_coeff(self, t: float) -> np.ndarray:
        return self.vphitilde


class AnalyticCoefficients:
    """Coefficients given by closed-form time callables (used by manufactured
    cases, where the coefficient trajectory is known exactly)."""

    def __init__(self, velocity, phi_coeff, vphi_coeff):
        self._velocity = velocity
        self._phi = phi_coeff
        self._vphi = vphi_coeff

    def velocity(self, t: float) -> np.ndarray:
        return self._velocity(t)

    def phi_coeff(self, t: float) -> np.ndarray:
        return self._phi(t)

    def vphi_coeff(self, t: float) -> np.ndarray:
        return self._vphi(t)


class TrajectoryCoefficients:
    """Piecewise-linear interpolation in time through a stored trajectory,
    clamped at the endpoints."""

    def __init__(self, times, vphis, phis, velocities):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("need at least one sample")
        self.vphis = np.asarray(vphis, dtype=float)
        self.phis = np.asarray(phis, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)

    def _interp(self, stack: np.ndarray, t: float) -> np.ndarray:
        times = self.times
        if t <= times[0]:
            return stack[0]
        if t >= times[-1]:
            return stack[-1]
        j = int(np.searchsorted(times, t, side="right")) - 1
        j = min(j, len(times) - 2)
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * stack[j] + w * stack[j + 1]

    def velocity(self, t: float) -> np.ndarray:
        return self._interp(self.velocities, t)

    def phi_coeff(self, t: float) -> np.ndarray:
        return self._interp(self.phis, t)

    def vphi_coeff(self, t: float) -> np.ndarray:
        return self._interp(self.vphis, t)


class CallableForcing:
    """Optional right-hand-side forcing, one callable per equation, each
    mapping t to an array (or None for an unforced slot)."""

    def __init__(self, vphi=None, phi=None, velocity=None):
        self._vphi = vphi
        self._phi = phi
        self._velocity = velocity

    def vphi_term(self, t: float):
        return None if self._vphi is None else self._vphi(t)

    def phi_term(self, t: float):
        return None if self._phi is None else self._phi(t)

    def velocity_term(self, t: float):
        return None if self._velocity is None else self._velocity(t)


@dataclass
class FrozenCoefficients:
    """Everything a linearized solve needs besides the initial state: the
    coefficient provider, the degeneracy shift eta, the window length, and
    stepping controls. dt = None selects the adaptive step."""

    provider: object
    eta: float
    t_window: float
    dt: float | None = None
    cfl_safety: float = DEFAULT_CFL_SAFETY
    sample_dt: float | None = None
    clip: bool = True
    forcing: CallableForcing | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.t_window > 0:
            raise ValueError("t_window must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive when fixed")

    @classmethod
    def from_state(cls, V: ReformState, vphi_tilde: ScalarField, eta: float,
                   t_window: float, **kwargs) -> "FrozenCoefficients":
        provider = ConstantCoefficients(
            V.u.values, V.phi.values, vphi_tilde.values
        )
        return cls(provider=provider, eta=eta, t_window=t_window, **kwargs)


# -- stage assembly ----------------------------------------------------------


class _StageCoeffs:
    """Masked coefficient fields at one stage time."""

    __slots__ = ("v", "div_v", "q1", "phit", "vphit")

    def __init__(self, grid: Grid, provider, t: float, need_q1: bool):
        v = np.asarray(provider.velocity(t), dtype=float)
        self.v = np.stack([grid.masked(v[i]) for i in range(grid.dim)])
        self.div_v = grid.masked(grid.div(v))
        self.phit = grid.masked(np.asarray(provider.phi_coeff(t), dtype=float))
        self.vphit = grid.masked(np.asarray(provider.vphi_coeff(t), dtype=float))
        if need_q1:
            jac = np.empty((grid.dim, grid.dim) + grid.shape)
            for j in range(grid.dim):
                spec = grid.fft(v[j])
                for i in range(grid.dim):
                    order = tuple(1 if a == i else 0 for a in range(grid.dim))
                    jac[i, j] = grid.ifft(grid.derivative_multiplier(order) * spec)
            q1 = jac + np.swapaxes(jac, 0, 1)
            self.q1 = np.stack(
                [grid.masked(q1[i, j]) for i in range(grid.dim) for j in range(grid.dim)]
            ).reshape((grid.dim, grid.dim) + grid.shape)
        else:
            self.q1 = None


def _pm(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dealiased product of two already-masked factors."""
    return grid.ifft(grid.dealias_mask * grid.fft(a * b))


def _transport_rhs(grid, params, stage: _StageCoeffs, f: np.ndarray, forcing_val):
    rhs = -advect(grid, stage.v, f)
    rhs -= 0.5 * (params.delta1 - 1.0) * _pm(grid, stage.vphit, stage.div_v)
    if forcing_val is not None:
        rhs = rhs + forcing_val
    return rhs


def _momentum_rhs(grid, params, stage: _StageCoeffs, vphi_arr, eta,
                  phi, u, nu1, nu2, forcing_phi, forcing_u):
    """Explicit slope of the (phi, u) pair: the full right-hand side minus
    the shift (nu1 Lap + nu2 grad div) u. Passing nu1 = nu2 = 0 gives the
    full physical right-hand side (used for forcing construction and
    residual evaluation)."""
    press = 2.0 * params.A * params.gamma / (params.gamma - 1.0)
    weight = vphi_arr**2 + eta**2
    c_shear = params.alpha * weight
    c_compr = weight * (params.alpha + params.beta * stable_power(vphi_arr, 2.0 * params.m))
    s1 = params.alpha * params.delta1 / (params.delta1 - 1.0)
    s2 = params.beta * params.delta2 / (params.delta2 - 1.0)

    u_hats = [grid.fft(u[i]) for i in range(grid.dim)]
    div_u = np.zeros(grid.shape)
    for i in range(grid.dim):
        order = tuple(1 if a == i else 0 for a in range(grid.dim))
        div_u += grid.ifft(grid.derivative_multiplier(order) * u_hats[i])
    div_u_hat = grid.fft(div_u)

    phi_hat = grid.fft(phi)
    dphi = -advect(grid, stage.v, phi)
    dphi -= 0.5 * (params.gamma - 1.0) * _pm(grid, stage.phit, div_u)
    if forcing_phi is not None:
        dphi = dphi + forcing_phi

    grad_sq = grid.grad(vphi_arr**2)
    grad_hi = grid.grad(stable_power(vphi_arr, 2.0 * params.m + 2.0))
    c_shear_m = grid.masked(c_shear)
    c_compr_m = grid.masked(c_compr)

    du = np.empty_like(u)
    for i in range(grid.dim):
        order = tuple(1 if a == i else 0 for a in range(grid.dim))
        mult_i = grid.derivative_multiplier(order)
        lap = grid.ifft(-grid.k_squared * u_hats[i])
        gd = grid.ifft(mult_i * div_u_hat)
        dphi_i = grid.ifft(mult_i * phi_hat)
        term = -advect(grid, stage.v, u[i]) - press * _pm(grid, stage.phit, dphi_i)
        term += _pm(grid, c_shear_m, lap) + _pm(grid, c_compr_m, gd)
        term -= nu1 * lap + nu2 * gd
        acc = np.zeros(grid.shape)
        for j in range(grid.dim):
            acc += _pm(grid, stage.q1[i, j], grid.masked(grad_sq[j]))
        term += s1 * acc + s2 * _pm(grid, stage.div_v, grid.masked(grad_hi[i]))
        if forcing_u is not None:
            term = term + forcing_u[i]
        du[i] = term
    return dphi, du


def _exp_shift(grid: Grid, nu1: float, nu2: float, tau: float, u: np.ndarray) -> np.ndarray:
    """Apply exp(tau (nu1 Lap + nu2 grad div)) exactly in Fourier space."""
    if tau == 0.0 or (nu1 == 0.0 and nu2 == 0.0):
        return u
    k2 = grid.k_squared
    decay_perp = np.exp(-nu1 * k2 * tau)
    decay_par = np.exp(-(nu1 + nu2) * k2 * tau)
    u_hats = [grid.fft(u[i]) for i in range(grid.dim)]
    if grid.dim == 1:
        return np.stack([grid.ifft(decay_par * u_hats[0])])
    kdotu = np.zeros(grid.shape, dtype=complex)
    for i in range(grid.dim):
        kdotu += grid.wavenumbers[i] * u_hats[i]
    inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    out = np.empty_like(u)
    for i in range(grid.dim):
        par = grid.wavenumbers[i] * kdotu * inv_k2
        perp = u_hats[i] - par
        out[i] = grid.ifft(decay_perp * perp + decay_par * par)
    return out


def _clip(values: np.ndarray, cell_volume: float):
    """Zero every negative entry; report the count below the tolerance and
    the removed mass."""
    negative = values < 0.0
    count = int(np.count_nonzero(values < CLIP_TOLERANCE))
    mass = -float(values[negative].sum()) * cell_volume if negative.any() else 0.0
    if negative.any():
        values = np.where(negative, 0.0, values)
    return values, count, mass


# -- public steps ------------------------------------------------------------


@dataclass(frozen=True)
class TransportDiag:
    clip_count: int
    clipped_mass: float


def transport_step(params: FluidParams, vphi: ScalarField,
                   coeffs: FrozenCoefficients, dt: float, t: float = 0.0):
    """One SSP-RK3 step of vphi_t + v.grad vphi + ((delta1-1)/2) vphitilde
    div v = 0 with frozen coefficients, clipping negatives afterwards when
    coeffs.clip is set. Returns (new field, diagnostics)."""
    grid = vphi.grid
    forcing = coeffs.forcing
    f = vphi.values

    def rhs(ts: float, arr: np.ndarray) -> np.ndarray:
        stage = _StageCoeffs(grid, coeffs.provider, ts, need_q1=False)
        fv = forcing.vphi_term(ts) if forcing is not None else None
        return _transport_rhs(grid, params, stage, arr, fv)

    u1 = f + dt * rhs(t, f)
    u2 = 0.75 * f + 0.25 * (u1 + dt * rhs(t + dt, u1))
    out = f / 3.0 + (2.0 / 3.0) * (u2 + dt * rhs(t + 0.5 * dt, u2))

    count, mass = 0, 0.0
    if coeffs.clip:
        out, count, mass = _clip(out, grid.cell_volume)
    return ScalarField(grid, out), TransportDiag(clip_count=count, clipped_mass=mass)


@dataclass(frozen=True)
class MomentumDiag:
    nu1: float
    nu2: float
    coeff_min: float
    clip_count: int
    clipped_mass: float


def _stage_fields(vphi_new, dt_needed=3):
    """Normalize the new-iterate viscosity proxy into per-stage arrays at
    node offsets (0, 1/2, 1). A single field is reused at all stages (the
    frozen mode); a 3-tuple supplies the lockstep-transported fields."""
    if isinstance(vphi_new, ScalarField):
        arr = vphi_new.values
        return (arr, arr, arr)
    stages = tuple(
        s.values if isinstance(s, ScalarField) else np.asarray(s, dtype=float)
        for s in vphi_new
    )
    if len(stages) != dt_needed:
        raise ValueError(f"expected {dt_needed} stage fields, got {len(stages)}")
    return stages


def momentum_step(params: FluidParams, phi: ScalarField, u: VectorField,
                  coeffs: FrozenCoefficients, vphi_new, dt: float, t: float = 0.0):
    """One integrating-factor RK3 step of the coupled (phi, u) pair.

    vphi_new is the new-iterate viscosity proxy: either one field (frozen
    across the step) or three stage fields at offsets (0, 1/2, 1)*dt. Aborts
    when the compressive coefficient alpha + beta vphi^(2m) drops below
    alpha/2 anywhere on the grid."""
    grid = phi.grid
    eta = coeffs.eta
    stages_vphi = _stage_fields(vphi_new)

    coeff_min = math.inf
    nu1 = 0.0
    nu2 = 0.0
    for arr in stages_vphi:
        weight = arr**2 + eta**2
        compr = params.alpha + params.beta * stable_power(arr, 2.0 * params.m)
        coeff_min = min(coeff_min, float(compr.min()))
        nu1 = max(nu1, params.alpha * float(weight.max()))
        nu2 = max(nu2, float((weight * compr).max()))
    nu2 = max(nu2, 0.0)
    if coeff_min < 0.5 * params.alpha:
        raise SolverAbort(
            "ellipticity regime exit",
            t,
            f"grid-min alpha + beta vphi^(2m) = {coeff_min:.6g} < alpha/2",
        )

    forcing = coeffs.forcing
    provider = coeffs.provider

    def slope(ts: float, phi_arr, u_arr, vphi_arr):
        stage = _StageCoeffs(grid, provider, ts, need_q1=True)
        fp = forcing.phi_term(ts) if forcing is not None else None
        fu = forcing.velocity_term(ts) if forcing is not None else None
        return _momentum_rhs(grid, params, stage, vphi_arr, eta,
                             phi_arr, u_arr, nu1, nu2, fp, fu)

    G = lambda tau, vec: _exp_shift(grid, nu1, nu2, tau, vec)
    p0, u0 = phi.values, u.values

    k1p, k1u = slope(t, p0, u0, stages_vphi[0])
    p2 = p0 + 0.5 * dt * k1p
    u2 = G(0.5 * dt, u0 + 0.5 * dt * k1u)
    k2p, k2u = slope(t + 0.5 * dt, p2, u2, stages_vphi[1])
    p3 = p0 + dt * (-k1p + 2.0 * k2p)
    u3 = G(dt, u0) + dt * (-G(dt, k1u) + 2.0 * G(0.5 * dt, k2u))
    k3p, k3u = slope(t + dt, p3, u3, stages_vphi[2])

    phi_new = p0 + dt * (k1p + 4.0 * k2p + k3p) / 6.0
    u_new = G(dt, u0) + dt * (G(dt, k1u) + 4.0 * G(0.5 * dt, k2u) + k3u) / 6.0

    if not (np.all(np.isfinite(phi_new)) and np.all(np.isfinite(u_new))):
        raise SolverAbort("solution lost finiteness", t + dt)

    count, mass = 0, 0.0
    if coeffs.clip:
        phi_new, count, mass = _clip(phi_new, grid.cell_volume)
    diag = MomentumDiag(nu1=nu1, nu2=nu2, coeff_min=coeff_min,
                        clip_count=count, clipped_mass=mass)
    return ScalarField(grid, phi_new), VectorField(grid, u_new), diag


# -- window solve ------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled solution of one linearized window: states at the sample
    times, plus per-step diagnostics."""

    states: list
    times: list
    dt_history: list = field(default_factory=list)
    max_speed_history: list = field(default_factory=list)
    clip_counts: list = field(default_factory=list)
    clipped_mass: list = field(default_factory=list)
    eta: float = 0.0

    def __post_init__(self):
        if len(self.states) != len(self.times):
            raise ValueError("states and times disagree in length")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise ValueError("sample times must increase strictly")

    def state_at(self, t: float) -> ReformState:
        for s, ts in zip(self.states, self.times):
            if abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no sample at t = {t}")

    def as_coefficients(self) -> TrajectoryCoefficients:
        return TrajectoryCoefficients(
            times=self.times,
            vphis=np.stack([s.vphi.values for s in self.states]),
            phis=np.stack([s.phi.values for s in self.states]),
            velocities=np.stack([s.u.values for s in self.states]),
        )

    @property
    def final(self) -> ReformState:
        return self.states[-1]


def _sample_times(t_window: float, sample_dt: float | None):
    if sample_dt is None:
        return None
    times = []
    k = 1
    while k * sample_dt < t_window - 1e-12 * max(1.0, t_window):
        times.append(k * sample_dt)
        k += 1
    times.append(t_window)
    return times


def adaptive_dt(params: FluidParams, grid: Grid, v: np.ndarray,
                phitilde: np.ndarray, cfl_safety: float) -> float:
    """Transport-limited step: the configured CFL formula combined with the
    imaginary-axis stability bound of the RK3 stability polynomial at the
    highest retained wavenumber."""
    speed = float(np.sqrt(np.sum(v**2, axis=0)).max())
    coeff = float(np.abs(phitilde).max())
    formula = cfl_safety * grid.spacing / (
        speed + 0.5 * (params.gamma - 1.0) * coeff + 1e-30
    )
    kmax = 2.0 * math.pi * (grid.n // 3) / grid.box_length
    acoustic = math.sqrt(params.A * params.gamma) * coeff
    stability = STABILITY_COURANT / (kmax * (speed + acoustic + 1e-30))
    return min(formula, stability)


def solve_linearized(init: ReformState, coeffs: FrozenCoefficients,
                     params: FluidParams) -> Trajectory:
    """March the linearized system across [0, t_window], landing exactly on
    the sample cadence, and return the sampled trajectory. The viscosity
    proxy advances in lockstep by two transport half steps per outer step,
    feeding stage fields to the momentum update."""
    grid = init.grid
    t_window = coeffs.t_window
    samples = _sample_times(t_window, coeffs.sample_dt)

    floor = CLIP_TOLERANCE if coeffs.clip else None
    vphi = init.vphi
    phi = init.phi
    u = init.u
    states = [ReformState(vphi, phi, u, time=0.0, floor=floor)]
    times = [0.0]
    traj = Trajectory(states=states, times=times, eta=coeffs.eta)

    t = 0.0
    sample_idx = 0
    dt_floor = 1e-13 * max(t_window, 1.0)
    while t < t_window - 1e-12 * max(1.0, t_window):
        if coeffs.dt is not None:
            dt = coeffs.dt
            speed = float(np.sqrt(np.sum(coeffs.provider.velocity(t) ** 2, axis=0)).max())
        else:
            v_now = np.asarray(coeffs.provider.velocity(t), dtype=float)
            phit_now = np.asarray(coeffs.provider.phi_coeff(t), dtype=float)
            dt = adaptive_dt(params, grid, v_now, phit_now, coeffs.cfl_safety)
            speed = float(np.sqrt(np.sum(v_now**2, axis=0)).max())
        if samples is not None and sample_idx < len(samples):
            t_target = samples[sample_idx]
        else:
            t_target = t_window
        if t + dt >= t_target - 1e-12 * max(1.0, t_target):
            dt = t_target - t
        if dt <= dt_floor:
            raise SolverAbort("step size underflow", t, f"dt = {dt:.3e}")

        half = FrozenCoefficients(
            provider=coeffs.provider, eta=coeffs.eta, t_window=t_window,
            clip=coeffs.clip, forcing=coeffs.forcing,
        )
        vphi_half, d1 = transport_step(params, vphi, half, 0.5 * dt, t)
        vphi_full, d2 = transport_step(params, vphi_half, half, 0.5 * dt, t + 0.5 * dt)
        phi, u, mdiag = momentum_step(
            params, phi, u, coeffs, (vphi, vphi_half, vphi_full), dt, t
        )
        vphi = vphi_full
        t = t_target if abs(t + dt - t_target) <= 1e-12 * max(1.0, t_target) else t + dt

        traj.dt_history.append(dt)
        traj.max_speed_history.append(speed)
        traj.clip_counts.append(d1.clip_count + d2.clip_count + mdiag.clip_count)
        traj.clipped_mass.append(d1.clipped_mass + d2.clipped_mass + mdiag.clipped_mass)

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

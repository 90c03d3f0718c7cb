"""Lagrangian (stretch) formulation: coordinate maps, the zero-tension
fast-diffusion solver with forcing, and the explicit stationary profiles.

The stretch u(s,t) = M / h(x(s,t),t) lives on the unit reference interval
with homogeneous Neumann walls and conserved unit mean. Without surface
tension the dynamics reduce to u_t = nu (u^{-2} u_s)_s + f(s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .banded import BandOperator, BandedSystem, solve_banded
from .errors import (
    ConvergenceError,
    IncompatibleInitialDataError,
    InvalidStateError,
    NoStationaryProfileError,
    PositivityContradictionError,
    PositivityError,
    StepRejectedError,
)
from .functionals import DiagnosticsSample, DiagnosticsSeries, lagrangian_mass
from .grids import Field, Grid1D, derivative, integrate

NEWTON_TOL = 1e-11
NEWTON_MAX_ITERS = 30


def _require_unit_domain(grid: Grid1D, op: str) -> None:
    if abs(grid.length - 1.0) > 1e-12:
        raise InvalidStateError(f"{op} requires a unit-length domain, got L={grid.length}")


def _require_positive(values: np.ndarray, what: str) -> None:
    if float(np.min(values)) <= 0:
        raise PositivityError(f"{what} must be strictly positive")


@dataclass(eq=False)
class LagrangianState:
    """Stretch profile on s in [0, 1] at a given time."""

    u: Field
    t: float = 0.0

    def __post_init__(self):
        _require_unit_domain(self.u.grid, "LagrangianState")
        _require_positive(self.u.values, "stretch")
        mean = integrate(self.u)
        if abs(mean - 1.0) > 1e-10:
            raise InvalidStateError(f"stretch mean must be 1 within 1e-10, got {mean!r}")


@dataclass(eq=False)
class ForcingProfile:
    """Zero-mean forcing on the reference interval.

    `imbalance` records the raw quadrature integral before the mean was
    removed; compatibility of the originating data bounds it by 1e-6.
    """

    f: Field
    imbalance: float = 0.0


@dataclass(eq=False)
class StationaryProfile:
    """Stationary stretch, parametric height, and the mass-fixing constant."""

    u_inf: Field
    h_inf: Field
    x_inf: Field
    c0: float


@dataclass(eq=False)
class InitialMap:
    """Particle-label map at t = 0 and its normalization constant."""

    x_of_s: Field
    K: float


def initial_map(h0: Field) -> InitialMap:
    """Monotone map x(s) with x_s = K / h0(x), x(0) = 0, x(1) = 1.

    Computed as the fixed point of x = K * cumtrapz(1 / h0(x)) with
    K = 1 / trapz(1 / h0(x)), so the discrete identity K * integral of
    1/h0 along the map equals 1 exactly. K agrees with the mass of h0 to
    quadrature accuracy.
    """
    grid = h0.grid
    _require_unit_domain(grid, "initial_map")
    _require_positive(h0.values, "initial_map: height")
    interp = PchipInterpolator(grid.nodes, h0.values, extrapolate=True)
    s = grid.nodes
    x = s.copy()
    K = 1.0
    for _ in range(100):
        g = 1.0 / interp(x)
        incr = 0.5 * grid.dx * (g[:-1] + g[1:])
        T = np.concatenate([[0.0], np.cumsum(incr)])
        K_new = 1.0 / T[-1]
        x_new = K_new * T
        shift = float(np.max(np.abs(x_new - x)))
        x, K = x_new, K_new
        if shift <= 1e-14:
            break
    else:
        raise ConvergenceError("initial_map fixed point did not converge")
    if np.any(np.diff(x) <= 0):
        raise InvalidStateError("initial_map produced a non-monotone map")
    return InitialMap(x_of_s=Field(grid, x), K=float(K))


def to_lagrangian(h: Field, x_of_s: Field, M: float) -> LagrangianState:
    """Stretch u(s) = M / h(x(s)), normalized to exact unit discrete mean."""
    _require_positive(h.values, "to_lagrangian: height")
    interp = PchipInterpolator(h.grid.nodes, h.values, extrapolate=True)
    u = M / interp(x_of_s.values)
    _require_positive(u, "to_lagrangian: stretch")
    grid = x_of_s.grid
    u /= float(grid.trapezoid_weights @ u)
    return LagrangianState(Field(grid, u), t=0.0)


@dataclass(eq=False)
class EulerFrameFields:
    h: Field
    x_of_s: Field


def from_lagrangian(state: LagrangianState, M: float) -> EulerFrameFields:
    """Invert the transform: x(s) = cumtrapz(u), h = M / u resampled on x-nodes."""
    grid = state.u.grid
    u = state.u.values
    incr = 0.5 * grid.dx * (u[:-1] + u[1:])
    x = np.concatenate([[0.0], np.cumsum(incr)])
    x[-1] = 1.0  # trapz(u) = 1 to round-off; pin the endpoint
    h_param = M / u
    h_uniform = PchipInterpolator(x, h_param, extrapolate=True)(grid.nodes)
    return EulerFrameFields(h=Field(grid, h_uniform), x_of_s=Field(grid, x))


def forcing(h0: Field, v0: Field, nu: float) -> ForcingProfile:
    """Forcing f(s) = (M / h0) d/dx [v0 + nu h0_x / h0] along the initial map.

    The map turns (M / h0) d/dx into d/ds, so f is computed as the reference
    derivative of w(x(s)) with w = v0 + nu h0_x / h0, and the compatibility
    integral of f equals w at the right wall minus w at the left wall
    exactly; a defect above 1e-6 raises. The returned profile has its
    discrete quadrature mean removed so the flux-form mass argument holds
    exactly.
    """
    grid = h0.grid
    _require_unit_domain(grid, "forcing")
    _require_positive(h0.values, "forcing: height")
    dx = grid.dx
    hv = h0.values
    vv = v0.values
    # exact integral of f is w(right wall) - w(left wall); one-sided wall
    # stencils keep genuine incompatibility visible
    hx_left = (-3.0 * hv[0] + 4.0 * hv[1] - hv[2]) / (2.0 * dx)
    hx_right = (3.0 * hv[-1] - 4.0 * hv[-2] + hv[-3]) / (2.0 * dx)
    raw = (vv[-1] + nu * hx_right / hv[-1]) - (vv[0] + nu * hx_left / hv[0])
    if abs(raw) > 1e-6:
        raise IncompatibleInitialDataError(
            f"forcing integral {raw:.3e} exceeds 1e-6; data incompatible with the walls"
        )
    imap = initial_map(h0)
    x = imap.x_of_s.values
    # compatible w vanishes at the walls and extends oddly, which a natural
    # spline reproduces to high order; the reference derivative of w(x(s))
    # is exactly (M / h0) d/dx w
    w = vv + nu * derivative(h0, 1, "neumann").values / hv
    w_along = CubicSpline(grid.nodes, w, bc_type="natural")(x)
    f = derivative(Field(grid, w_along), 1, "dirichlet-zero").values
    mean = float(grid.trapezoid_weights @ f)
    return ForcingProfile(Field(grid, f - mean), imbalance=float(raw))


def _flux_divergence(u: np.ndarray, nu: float, dx: float, w: np.ndarray) -> np.ndarray:
    """Conservative divergence of the flux nu (-1/u)_s with zero wall fluxes."""
    phi = -1.0 / u
    flux = np.zeros(u.size + 1)
    flux[1:-1] = nu * (phi[1:] - phi[:-1]) / dx
    return (flux[1:] - flux[:-1]) / w


def _pme_jacobian(u: np.ndarray, nu: float, dt: float, dx: float, w: np.ndarray) -> BandOperator:
    """Jacobian of u - dt * divergence(u) in tridiagonal band form."""
    n = u.size
    dphi = nu / (dx * u * u)  # d(flux across a face)/du on its own side
    op = BandOperator(n, 1, 1)
    main = op.diagonal(0)
    lo = op.diagonal(-1)
    up = op.diagonal(1)
    main[:] = 1.0
    main[:-1] += dt * dphi[:-1] / w[:-1]
    main[1:] += dt * dphi[1:] / w[1:]
    up[:-1] = -dt * dphi[1:] / w[:-1]
    lo[1:] = -dt * dphi[:-1] / w[1:]
    return op


def pme_step(state: LagrangianState, f: ForcingProfile | None, nu: float, dt: float) -> LagrangianState:
    """One fully implicit step of u_t = nu (u^{-2} u_s)_s + f, damped Newton.

    The diffusion is written in flux form with zero wall fluxes, so together
    with the zero-mean forcing the discrete mean of u is preserved exactly.
    Positivity loss of the converged iterate is a contradiction of the
    dynamics and aborts with a solver-bug verdict.
    """
    grid = state.u.grid
    dx = grid.dx
    w = grid.trapezoid_weights
    fv = f.f.values if f is not None else 0.0
    u_old = state.u.values
    u = u_old.copy()

    def residual(cand: np.ndarray) -> np.ndarray:
        return cand - u_old - dt * (_flux_divergence(cand, nu, dx, w) + fv)

    r = residual(u)
    rnorm = float(np.max(np.abs(r)))
    for _ in range(NEWTON_MAX_ITERS):
        if rnorm <= 1e-14:
            break
        jac = _pme_jacobian(u, nu, dt, dx, w)
        delta = solve_banded(BandedSystem(jac, -r))
        lam = 1.0
        for _ in range(40):
            trial = u + lam * delta
            if float(np.min(trial)) > 0:
                r_trial = residual(trial)
                r_trial_norm = float(np.max(np.abs(r_trial)))
                if r_trial_norm < rnorm or lam < 1e-6:
                    break
            lam *= 0.5
        else:
            raise StepRejectedError("pme_step: damping failed to find an admissible update")
        u, r, rnorm = trial, r_trial, r_trial_norm
        if lam * float(np.max(np.abs(delta))) <= NEWTON_TOL:
            r = residual(u)
            rnorm = float(np.max(np.abs(r)))
            if rnorm <= 1e-10:
                break
    else:
        raise StepRejectedError(f"pme_step: Newton stalled with residual {rnorm:.3e}")
    if float(np.min(u)) <= 0:
        raise PositivityContradictionError(
            "stretch lost positivity, which the dynamics forbid: solver bug"
        )
    return LagrangianState(Field(grid, u), t=state.t + dt)


@dataclass(eq=False)
class PmeRunResult:
    final: LagrangianState
    diagnostics: DiagnosticsSeries
    termination: str


def _sample_pme(series: DiagnosticsSeries, state: LagrangianState) -> None:
    u = state.u.values
    w = state.u.grid.trapezoid_weights
    series.append(
        DiagnosticsSample(
            t=state.t,
            mass=lagrangian_mass(state.u),
            u_minus_1_l2sq=float(w @ (u - 1.0) ** 2),
            extra={"u_min": float(np.min(u)), "u_max": float(np.max(u))},
        )
    )


def pme_run(state0: LagrangianState, f: ForcingProfile | None, nu: float, ctrl) -> PmeRunResult:
    """Drive pme_step to t_end, steady state, or stall, sampling diagnostics.

    Steady state is declared when the implied time derivative of a step drops
    to ||u_t||_inf <= 1e-11. Rejected steps halve dt down to ctrl.dt_min.
    """
    state = state0
    series = DiagnosticsSeries()
    _sample_pme(series, state)
    next_sample = state.t + ctrl.sample_every
    dt_cur = ctrl.dt_init
    rejections = 0
    termination = "reached_t_end"
    while state.t < ctrl.t_end - 1e-13:
        dt = min(dt_cur, ctrl.dt_max, ctrl.t_end - state.t)
        try:
            new_state = pme_step(state, f, nu, dt)
        except StepRejectedError:
            rejections += 1
            if dt_cur <= ctrl.dt_min * 1.0000001:
                raise
            dt_cur = max(0.5 * dt_cur, ctrl.dt_min)
            continue
        rejections = 0
        u_t_inf = float(np.max(np.abs(new_state.u.values - state.u.values))) / dt
        state = new_state
        if state.t >= next_sample - 1e-12 or state.t >= ctrl.t_end - 1e-13:
            if state.t > series.samples[-1].t:
                _sample_pme(series, state)
            while next_sample <= state.t + 1e-12:
                next_sample += ctrl.sample_every
        if u_t_inf <= 1e-11:
            termination = "steady_state"
            break
        dt_cur = min(dt_cur * 1.25, ctrl.dt_max)
    if state.t > series.samples[-1].t:
        _sample_pme(series, state)
    return PmeRunResult(final=state, diagnostics=series, termination=termination)


@dataclass(frozen=True)
class MaxPrincipleBound:
    """Linear-in-time upper bound; the lower bound is positivity itself."""

    upper: float
    lower_positive: bool = True


def max_principle_envelope(u0: Field, f: ForcingProfile | None, t: float) -> MaxPrincipleBound:
    """Upper bound ||u0||_inf + ||f||_inf * t for the stretch at time t."""
    fmax = float(np.max(np.abs(f.f.values))) if f is not None else 0.0
    return MaxPrincipleBound(upper=float(np.max(u0.values)) + fmax * t)


def stationary_profile(f: ForcingProfile, nu: float, M: float) -> StationaryProfile:
    """Stationary stretch solving nu (1/u)_ss = f with Neumann walls.

    Solves the discrete Neumann-Poisson problem for phi = -1/u with the same
    flux operators as pme_step (so the result is an exact fixed point of the
    stepper), then fixes the additive constant by the unit-mass constraint
    with a bracketed root-find. c0 is the mean of phi, matching the
    convention in which the particular part is mean-free.
    """
    if nu <= 0:
        raise ValueError(f"stationary_profile requires nu > 0, got {nu}")
    grid = f.f.grid
    n = grid.n
    dx = grid.dx
    w = grid.trapezoid_weights
    # Flux-form Neumann Laplacian L phi = -f/nu, consistent since f has zero mean.
    lap = BandOperator(n, 1, 1)
    main, lo, up = lap.diagonal(0), lap.diagonal(-1), lap.diagonal(1)
    inv = 1.0 / (dx * w)
    main[:-1] -= inv[:-1]
    main[1:] -= inv[1:]
    up[:-1] = inv[:-1]
    lo[1:] = inv[1:]
    rhs = -f.f.values / nu
    # Pin phi[0] = 0 to remove the constant null space; the dropped equation
    # holds automatically because the weighted row sums and rhs mean vanish.
    lap.set_identity_row(0)
    rhs = rhs.copy()
    rhs[0] = 0.0
    phi_p = solve_banded(BandedSystem(lap, rhs))

    phi_max = float(np.max(phi_p))
    spread = max(float(np.max(phi_p) - np.min(phi_p)), 1.0)

    def mass_of(c: float) -> float:
        return float(w @ (1.0 / (-phi_p - c)))

    # mass_of is increasing on c < -phi_max, diverging at the pole and
    # vanishing at -infinity; bracket the unit-mass constant on that branch.
    gap = 1e-12 * spread
    for _ in range(100):
        hi = -phi_max - gap
        if mass_of(hi) > 1.0:
            break
        gap *= 0.5
    else:
        raise NoStationaryProfileError("no integration constant reaches unit mass")
    dist = 2.0 * spread
    for _ in range(100):
        lo_c = -phi_max - dist
        if mass_of(lo_c) < 1.0:
            break
        dist *= 2.0
    else:
        raise NoStationaryProfileError("could not bracket the mass constraint")
    c = brentq(lambda cc: mass_of(cc) - 1.0, lo_c, hi, xtol=1e-14, rtol=1e-15, maxiter=200)

    phi = phi_p + c
    u_inf = -1.0 / phi
    if float(np.min(u_inf)) <= 0:
        raise NoStationaryProfileError("stationary stretch is not positive")
    c0 = float(w @ phi)  # constant in the mean-free decomposition of phi
    incr = 0.5 * dx * (u_inf[:-1] + u_inf[1:])
    x_inf = np.concatenate([[0.0], np.cumsum(incr)])
    return StationaryProfile(
        u_inf=Field(grid, u_inf),
        h_inf=Field(grid, M / u_inf),
        x_inf=Field(grid, x_inf),
        c0=c0,
    )

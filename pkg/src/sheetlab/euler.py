"""Euler-frame sheet solver: flux-form continuity plus semi-implicit momentum.

One step solves the momentum equation backward in time with the viscous term
implicit (coefficients frozen at the current height), the advection
coefficient frozen Picard-style, and the surface-tension coupling made
implicit by substituting the continuity update into the momentum system:

    [I + dt A(v) - dt V(h) + dt^2 sigma T C(h)] v_new = v + dt sigma T h
    h_new = h - dt C(h) v_new

T is the third derivative with mirror closure, C the conservative divergence
of the height flux with zero wall fluxes, so the trapezoid mass of h is
conserved to round-off and the flat state is an exact fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .banded import BandOperator, BandedSystem, solve_banded
from .errors import (
    InvalidStateError,
    RuptureDetectedError,
    StepRejectedError,
    StiffnessFailureError,
)
from .functionals import (
    DiagnosticsSample,
    DiagnosticsSeries,
    SheetParams,
    energy_euler,
    entropy_euler,
    mass_euler,
)
from .grids import Field, Grid1D, derivative, norms

RUPTURE_THRESHOLD = 1e-13
STEADY_TOL = 1e-9


@dataclass(eq=False)
class SheetState:
    """Height and lateral velocity on a shared grid at time t."""

    h: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.h.grid != self.v.grid:
            raise InvalidStateError("height and velocity must share a grid")
        if float(np.min(self.h.values)) <= 0:
            raise InvalidStateError("height must be strictly positive")
        if self.v.values[0] != 0.0 or self.v.values[-1] != 0.0:
            raise InvalidStateError("velocity must vanish at both walls")

    @property
    def grid(self) -> Grid1D:
        return self.h.grid


@dataclass(frozen=True)
class StepControls:
    dt_init: float = 1e-4
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    cfl: float = 0.5
    newton_tol: float = 1e-10
    newton_max_iters: int = 6
    t_end: float = 1.0
    sample_every: float = 0.01

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not (0 < self.newton_tol <= 1e-6):
            raise ValueError("newton_tol must lie in (0, 1e-6]")
        if not (0 < self.cfl <= 1):
            raise ValueError("cfl must lie in (0, 1]")
        if self.newton_max_iters < 0:
            raise ValueError("newton_max_iters must be >= 0")


@lru_cache(maxsize=64)
def _third_derivative_operator(grid: Grid1D) -> BandOperator:
    """Central third derivative with mirror closure; wall rows vanish."""
    n, dx = grid.n, grid.dx
    op = BandOperator(n, 2, 2)
    c = 1.0 / (2.0 * dx**3)
    op.diagonal(-2)[2:-1] = -c
    op.diagonal(-1)[1:-1] = 2.0 * c
    op.diagonal(1)[1:-1] = -2.0 * c
    op.diagonal(2)[1:-2] = c
    # mirror h[-1] = h[1] and h[n] = h[n-2] folds into the near-wall rows
    op.diagonal(-1)[1] = 2.0 * c
    op.diagonal(0)[1] = -c
    op.diagonal(0)[n - 2] = c
    op.diagonal(1)[n - 2] = -2.0 * c
    return op


def _divergence_operator(h: np.ndarray, grid: Grid1D) -> BandOperator:
    """C with (C v)_i the conservative divergence of the flux h v.

    Half-point fluxes average the nodal fluxes; wall fluxes vanish with the
    velocity, and the wall cells have half width, which makes the trapezoid
    mass of h - dt C v equal that of h identically.
    """
    n, dx = grid.n, grid.dx
    op = BandOperator(n, 1, 1)
    op.diagonal(1)[1:-1] = h[2:] / (2.0 * dx)
    op.diagonal(-1)[1:-1] = -h[:-2] / (2.0 * dx)
    op.diagonal(0)[0] = h[0] / dx
    op.diagonal(1)[0] = h[1] / dx
    op.diagonal(0)[n - 1] = -h[n - 1] / dx
    op.diagonal(-1)[n - 1] = -h[n - 2] / dx
    return op


def _viscous_operator(h: np.ndarray, nu: float, grid: Grid1D) -> BandOperator:
    """(nu / h) d/dx (h d/dx .) on interior rows, half-point height averages."""
    dx = grid.dx
    op = BandOperator(grid.n, 1, 1)
    h_right = 0.5 * (h[1:-1] + h[2:])
    h_left = 0.5 * (h[1:-1] + h[:-2])
    scale = nu / (h[1:-1] * dx**2)
    op.diagonal(1)[1:-1] = scale * h_right
    op.diagonal(-1)[1:-1] = scale * h_left
    op.diagonal(0)[1:-1] = -scale * (h_right + h_left)
    return op


def _advection_coefficients(v: np.ndarray, dx: float):
    """Diagonals of v d/dx on interior rows, central."""
    c = v[1:-1] / (2.0 * dx)
    return c, -c


def step(
    state: SheetState,
    p: SheetParams,
    dt: float,
    newton_tol: float = 1e-10,
    newton_max_iters: int = 6,
) -> SheetState:
    """Advance one semi-implicit step of size dt.

    newton_max_iters correction re-solves refresh the advection coefficient;
    failure of the correction loop to contract rejects the step. Positivity
    loss of the updated height raises RuptureDetectedError with
    (t, argmin, h_min).
    """
    grid = state.grid
    n = grid.n
    h = state.h.values
    v = state.v.values

    C = _divergence_operator(h, grid)
    V = _viscous_operator(h, p.nu, grid)
    if p.sigma > 0:
        T = _third_derivative_operator(grid)
        base = T.compose(C)
        base.diags *= dt * dt * p.sigma
        rhs = v + (dt * p.sigma) * T.matvec(h)
    else:
        base = BandOperator(n, 1, 1)
        rhs = v.copy()
    base.diagonal(0)[:] += 1.0
    base.add_into(V, -dt)
    rhs[0] = 0.0
    rhs[-1] = 0.0

    w = v
    v_new = v
    for it in range(1 + newton_max_iters):
        mat = base.copy()
        up, lo = _advection_coefficients(w, grid.dx)
        mat.diagonal(1)[1:-1] += dt * up
        mat.diagonal(-1)[1:-1] += dt * lo
        mat.set_identity_row(0)
        mat.set_identity_row(n - 1)
        v_new = solve_banded(BandedSystem(mat, rhs))
        shift = float(np.max(np.abs(v_new - w)))
        w = v_new
        if it > 0 and shift <= newton_tol:
            break
    else:
        if newton_max_iters > 0:
            raise StepRejectedError(f"advection correction stalled at {shift:.3e}")

    h_new = h - dt * C.matvec(v_new)
    h_min = float(np.min(h_new))
    if h_min <= RUPTURE_THRESHOLD:
        idx = int(np.argmin(h_new))
        raise RuptureDetectedError(t=state.t + dt, index=idx, h_min=h_min)
    v_new[0] = 0.0
    v_new[-1] = 0.0
    return SheetState(Field(grid, h_new), Field(grid, v_new), t=state.t + dt)


@dataclass(eq=False)
class EulerRunResult:
    final: SheetState
    diagnostics: DiagnosticsSeries
    termination: str
    rupture: RuptureDetectedError | None = None


def _sample_euler(series: DiagnosticsSeries, state: SheetState, p: SheetParams, dt: float) -> None:
    hx = derivative(state.h, 1, "neumann")
    vn = norms(state.v)
    hvals = state.h.values
    series.append(
        DiagnosticsSample(
            t=state.t,
            mass=mass_euler(state.h),
            energy=energy_euler(state.h, state.v, p),
            entropy=entropy_euler(state.h, state.v, p),
            hx_l2sq=norms(hx).l2 ** 2,
            h_min=float(np.min(hvals)),
            h_max=float(np.max(hvals)),
            extra={"v_l2sq": vn.l2**2, "v_linf": vn.linf, "dt": dt},
        )
    )


def run(
    state0: SheetState,
    p: SheetParams,
    ctrl: StepControls,
    stop_when=None,
) -> EulerRunResult:
    """Drive step() to t_end with CFL-limited adaptive dt and step rejection.

    Termination is "reached_t_end", "steady_state" (state within 1e-9 of the
    flat profile), "rupture_detected", or "stop_condition" when the optional
    stop_when(state) callback fires at a sample time.
    """
    grid = state0.grid
    flat = p.mass / grid.length
    state = state0
    series = DiagnosticsSeries()
    _sample_euler(series, state, p, ctrl.dt_init)
    next_sample = state.t + ctrl.sample_every

    def is_steady(s: SheetState) -> bool:
        return (
            float(np.max(np.abs(s.h.values - flat))) + float(np.max(np.abs(s.v.values)))
            <= STEADY_TOL
        )

    if is_steady(state):
        return EulerRunResult(state, series, "steady_state")
    if stop_when is not None and stop_when(state):
        return EulerRunResult(state, series, "stop_condition")

    dt_cur = ctrl.dt_init
    rejections = 0
    termination = "reached_t_end"
    rupture = None
    while state.t < ctrl.t_end - 1e-13:
        vmax = float(np.max(np.abs(state.v.values)))
        dt = min(dt_cur, ctrl.dt_max, ctrl.t_end - state.t)
        if vmax > 0:
            dt = min(dt, ctrl.cfl * grid.dx / vmax)
        try:
            new_state = step(state, p, dt, ctrl.newton_tol, ctrl.newton_max_iters)
        except StepRejectedError:
            rejections += 1
            if dt_cur <= ctrl.dt_min * 1.0000001:
                if rejections > 30:
                    raise StiffnessFailureError(
                        f"dt pinned at dt_min={ctrl.dt_min} with repeated rejections"
                    )
            dt_cur = max(0.5 * dt_cur, ctrl.dt_min)
            continue
        except RuptureDetectedError as err:
            if dt > ctrl.dt_min * 1.0000001:
                # may be a step-size artifact; retry smaller before declaring
                dt_cur = max(0.5 * dt, ctrl.dt_min)
                rejections += 1
                continue
            termination = "rupture_detected"
            rupture = err
            break
        rejections = 0
        state = new_state
        dt_cur = min(dt_cur * 1.25, ctrl.dt_max)
        at_end = state.t >= ctrl.t_end - 1e-13
        if state.t >= next_sample - 1e-12 or at_end:
            if state.t > series.samples[-1].t:
                _sample_euler(series, state, p, dt)
            while next_sample <= state.t + 1e-12:
                next_sample += ctrl.sample_every
            if is_steady(state):
                termination = "steady_state"
                break
            if stop_when is not None and stop_when(state):
                termination = "stop_condition"
                break
    if state.t > series.samples[-1].t:
        _sample_euler(series, state, p, ctrl.dt_init)
    return EulerRunResult(state, series, termination, rupture)


def min_height_trace(diag: DiagnosticsSeries) -> list[tuple[float, float]]:
    """The (t, h_min) track of a run's diagnostics."""
    if len(diag) == 0:
        raise InvalidStateError("min_height_trace needs a non-empty diagnostics series")
    return [(s.t, s.h_min) for s in diag.samples]

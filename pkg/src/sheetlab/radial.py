"""Radially symmetric sheet solver on the unit disc.

Cell-centered fields at r_j = (j + 1/2) dr keep every 1/r factor away from
the axis; wall fluxes vanish identically (the r = 0 face carries no area and
the outer wall has zero velocity), so the measure-weighted mass
sum(h r dr) is conserved to round-off. The momentum step mirrors the
Euler-frame solver: implicit viscosity, Picard-frozen advection, and the
curvature coupling made implicit through the continuity substitution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .banded import BandOperator, BandedSystem, solve_banded
from .errors import (
    InvalidStateError,
    RuptureDetectedError,
    StepRejectedError,
    StiffnessFailureError,
)
from .euler import RUPTURE_THRESHOLD, STEADY_TOL, StepControls
from .functionals import DiagnosticsSample, DiagnosticsSeries


@dataclass(frozen=True)
class RadialGrid:
    """n cells on (0, 1) with centers (j + 1/2) dr and faces j dr."""

    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"radial grid needs at least 8 cells, got {self.n}")

    @property
    def dr(self) -> float:
        return 1.0 / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        c = (np.arange(self.n) + 0.5) * self.dr
        c.flags.writeable = False
        return c

    @cached_property
    def faces(self) -> np.ndarray:
        f = np.arange(self.n + 1) * self.dr
        f.flags.writeable = False
        return f

    @cached_property
    def weights(self) -> np.ndarray:
        """Midpoint quadrature weights for integrals against r dr."""
        w = self.centers * self.dr
        w.flags.writeable = False
        return w


@dataclass(frozen=True)
class RadialParams:
    sigma: float
    mu: float
    mass: float
    m_floor: float = 1e-6

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.m_floor > 0:
            raise ValueError(f"m_floor must be positive, got {self.m_floor}")


@dataclass(eq=False)
class RadialState:
    grid: RadialGrid
    h: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.h = np.ascontiguousarray(self.h, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.h.shape != (self.grid.n,) or self.v.shape != (self.grid.n,):
            raise InvalidStateError("radial fields must have one value per cell")
        if float(np.min(self.h)) <= 0:
            raise InvalidStateError("height must be strictly positive")


def _height_gradient(h: np.ndarray, dr: float) -> np.ndarray:
    """Cell-centered h_r with mirror ghosts (zero normal derivative walls)."""
    hg = np.concatenate(([h[0]], h, [h[-1]]))
    return (hg[2:] - hg[:-2]) / (2.0 * dr)


@lru_cache(maxsize=32)
def _curvature_operator(grid: RadialGrid) -> BandOperator:
    """kappa = d/dr [ (1/r) d/dr (r h_r) ] at centers, h_r = 0 at the walls."""
    n, dr = grid.n, grid.dr
    rc, rf = grid.centers, grid.faces
    eta = BandOperator(n, 1, 1)
    scale = 1.0 / (dr * dr * rc)
    eta.diagonal(1)[:-1] = rf[1:-1] * scale[:-1]
    eta.diagonal(-1)[1:] = rf[1:-1] * scale[1:]
    eta.diagonal(0)[:-1] -= rf[1:-1] * scale[:-1]
    eta.diagonal(0)[1:] -= rf[1:-1] * scale[1:]
    outer = BandOperator(n, 1, 1)
    outer.diagonal(1)[1:-1] = 1.0 / (2.0 * dr)
    outer.diagonal(-1)[1:-1] = -1.0 / (2.0 * dr)
    # one-sided closures from linear extrapolation of eta past the walls
    outer.diagonal(0)[0] = -1.0 / dr
    outer.diagonal(1)[0] = 1.0 / dr
    outer.diagonal(0)[n - 1] = 1.0 / dr
    outer.diagonal(-1)[n - 1] = -1.0 / dr
    return outer.compose(eta)


def _radial_divergence(h: np.ndarray, grid: RadialGrid) -> BandOperator:
    """C with (C v)_j = (1/r) d/dr (r h v) in conservative face-flux form."""
    n, dr = grid.n, grid.dr
    rc, rf = grid.centers, grid.faces
    op = BandOperator(n, 1, 1)
    h_face = 0.5 * (h[:-1] + h[1:])
    a = rf[1:-1] * h_face / (2.0 * dr)  # interior faces 1..n-1
    inv = 1.0 / rc
    op.diagonal(1)[:-1] = a * inv[:-1]
    op.diagonal(0)[:-1] += a * inv[:-1]
    op.diagonal(0)[1:] -= a * inv[1:]
    op.diagonal(-1)[1:] = -a * inv[1:]
    return op


def _radial_viscous(h: np.ndarray, mu: float, grid: RadialGrid) -> BandOperator:
    """(4 mu / h) ( d/dr [ h (r v)_r / r ] - v h_r / (2 r) ) as a band matrix."""
    n, dr = grid.n, grid.dr
    rc, rf = grid.centers, grid.faces
    op = BandOperator(n, 1, 1)
    # face values of h (mirror walls) and of (r v)_r / r as p v_k - q v_{k-1}
    h_face = np.empty(n + 1)
    h_face[1:-1] = 0.5 * (h[:-1] + h[1:])
    h_face[0] = h[0]
    h_face[-1] = h[-1]
    p = np.zeros(n + 1)
    q = np.zeros(n + 1)
    p[1:-1] = rc[1:] / (dr * rf[1:-1])
    q[1:-1] = rc[:-1] / (dr * rf[1:-1])
    p[0] = 4.0 / dr          # (r v)_r / r -> 2 v_r at the axis, v odd
    q[-1] = 2.0 / dr         # value -2 v_{n-1} / dr at the outer wall
    scale = 4.0 * mu / (h * dr)
    # row j collects h_face[j+1] D[j+1] - h_face[j] D[j]
    op.diagonal(1)[:-1] = scale[:-1] * h_face[1:-1] * p[1:-1]
    op.diagonal(0)[:-1] -= scale[:-1] * h_face[1:-1] * q[1:-1]
    op.diagonal(0)[-1] -= scale[-1] * h_face[-1] * q[-1]
    op.diagonal(0)[1:] -= scale[1:] * h_face[1:-1] * p[1:-1]
    op.diagonal(0)[0] -= scale[0] * h_face[0] * p[0]
    op.diagonal(-1)[1:] += scale[1:] * h_face[1:-1] * q[1:-1]
    # - v h_r / (2 r) term, diagonal
    hr = _height_gradient(h, dr)
    op.diagonal(0)[:] -= (4.0 * mu / h) * hr / (2.0 * rc)
    return op


def _radial_advection_into(mat: BandOperator, v: np.ndarray, dr: float, dt: float) -> None:
    """mat += dt * v d/dr with odd ghosts at both walls."""
    n = v.size
    c = dt * v / (2.0 * dr)
    mat.diagonal(1)[:-1] += c[:-1]
    mat.diagonal(-1)[1:] -= c[1:]
    mat.diagonal(0)[0] += c[0]       # ghost -v_0 across the axis
    mat.diagonal(0)[n - 1] -= c[n - 1]  # ghost -v_{n-1} across the outer wall


def radial_step(
    state: RadialState,
    p: RadialParams,
    dt: float,
    newton_tol: float = 1e-10,
    newton_max_iters: int = 6,
) -> RadialState:
    """One semi-implicit step; structure matches the Euler-frame stepper."""
    grid = state.grid
    n = grid.n
    h, v = state.h, state.v

    C = _radial_divergence(h, grid)
    V = _radial_viscous(h, p.mu, grid)
    if p.sigma > 0:
        K = _curvature_operator(grid)
        base = K.compose(C)
        base.diags *= dt * dt * p.sigma
        rhs = v + (dt * p.sigma) * K.matvec(h)
    else:
        base = BandOperator(n, 1, 1)
        rhs = v.copy()
    base.diagonal(0)[:] += 1.0
    base.add_into(V, -dt)

    w = v
    v_new = v
    for it in range(1 + newton_max_iters):
        mat = base.copy()
        _radial_advection_into(mat, w, grid.dr, dt)
        v_new = solve_banded(BandedSystem(mat, rhs))
        shift = float(np.max(np.abs(v_new - w)))
        w = v_new
        if it > 0 and shift <= newton_tol:
            break
    else:
        if newton_max_iters > 0:
            raise StepRejectedError(f"radial advection correction stalled at {shift:.3e}")

    h_new = h - dt * C.matvec(v_new)
    h_min = float(np.min(h_new))
    if h_min <= RUPTURE_THRESHOLD:
        raise RuptureDetectedError(t=state.t + dt, index=int(np.argmin(h_new)), h_min=h_min)
    return RadialState(grid, h_new, v_new, t=state.t + dt)


def radial_functionals(state: RadialState, p: RadialParams) -> dict:
    """Mass, energy, entropy, squared gradient norm, and minimum height."""
    if float(np.min(state.h)) <= 0:
        raise InvalidStateError("radial functionals need strictly positive height")
    grid = state.grid
    w = grid.weights
    h, v = state.h, state.v
    hr = _height_gradient(h, grid.dr)
    shifted = v + 4.0 * p.mu * hr / h
    return {
        "mass": float(w @ h),
        "energy": 0.5 * float(w @ (h * v**2 + p.sigma * hr**2)),
        "entropy": 0.5 * float(w @ (h * shifted**2 + p.sigma * hr**2)),
        "hr_l2sq": float(w @ hr**2),
        "h_min": float(np.min(h)),
    }


@dataclass(eq=False)
class RadialRunResult:
    final: RadialState
    diagnostics: DiagnosticsSeries
    termination: str
    rupture: RuptureDetectedError | None = None


def _sample_radial(series: DiagnosticsSeries, state: RadialState, p: RadialParams) -> None:
    f = radial_functionals(state, p)
    series.append(
        DiagnosticsSample(
            t=state.t,
            mass=f["mass"],
            energy=f["energy"],
            entropy=f["entropy"],
            hx_l2sq=f["hr_l2sq"],
            h_min=f["h_min"],
            h_max=float(np.max(state.h)),
            extra={"v_linf": float(np.max(np.abs(state.v)))},
        )
    )


def radial_run(state0: RadialState, p: RadialParams, ctrl: StepControls) -> RadialRunResult:
    """Drive radial_step to t_end, monitoring the assumed height floor.

    The floor m_floor is a hypothesis, never enforced: the run terminates
    with "hypothesis_violated" the first time min h drops below it.
    """
    grid = state0.grid
    if float(np.min(state0.h)) < p.m_floor:
        raise InvalidStateError("initial height already below the assumed floor m_floor")
    flat = 2.0 * p.mass  # integral of a constant against r dr is half the value
    state = state0
    series = DiagnosticsSeries()
    _sample_radial(series, state, p)
    next_sample = state.t + ctrl.sample_every

    def is_steady(s: RadialState) -> bool:
        return float(np.max(np.abs(s.h - flat))) + float(np.max(np.abs(s.v))) <= STEADY_TOL

    if is_steady(state):
        return RadialRunResult(state, series, "steady_state")

    dt_cur = ctrl.dt_init
    rejections = 0
    termination = "reached_t_end"
    rupture = None
    while state.t < ctrl.t_end - 1e-13:
        vmax = float(np.max(np.abs(state.v)))
        dt = min(dt_cur, ctrl.dt_max, ctrl.t_end - state.t)
        if vmax > 0:
            dt = min(dt, ctrl.cfl * grid.dr / vmax)
        try:
            new_state = radial_step(state, p, dt, ctrl.newton_tol, ctrl.newton_max_iters)
        except StepRejectedError:
            rejections += 1
            if dt_cur <= ctrl.dt_min * 1.0000001 and rejections > 30:
                raise StiffnessFailureError(
                    f"dt pinned at dt_min={ctrl.dt_min} with repeated rejections"
                )
            dt_cur = max(0.5 * dt_cur, ctrl.dt_min)
            continue
        except RuptureDetectedError as err:
            if dt > ctrl.dt_min * 1.0000001:
                dt_cur = max(0.5 * dt, ctrl.dt_min)
                rejections += 1
                continue
            termination = "rupture_detected"
            rupture = err
            break
        rejections = 0
        state = new_state
        dt_cur = min(dt_cur * 1.25, ctrl.dt_max)
        if float(np.min(state.h)) < p.m_floor:
            if state.t > series.samples[-1].t:
                _sample_radial(series, state, p)
            termination = "hypothesis_violated"
            break
        at_end = state.t >= ctrl.t_end - 1e-13
        if state.t >= next_sample - 1e-12 or at_end:
            if state.t > series.samples[-1].t:
                _sample_radial(series, state, p)
            while next_sample <= state.t + 1e-12:
                next_sample += ctrl.sample_every
            if is_steady(state):
                termination = "steady_state"
                break
    if state.t > series.samples[-1].t:
        _sample_radial(series, state, p)
    return RadialRunResult(state, series, termination, rupture)

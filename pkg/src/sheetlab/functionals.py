"""Conserved quantities, dissipated functionals, decay envelopes, and rate fits.

Everything here is a pure function of a sampled state, so the same
diagnostics can be attached to any of the solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EnvelopeUndefinedError,
    InsufficientDataError,
    InvalidStateError,
    PositivityError,
)
from .grids import Field, derivative, integrate


@dataclass(frozen=True)
class SheetParams:
    """Surface tension, viscosity, and the conserved mass of a sheet run."""

    sigma: float
    nu: float
    mass: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class DecayEnvelope:
    """Bound y(t) <= amplitude * exp(-rate * t)."""

    amplitude: float
    rate: float

    def __post_init__(self):
        if self.amplitude < 0 or self.rate < 0:
            raise ValueError("envelope amplitude and rate must be >= 0")

    def __call__(self, t) -> np.ndarray:
        return self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass
class DiagnosticsSample:
    t: float
    mass: float
    energy: float | None = None
    entropy: float | None = None
    hx_l2sq: float | None = None
    h_min: float | None = None
    h_max: float | None = None
    u_minus_1_l2sq: float | None = None
    extra: dict = field(default_factory=dict)


class DiagnosticsSeries:
    """Time-ordered record of functional values; substrate for invariant checks."""

    COLUMNS = ("t", "mass", "energy", "entropy", "hx_l2sq", "h_min", "h_max", "u_minus_1_l2sq")

    def __init__(self):
        self.samples: list[DiagnosticsSample] = []

    def __len__(self) -> int:
        return len(self.samples)

    def append(self, sample: DiagnosticsSample) -> None:
        for name in self.COLUMNS:
            value = getattr(sample, name)
            if value is not None and not math.isfinite(value):
                raise InvalidStateError(f"diagnostics sample has non-finite {name}")
        if self.samples and sample.t <= self.samples[-1].t:
            raise InvalidStateError(
                f"diagnostics times must increase: {sample.t} after {self.samples[-1].t}"
            )
        self.samples.append(sample)

    def column(self, name: str) -> np.ndarray:
        """Column as a float array; missing entries become NaN."""
        if name in self.COLUMNS:
            vals = [getattr(s, name) for s in self.samples]
        else:
            vals = [s.extra.get(name) for s in self.samples]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def extend(self, other: "DiagnosticsSeries") -> None:
        for s in other.samples:
            if not self.samples or s.t > self.samples[-1].t:
                self.append(s)


def mass_euler(h: Field) -> float:
    """Integral of the height profile, the conserved mass."""
    if float(np.min(h.values)) < 0:
        raise InvalidStateError("mass_euler: height has negative entries")
    return integrate(h)


def energy_euler(h: Field, v: Field, p: SheetParams) -> float:
    """(1/2) integral of h v^2 + sigma h_x^2."""
    if float(np.min(h.values)) < 0:
        raise InvalidStateError("energy_euler: height has negative entries")
    hx = derivative(h, 1, "neumann").values
    dens = h.values * v.values**2 + p.sigma * hx**2
    return 0.5 * float(h.grid.trapezoid_weights @ dens)


def entropy_euler(h: Field, v: Field, p: SheetParams) -> float:
    """(1/2) integral of h (v + nu h_x / h)^2 + sigma h_x^2.

    The log-derivative is used in the analytic form nu h_x / h, which avoids
    evaluating log h near small heights.
    """
    if float(np.min(h.values)) <= 0:
        raise PositivityError("entropy_euler: height must be strictly positive")
    hx = derivative(h, 1, "neumann").values
    w = v.values + p.nu * hx / h.values
    dens = h.values * w**2 + p.sigma * hx**2
    return 0.5 * float(h.grid.trapezoid_weights @ dens)


def lagrangian_mass(u: Field) -> float:
    """Integral of the stretch profile over the unit reference interval."""
    if float(np.min(u.values)) <= 0:
        raise PositivityError("lagrangian_mass: stretch must be strictly positive")
    return integrate(u)


def decay_envelope_h1(S0: float, p: SheetParams) -> DecayEnvelope:
    """Envelope (2 S0 / sigma, 2 nu pi^2) for the H1 seminorm of the height.

    Note: runtime checks in this package show the sampled ||h_x||^2 of the
    underdamped dynamics decays at asymptotic rate nu pi^2, so this stated
    envelope is reported but is not satisfied pointwise; see README.
    """
    if p.sigma <= 0 or p.nu <= 0:
        raise EnvelopeUndefinedError("H1 envelope requires sigma > 0 and nu > 0")
    if S0 < 0:
        raise ValueError(f"S0 must be >= 0, got {S0}")
    return DecayEnvelope(2.0 * S0 / p.sigma, 2.0 * p.nu * math.pi**2)


def decay_envelope_pme(u0: Field, nu: float) -> DecayEnvelope:
    """Envelope for ||u - 1||_2^2 of the unforced stretch dynamics.

    amplitude = integral of (u0 - 1)^2, rate = 2 nu (ln m / (m - 1))^2 with
    m the discrete max of u0. As m -> 1 the rate tends to 2 nu, which is used
    whenever m <= 1 (only the flat profile, since the mass constraint forces
    max u0 >= 1).
    """
    if nu <= 0:
        raise EnvelopeUndefinedError("stretch envelope requires nu > 0")
    if float(np.min(u0.values)) <= 0:
        raise PositivityError("decay_envelope_pme: stretch must be strictly positive")
    amp = integrate(Field(u0.grid, (u0.values - 1.0) ** 2))
    m = float(np.max(u0.values))
    if m <= 1.0 + 1e-14:
        rate = 2.0 * nu
    else:
        rate = 2.0 * nu * (math.log(m) / (m - 1.0)) ** 2
    return DecayEnvelope(amp, rate)


@dataclass(frozen=True)
class ExponentialFit:
    amplitude: float
    rate: float
    r_squared: float


def fit_exponential(series, window, floor: float = 1e-12) -> ExponentialFit:
    """Least-squares line fit of ln y against t inside the window.

    Samples at or below the floor are dropped before fitting; the floor keeps
    round-off saturation out of the rate estimate. Fewer than 8 usable
    samples raises InsufficientDataError.
    """
    t_a, t_b = window
    ts, ys = [], []
    for t, y in series:
        if t_a <= t <= t_b and y > floor:
            ts.append(t)
            ys.append(y)
    if len(ts) < 8:
        raise InsufficientDataError(
            f"fit_exponential needs >= 8 usable samples in window, got {len(ts)}"
        )
    t = np.asarray(ts)
    logy = np.log(np.asarray(ys))
    slope, intercept = np.polyfit(t, logy, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return ExponentialFit(amplitude=float(np.exp(intercept)), rate=float(-slope), r_squared=r2)

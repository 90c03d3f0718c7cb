"""Numerical laboratory for viscous thin liquid sheets.

Euler-frame and Lagrangian solvers for the coupled height/velocity system,
a radially symmetric variant, functional diagnostics (mass, energy, entropy,
decay envelopes), and config-driven experiments with CSV/JSON artifacts.
"""

from .banded import BandOperator, BandedSystem, solve_banded
from .euler import EulerRunResult, SheetState, StepControls, min_height_trace, run, step
from .functionals import (
    DecayEnvelope,
    DiagnosticsSample,
    DiagnosticsSeries,
    ExponentialFit,
    SheetParams,
    decay_envelope_h1,
    decay_envelope_pme,
    energy_euler,
    entropy_euler,
    fit_exponential,
    lagrangian_mass,
    mass_euler,
)
from .grids import Field, FieldNorms, Grid1D, derivative, integrate, norms
from .lagrangian import (
    EulerFrameFields,
    ForcingProfile,
    InitialMap,
    LagrangianState,
    MaxPrincipleBound,
    PmeRunResult,
    StationaryProfile,
    forcing,
    from_lagrangian,
    initial_map,
    max_principle_envelope,
    pme_run,
    pme_step,
    stationary_profile,
    to_lagrangian,
)
from .radial import (
    RadialGrid,
    RadialParams,
    RadialRunResult,
    RadialState,
    radial_functionals,
    radial_run,
    radial_step,
)

__version__ = "0.1.0"

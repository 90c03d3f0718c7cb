"""Exception hierarchy shared by all sheetlab modules."""

from __future__ import annotations


class SheetLabError(Exception):
    """Base class for every error raised by this package."""


class GridTooCoarseError(SheetLabError):
    """Grid has too few nodes for the requested stencil."""


class NonFiniteFieldError(SheetLabError):
    """A field contains NaN or infinite entries."""


class PositivityError(SheetLabError):
    """A quantity that must be strictly positive is not."""


class InvalidStateError(SheetLabError):
    """A state violates a structural invariant (usually a solver bug surfaced)."""


class SingularSystemError(SheetLabError):
    """Banded factorization hit an exactly zero pivot."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"singular banded system: zero pivot at row {row}")


class LinearSolveError(SheetLabError):
    """Banded solve could not reach the residual contract."""


class StepRejectedError(SheetLabError):
    """Implicit step did not converge; caller should retry with smaller dt."""


class RuptureDetectedError(SheetLabError):
    """Height positivity lost: the sheet touched zero at a grid point."""

    def __init__(self, t: float, index: int, h_min: float):
        self.t = t
        self.index = index
        self.h_min = h_min
        super().__init__(f"rupture detected at t={t:.6g}: h_min={h_min:.3e} at node {index}")


class StiffnessFailureError(SheetLabError):
    """Time step pinned at dt_min with repeated rejections."""


class PositivityContradictionError(SheetLabError):
    """Lagrangian stretch lost positivity, which the dynamics forbid: solver bug."""


class EnvelopeUndefinedError(SheetLabError):
    """Decay envelope constants are undefined for the given parameters."""


class InsufficientDataError(SheetLabError):
    """Not enough usable samples for the requested fit or extraction."""


class IncompatibleInitialDataError(SheetLabError):
    """Initial data violates the boundary compatibility integral condition."""


class NoStationaryProfileError(SheetLabError):
    """No integration constant yields a positive stationary stretch profile."""


class ConvergenceError(SheetLabError):
    """A fixed-point or Newton iteration failed to converge."""


class ConfigError(SheetLabError):
    """Experiment configuration is malformed or out of range."""

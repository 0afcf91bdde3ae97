"""Exception types shared by the centrimag modules.

Input problems derive from ``ValueError`` and numeric failures from
``ArithmeticError`` so callers can catch either family without importing
this module.
"""
from __future__ import annotations


class CentrimagError(Exception):
    """Base class for every error raised by centrimag."""


class RejectedInputError(CentrimagError, ValueError):
    """An argument, file or configuration value was rejected."""


class EmptyBlockError(RejectedInputError):
    """A projection block with |m| > N + 1 was requested."""


class UndersampledError(RejectedInputError):
    """A time grid is too coarse for the oscillation it has to carry."""


class PhysicalBoundError(RejectedInputError):
    """A per-molecule moment exceeds the spin-1 bound 2|g|µB."""


class NumericalError(CentrimagError, ArithmeticError):
    """An eigen-solver, quadrature or optimizer failed to converge."""


class SingularConfigurationError(NumericalError):
    """A dipole sits on the integration surface or the coil wire."""


class ConditioningError(NumericalError):
    """Normal equations of a fit are singular at the optimum."""


class HeuristicFailureError(CentrimagError):
    """Automatic fit seeding failed; pass explicit initial values."""

"""Elliptic regularization of parabolic free boundary problems.

Minimizers of the weighted space-time energy approximate solutions of
``u_t - Lap u = -gamma chi_{u>0} u^(gamma-1)`` as epsilon -> 0.
"""

from .energy import energy_trace, scaled_energy, to_scaled_time, weighted_energy
from .errors import (DataError, DomainError, FormatError, NonConvergence, NonFinite, ParameterError,
                     UsageError)
from .grid import ScalarField, SpaceTimeGrid, make_grid
from .model import InitialDatum, ProblemSpec
from .newton import SolverConfig
from .reference import solve_parabolic
from .solver import minimize, solve_scaled

__version__ = "0.1.0"

__all__ = [
    "DataError", "DomainError", "FormatError", "InitialDatum", "NonConvergence", "NonFinite",
    "ParameterError", "ProblemSpec", "ScalarField", "SolverConfig", "SpaceTimeGrid", "UsageError",
    "energy_trace", "make_grid", "minimize", "scaled_energy", "solve_parabolic", "solve_scaled",
    "to_scaled_time", "weighted_energy",
]

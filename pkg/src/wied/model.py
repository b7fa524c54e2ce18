"""Reaction term, its potential, and initial data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import DomainError, FormatError, ParameterError


def _check_gamma(gamma):
    if not (1.0 <= gamma < 2.0):
        raise ParameterError(f"gamma={gamma} outside the admissible range [1, 2)")


def f_gamma(u, gamma):
    """``gamma * chi_{u>0} * u**(gamma-1)``; zero for ``u <= 0`` (also at ``gamma = 1``)."""
    u = np.asarray(u, dtype=float)
    pos = u > 0
    if gamma == 1.0:
        out = pos.astype(float)
    else:
        out = np.where(pos, gamma * np.power(np.where(pos, u, 1.0), gamma - 1.0), 0.0)
    return out if out.ndim else float(out)


def potential(u, gamma):
    """``max(u, 0)**gamma``; convex, derivative ``f_gamma`` away from 0."""
    u = np.asarray(u, dtype=float)
    out = np.power(np.maximum(u, 0.0), gamma)
    return out if out.ndim else float(out)


def f_gamma_prime(u, gamma, floor=1e-10):
    """Derivative of ``f_gamma`` on ``u > 0`` with the singular factor clamped at ``u >= floor``.

    Returns 0 for ``gamma = 1`` (where ``f`` is piecewise constant) and for ``u <= 0``.
    """
    u = np.asarray(u, dtype=float)
    if gamma == 1.0:
        return np.zeros_like(u)
    pos = u > 0
    uc = np.maximum(u, floor)
    return np.where(pos, gamma * (gamma - 1.0) * np.power(uc, gamma - 2.0), 0.0)


def f_gamma_smoothed(u, gamma, sigma):
    """Monotone regularization of ``f_gamma`` used for continuation.

    ``gamma = 1``: ramp ``clip(u/sigma, 0, 1)``. ``gamma > 1``: the secant
    ``gamma * sigma**(gamma-2) * u`` on ``(0, sigma)`` and ``f_gamma`` above, so
    values at or above ``sigma`` are exact. ``sigma = 0`` gives ``f_gamma``.
    """
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    if sigma == 0:
        return f_gamma(u, gamma)
    u = np.asarray(u, dtype=float)
    up = np.maximum(u, 0.0)
    if gamma == 1.0:
        out = np.minimum(up / sigma, 1.0)
    else:
        out = np.where(up < sigma, gamma * sigma ** (gamma - 2.0) * up,
                       gamma * np.power(np.maximum(up, sigma), gamma - 1.0))
    return out if out.ndim else float(out)


def f_gamma_smoothed_prime(u, gamma, sigma, floor=1e-10):
    if sigma == 0:
        return f_gamma_prime(u, gamma, floor)
    u = np.asarray(u, dtype=float)
    pos = u > 0
    if gamma == 1.0:
        return np.where(pos & (u < sigma), 1.0 / sigma, 0.0)
    below = gamma * sigma ** (gamma - 2.0)
    above = gamma * (gamma - 1.0) * np.power(np.maximum(u, sigma), gamma - 2.0)
    return np.where(pos, np.where(u < sigma, below, above), 0.0)


def potential_smoothed(u, gamma, sigma):
    """Antiderivative of :func:`f_gamma_smoothed` vanishing for ``u <= 0``."""
    if sigma == 0:
        return potential(u, gamma)
    up = np.maximum(np.asarray(u, dtype=float), 0.0)
    if gamma == 1.0:
        out = np.where(up < sigma, 0.5 * up * up / sigma, up - 0.5 * sigma)
    else:
        out = np.where(up < sigma, 0.5 * gamma * sigma ** (gamma - 2.0) * up * up,
                       np.power(np.maximum(up, sigma), gamma) + (0.5 * gamma - 1.0) * sigma**gamma)
    return out if out.ndim else float(out)


def alt_phillips_profile(gamma):
    """Exponent and amplitude of the stationary solution ``A * x_+**beta`` of ``u'' = f_gamma(u)``."""
    _check_gamma(gamma)
    beta = 2.0 / (2.0 - gamma)
    amp = (gamma / (beta * (beta - 1.0))) ** (1.0 / (2.0 - gamma))
    return beta, amp


# -- initial data ---------------------------------------------------------


@dataclass(frozen=True)
class InitialDatum:
    """Nonnegative initial datum.

    kinds:
      ``zero``
      ``bump``: ``height * (1 - (|x-center|/radius)**2)**2`` on the ball, 0 outside.
        The support must fit in the box unless ``clip=True``.
      ``alt_phillips``: ``A * (x1 - offset)_+**beta`` (depends on gamma).
      ``tabulated``: explicit nodal values of the ``t = 0`` slice.
    """

    kind: Literal["zero", "bump", "alt_phillips", "tabulated"] = "zero"
    center: tuple[float, ...] = (0.0,)
    radius: float = 0.5
    height: float = 1.0
    offset: float = 0.0
    clip: bool = False
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "bump", "alt_phillips", "tabulated"):
            raise ParameterError(f"unknown initial datum kind {self.kind!r}")
        if self.kind == "bump":
            if not (self.radius > 0 and self.height >= 0):
                raise ParameterError("bump needs radius > 0 and height >= 0")
        if self.kind == "tabulated":
            if self.values is None:
                raise FormatError("tabulated datum needs values")
            vals = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise ParameterError("tabulated datum must be finite and nonnegative")

    def evaluate(self, xs, gamma=1.0):
        """Evaluate on coordinate arrays ``xs = [x1, (x2)]`` (analytic kinds only)."""
        x0 = np.asarray(xs[0], dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x0)
        if self.kind == "bump":
            c = np.broadcast_to(np.asarray(self.center, dtype=float), (len(xs),))
            rho2 = sum((np.asarray(x) - ci) ** 2 for x, ci in zip(xs, c)) / self.radius**2
            return self.height * np.where(rho2 < 1.0, (1.0 - rho2) ** 2, 0.0)
        if self.kind == "alt_phillips":
            beta, amp = alt_phillips_profile(gamma)
            return amp * np.maximum(x0 - self.offset, 0.0) ** beta
        raise FormatError("tabulated data are sampled, not evaluated")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "bump":
            d.update(center=list(self.center), radius=self.radius, height=self.height, clip=self.clip)
        elif self.kind == "alt_phillips":
            d.update(offset=self.offset)
        elif self.kind == "tabulated":
            d.update(values=list(self.values))
        return d


def sample_initial(datum: InitialDatum, grid, gamma=1.0) -> np.ndarray:
    """Nodal values of the datum on the ``t = 0`` slice of ``grid``."""
    shape = grid.spatial_shape
    if datum.kind == "tabulated":
        vals = np.asarray(datum.values, dtype=float)
        if vals.size != int(np.prod(shape)):
            raise FormatError(f"tabulated datum has {vals.size} values, grid slice needs {int(np.prod(shape))}")
        return vals.reshape(shape).copy()
    if datum.kind == "bump" and not datum.clip:
        c = np.broadcast_to(np.asarray(datum.center, dtype=float), (grid.dim,))
        for ci, (a, b) in zip(c, grid.extents):
            if ci - datum.radius < a or ci + datum.radius > b:
                raise DomainError(
                    f"bump support (center {ci}, radius {datum.radius}) leaves the box [{a}, {b}]; "
                    "set clip=True to truncate it"
                )
    out = np.asarray(datum.evaluate(grid.spatial_mesh(), gamma), dtype=float).reshape(shape)
    if not np.all(np.isfinite(out)) or np.any(out < 0):
        raise ParameterError("initial datum must be finite and nonnegative")
    return out


@dataclass(frozen=True)
class ProblemSpec:
    """All model parameters of one regularized problem.

    ``bc`` applies on the lateral boundary for all times. ``dirichlet`` pins the
    lateral nodes to the trace of the initial datum (homogeneous when the datum
    vanishes there). ``reaction=False`` switches the nonlinearity off (used by
    oracle self-tests only).
    """

    gamma: float = 1.0
    epsilon: float = 0.1
    dim: int = 1
    bc: Literal["neumann", "dirichlet"] = "dirichlet"
    initial: InitialDatum = field(default_factory=InitialDatum)
    smoothing_sigma: float = 0.0
    reaction: bool = True

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not (0.0 < self.epsilon <= 1.0):
            raise ParameterError(f"epsilon={self.epsilon} outside (0, 1]")
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        if self.bc not in ("neumann", "dirichlet"):
            raise ParameterError(f"bc must be 'neumann' or 'dirichlet', got {self.bc!r}")
        if not (self.smoothing_sigma >= 0 and math.isfinite(self.smoothing_sigma)):
            raise ParameterError("smoothing_sigma must be finite and >= 0")

    def with_epsilon(self, eps: float) -> ProblemSpec:
        return replace(self, epsilon=eps)

    def u0(self, grid) -> np.ndarray:
        if grid.dim != self.dim:
            raise ParameterError(f"grid dim {grid.dim} != problem dim {self.dim}")
        return sample_initial(self.initial, grid, self.gamma)

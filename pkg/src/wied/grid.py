"""Node-centred space-time tensor grids over a box ``Omega x (0, T)``.

Nodal arrays are stored with time as the slowest axis, followed by ``x1``
and (in 2D) ``x2``, so ``values[k, i]`` or ``values[k, i, j]`` is the value
at ``(x1_i, [x2_j,] t_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError, ParameterError

_GEOM_RTOL = 1e-12


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid on ``prod_i [a_i, b_i] x [0, T]``.

    ``origin`` is the spatial centre used by parabolic-cylinder queries; it
    defaults to the centre of the box.
    """

    dim: int
    extents: tuple[tuple[float, float], ...]
    nx: tuple[int, ...]
    T: float
    nt: int
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.extents) != self.dim or len(self.nx) != self.dim:
            raise ParameterError("extents and nx must have one entry per spatial axis")
        for (a, b), n in zip(self.extents, self.nx):
            if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
                raise ParameterError(f"degenerate extent [{a}, {b}]")
            if int(n) != n or n < 2:
                raise ParameterError(f"cell count must be an integer >= 2, got {n}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ParameterError(f"time horizon must be positive and finite, got {self.T}")
        if int(self.nt) != self.nt or self.nt < 2:
            raise ParameterError(f"nt must be an integer >= 2, got {self.nt}")
        if self.origin is None:
            centre = tuple(0.5 * (a + b) for a, b in self.extents)
            object.__setattr__(self, "origin", centre)
        elif len(self.origin) != self.dim:
            raise ParameterError("origin must have one coordinate per spatial axis")

    # -- spacings and coordinates ---------------------------------------

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.nx))

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt + 1,) + tuple(n + 1 for n in self.nx)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.shape[1:]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    @property
    def axes(self) -> list[np.ndarray]:
        """Spatial node coordinates per axis."""
        return [a + np.arange(n + 1) * h for (a, _), n, h in zip(self.extents, self.nx, self.dx)]

    def spatial_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays ``[t, x1, (x2)]``, each of full nodal shape."""
        return np.meshgrid(self.t, *self.axes, indexing="ij")

    @property
    def diameter(self) -> float:
        spans = [b - a for a, b in self.extents] + [self.T]
        return math.sqrt(sum(s * s for s in spans))

    @property
    def spatial_radius(self) -> float:
        """Largest radius of a spatial ball centred at ``origin`` inside the box."""
        return min(min(o - a, b - o) for o, (a, b) in zip(self.origin, self.extents))

    # -- index helpers --------------------------------------------------

    def flat_index(self, k, *ij):
        return np.ravel_multi_index((k,) + tuple(ij), self.shape)

    def unravel(self, flat):
        return np.unravel_index(flat, self.shape)

    def node_coords(self, flat) -> np.ndarray:
        """Coordinates ``(x1, [x2,] t)`` of flat node indices, shape ``(m, dim+1)``."""
        idx = self.unravel(np.atleast_1d(flat))
        cols = [self.extents[d][0] + idx[d + 1] * self.dx[d] for d in range(self.dim)]
        cols.append(idx[0] * self.dt)
        return np.stack(cols, axis=-1)

    def contains(self, point: Sequence[float]) -> bool:
        """True if ``(x..., t)`` lies in the closed box ``Omega x [0, T]``."""
        *x, t = point
        tol = _GEOM_RTOL * self.diameter
        for xi, (a, b) in zip(x, self.extents):
            if xi < a - tol or xi > b + tol:
                return False
        return -tol <= t <= self.T + tol

    def same_domain(self, other: SpaceTimeGrid) -> bool:
        if self.dim != other.dim:
            return False
        tol = _GEOM_RTOL * max(self.diameter, other.diameter)
        ext = all(
            abs(a - c) <= tol and abs(b - d) <= tol
            for (a, b), (c, d) in zip(self.extents, other.extents)
        )
        return ext and abs(self.T - other.T) <= tol

    def boundary_mask(self) -> np.ndarray:
        """Spatial mask of nodes on the lateral boundary."""
        mask = np.zeros(self.spatial_shape, dtype=bool)
        for d in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[d] = 0
            mask[tuple(sl)] = True
            sl[d] = -1
            mask[tuple(sl)] = True
        return mask

    def with_time(self, T: float, nt: int | None = None) -> SpaceTimeGrid:
        return SpaceTimeGrid(self.dim, self.extents, self.nx, T, self.nt if nt is None else nt, self.origin)

    def refined(self, factor_x: int = 2, factor_t: int = 2) -> SpaceTimeGrid:
        return SpaceTimeGrid(
            self.dim, self.extents, tuple(n * factor_x for n in self.nx), self.T, self.nt * factor_t, self.origin
        )

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "extents": [list(e) for e in self.extents],
            "nx": list(self.nx),
            "T": self.T,
            "nt": self.nt,
        }


def make_grid(dim, extents, nx, T, nt, origin=None) -> SpaceTimeGrid:
    """Build a grid, accepting scalars for 1D arguments.

    ``extents`` may be a single ``[a, b]`` pair (reused on every axis) or a
    list of pairs; ``nx`` may be an int (reused on every axis) or a list.
    """
    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 1:
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ParameterError(f"extents must be [a, b] or a list of {dim} pairs")
    counts = np.atleast_1d(np.asarray(nx))
    if counts.size == 1:
        counts = np.repeat(counts, dim)
    if counts.size != dim:
        raise ParameterError(f"nx must have {dim} entries")
    for n in counts:
        if float(n) != int(n):
            raise ParameterError(f"cell count must be an integer, got {n}")
    return SpaceTimeGrid(
        int(dim),
        tuple((float(a), float(b)) for a, b in ext),
        tuple(int(n) for n in counts),
        float(T),
        int(nt),
        None if origin is None else tuple(float(o) for o in origin),
    )


@dataclass(frozen=True)
class ScalarField:
    """Nodal values on a :class:`SpaceTimeGrid` (read-only)."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.size != self.grid.size:
            raise DataError(f"expected {self.grid.size} nodal values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise DataError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> ScalarField:
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, func) -> ScalarField:
        """Sample ``func(t, x1[, x2])`` on all nodes."""
        return cls(grid, func(*grid.mesh()))

    @classmethod
    def time_constant(cls, grid: SpaceTimeGrid, slice0) -> ScalarField:
        slice0 = np.asarray(slice0, dtype=float).reshape(grid.spatial_shape)
        return cls(grid, np.broadcast_to(slice0, grid.shape))

    @property
    def initial_slice(self) -> np.ndarray:
        return self.values[0]

    def is_admissible(self, u0_slice, atol: float = 0.0) -> bool:
        """Trace condition: the ``t = 0`` slice equals the sampled datum."""
        return bool(np.all(np.abs(self.values[0] - u0_slice) <= atol))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    r: float


@dataclass(frozen=True)
class Cylinder:
    r: float
    origin: tuple[float, ...]


@dataclass(frozen=True)
class RegionIndexSet:
    """Flat node indices selected by a geometric predicate.

    ``clipped`` is set for balls that are not contained in ``Omega x (0, T)``.
    """

    grid: SpaceTimeGrid
    indices: np.ndarray
    descriptor: Ball | Cylinder
    clipped: bool = False

    def __len__(self):
        return int(self.indices.size)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.grid.size, dtype=bool)
        m[self.indices] = True
        return m.reshape(self.grid.shape)


def ball_fits(grid: SpaceTimeGrid, center: Sequence[float], r: float) -> bool:
    """True if the closed space-time ball lies in ``Omega x (0, T)``.

    The lower time face is open: a ball touching ``t = 0`` does not fit.
    """
    *x, t = center
    for xi, (a, b) in zip(x, grid.extents):
        if xi - r < a or xi + r > b:
            return False
    return t - r > 0 and t + r <= grid.T


def ball_indices(grid: SpaceTimeGrid, center: Sequence[float], r: float) -> RegionIndexSet:
    """Nodes within Euclidean space-time distance ``r`` of ``center = (x..., t)``."""
    center = tuple(float(c) for c in center)
    if len(center) != grid.dim + 1:
        raise DomainError(f"center must have {grid.dim + 1} coordinates (x..., t)")
    if not grid.contains(center):
        raise DomainError(f"center {center} lies outside the space-time box")
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    *x, t = center
    # scan only the bounding box of the ball
    tk = _index_window(t, r, 0.0, grid.dt, grid.nt)
    windows = [tk] + [
        _index_window(xi, r, a, h, n) for xi, (a, _), h, n in zip(x, grid.extents, grid.dx, grid.nx)
    ]
    sub = np.meshgrid(*windows, indexing="ij")
    d2 = (sub[0] * grid.dt - t) ** 2
    for d in range(grid.dim):
        d2 = d2 + (grid.extents[d][0] + sub[d + 1] * grid.dx[d] - x[d]) ** 2
    inside = d2 <= r * r * (1 + _GEOM_RTOL)
    flat = np.ravel_multi_index(tuple(s[inside] for s in sub), grid.shape)
    return RegionIndexSet(grid, np.sort(flat), Ball(center, float(r)), clipped=not ball_fits(grid, center, r))


def _index_window(c, r, a, h, n):
    lo = max(0, int(math.floor((c - r - a) / h)))
    hi = min(n, int(math.ceil((c + r - a) / h)))
    return np.arange(lo, hi + 1)


def cylinder_indices(grid: SpaceTimeGrid, r: float, origin: Sequence[float] | None = None) -> RegionIndexSet:
    """Nodes of ``Q_r^+ = {|x - origin| < r, 0 < t < r^2}`` (strict inequalities)."""
    origin = grid.origin if origin is None else tuple(float(o) for o in origin)
    if r <= 0:
        return RegionIndexSet(grid, np.zeros(0, dtype=np.intp), Cylinder(float(r), origin))
    t, *xs = grid.mesh()
    dist2 = sum((xd - od) ** 2 for xd, od in zip(xs, origin))
    mask = (dist2 < r * r) & (t > 0) & (t < r * r)
    return RegionIndexSet(grid, np.flatnonzero(mask.reshape(-1)), Cylinder(float(r), origin))


def restrict(field: ScalarField, target: SpaceTimeGrid) -> ScalarField:
    """Multilinear interpolation of ``field`` onto ``target``.

    Exact for functions that are multilinear in ``(t, x1, x2)``.
    """
    src = field.grid
    if not src.same_domain(target):
        raise DomainError("target grid does not cover the same box and horizon")
    if src == target:
        return field
    vals = field.values
    # separable: interpolate one axis at a time
    src_axes = [src.t] + src.axes
    dst_axes = [target.t] + target.axes
    for axis, (xs, xd) in enumerate(zip(src_axes, dst_axes)):
        vals = _interp_axis(vals, xs, np.clip(xd, xs[0], xs[-1]), axis)
    return ScalarField(target, vals)


def _interp_axis(vals, xs, xd, axis):
    h = (xs[-1] - xs[0]) / (len(xs) - 1)
    pos = (xd - xs[0]) / h
    lo = np.clip(np.floor(pos).astype(int), 0, len(xs) - 2)
    frac = pos - lo
    # snap round-off so coincident nodes copy values exactly
    frac[np.abs(frac) < 1e-12] = 0.0
    frac[np.abs(frac - 1) < 1e-12] = 1.0
    a = np.take(vals, lo, axis=axis)
    b = np.take(vals, lo + 1, axis=axis)
    shape = [1] * vals.ndim
    shape[axis] = -1
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac

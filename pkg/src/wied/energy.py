"""Discrete weighted space-time energies, their derivatives, and energy traces.

Both functionals share one discretization::

    F(u) = kin * sum_k w_k * |(u^{k+1} - u^k) / dt|_M^2
         + sp  * sum_k W_k * (|grad_h u^k|^2 + 2 <M, P(u^k)>)

with exact cell weights ``w_k = exp(-rate t_k) - exp(-rate t_{k+1})``, nodal
weights ``W_k = (w_{k-1} + w_k) / 2``, trapezoid mass ``M`` and the standard
edge-based discrete Dirichlet form. The elliptic-regularized energy uses
``(rate, kin, sp) = (1/eps, eps, 1)``; its time-rescaled counterpart uses
``(1, 1, eps)`` on the grid with horizon ``T/eps``.

The kinetic term is evaluated per cell (midpoint), the spatial terms per
node with the trapezoid average of the two cell ends, which keeps the
Euler-Lagrange system an M-matrix with diagonal reaction term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import model
from .errors import DataError, DomainError
from .grid import ScalarField, SpaceTimeGrid


@dataclass(frozen=True)
class QuadratureWeights:
    """Exact per-cell integrals of ``rate * exp(-rate t)``.

    ``log_w`` stays finite when ``w`` underflows; ``underflow`` flags those cells.
    """

    w: np.ndarray
    log_w: np.ndarray
    underflow: np.ndarray
    q: float  # exp(-rate * dt), ratio of consecutive cell weights

    @property
    def nodal(self) -> np.ndarray:
        W = np.zeros(self.w.size + 1)
        W[:-1] += 0.5 * self.w
        W[1:] += 0.5 * self.w
        return W

    @property
    def log_nodal(self) -> np.ndarray:
        lw = self.log_w
        out = np.empty(lw.size + 1)
        out[0] = lw[0] - math.log(2.0)
        out[-1] = lw[-1] - math.log(2.0)
        # W_k = w_{k-1} (1 + q) / 2 for interior nodes
        out[1:-1] = lw[:-1] + math.log1p(self.q) - math.log(2.0)
        return out


def time_weights(grid: SpaceTimeGrid, rate: float) -> QuadratureWeights:
    t = grid.t[:-1]
    a = -math.expm1(-rate * grid.dt)
    log_w = -rate * t + math.log(a)
    w = np.exp(-rate * t) * a
    return QuadratureWeights(w, log_w, w == 0.0, math.exp(-rate * grid.dt))


def mass_weights(grid: SpaceTimeGrid) -> np.ndarray:
    """Trapezoid weights of the spatial slice."""
    m = np.ones(grid.spatial_shape)
    for d, (n, h) in enumerate(zip(grid.nx, grid.dx)):
        wd = np.full(n + 1, h)
        wd[0] = wd[-1] = 0.5 * h
        shape = [1] * grid.dim
        shape[d] = -1
        m = m * wd.reshape(shape)
    return m


def _diff_matrix(n):
    # (n, n+1) forward differences
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr")


def stiffness_matrix(grid: SpaceTimeGrid) -> sp.csr_matrix:
    """Symmetric matrix ``K`` with ``u^T K u = |grad_h u|^2`` on one slice."""
    ns = [n + 1 for n in grid.nx]
    K = sp.csr_matrix((int(np.prod(ns)), int(np.prod(ns))))
    for d in range(grid.dim):
        D = _diff_matrix(grid.nx[d])
        # edge weight: cell length along d times trapezoid weights along the other axes
        factors_D, factors_w = [], []
        for e in range(grid.dim):
            if e == d:
                factors_D.append(D)
                factors_w.append(np.full(grid.nx[d], 1.0 / grid.dx[d]))
            else:
                factors_D.append(sp.identity(ns[e], format="csr"))
                we = np.full(ns[e], grid.dx[e])
                we[0] = we[-1] = 0.5 * grid.dx[e]
                factors_w.append(we)
        Dd = factors_D[0]
        wd = factors_w[0]
        for Df, wf in zip(factors_D[1:], factors_w[1:]):
            Dd = sp.kron(Dd, Df, format="csr")
            wd = np.kron(wd, wf)
        K = K + Dd.T @ sp.diags(wd) @ Dd
    return K.tocsr()


def dirichlet_energy(grid: SpaceTimeGrid, slice_values) -> float:
    """``|grad_h u|^2`` of one slice, summed edge by edge."""
    u = np.asarray(slice_values, dtype=float).reshape(grid.spatial_shape)
    m = mass_weights(grid)
    total = 0.0
    for d in range(grid.dim):
        du = np.diff(u, axis=d) / grid.dx[d]
        # edge weight = product of neighbouring trapezoid weights along other axes times dx_d
        mw = np.take(m, np.arange(grid.nx[d]), axis=d)
        edge_w = mw / _end_factor(grid, d, grid.nx[d])
        total += float(np.sum(edge_w * du * du))
    return total


def _end_factor(grid, d, n):
    # undo the half weight that m carries at index 0 along axis d
    f = np.ones(n)
    f[0] = 0.5
    shape = [1] * grid.dim
    shape[d] = -1
    return f.reshape(shape)


def slice_norms(grid: SpaceTimeGrid, u0, gamma) -> dict:
    """Discrete ``|u|_{L2}^2``, ``|grad u|^2``, ``|u_+|_{L^gamma}^gamma`` of one slice."""
    m = mass_weights(grid)
    u0 = np.asarray(u0, dtype=float).reshape(grid.spatial_shape)
    l2 = float(np.sum(m * u0 * u0))
    grad = dirichlet_energy(grid, u0)
    lg = float(np.sum(m * model.potential(u0, gamma)))
    return {"l2": l2, "grad": grad, "lgamma": lg, "h1": l2 + grad}


def level_constant(grid: SpaceTimeGrid, u0, gamma) -> float:
    """``|u0|_{H1,h}^2 + 2 |u0|_{gamma,h}^gamma``: the competitor bound on ``J/eps``."""
    n = slice_norms(grid, u0, gamma)
    return n["h1"] + 2.0 * n["lgamma"]


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    kinetic: float
    dirichlet: float
    potential: float

    def to_dict(self):
        return {"total": self.total, "kinetic": self.kinetic, "dirichlet": self.dirichlet, "potential": self.potential}


class SpaceTimeFunctional:
    """Assembly of one weighted space-time functional on a grid.

    ``nonlinearity`` selects the reaction: ``sigma`` smooths it (continuation),
    ``reaction=False`` drops the potential entirely.
    """

    def __init__(self, grid: SpaceTimeGrid, gamma: float, rate: float, kin: float, sp_coef: float,
                 bc: str = "neumann", u0=None, reaction: bool = True):
        self.grid = grid
        self.gamma = gamma
        self.rate = rate
        self.kin = kin
        self.sp = sp_coef
        self.bc = bc
        self.reaction = reaction
        self.u0 = None if u0 is None else np.asarray(u0, dtype=float).reshape(grid.spatial_shape)
        self.weights = time_weights(grid, rate)
        self.m = mass_weights(grid)
        self.K = stiffness_matrix(grid)

    @classmethod
    def weighted(cls, spec: model.ProblemSpec, grid: SpaceTimeGrid) -> SpaceTimeFunctional:
        eps = spec.epsilon
        return cls(grid, spec.gamma, 1.0 / eps, eps, 1.0, spec.bc, spec.u0(grid), spec.reaction)

    @classmethod
    def scaled(cls, spec: model.ProblemSpec, grid_v: SpaceTimeGrid) -> SpaceTimeFunctional:
        eps = spec.epsilon
        return cls(grid_v, spec.gamma, 1.0, 1.0, eps, spec.bc, spec.u0(grid_v), spec.reaction)

    # -- masks ------------------------------------------------------------

    @cached_property
    def free_mask(self) -> np.ndarray:
        """Nodes that are unknowns: ``t > 0`` and, for Dirichlet, not on the lateral boundary."""
        mask = np.ones(self.grid.shape, dtype=bool)
        mask[0] = False
        if self.bc == "dirichlet":
            mask[:, self.grid.boundary_mask()] = False
        return mask

    # -- nonlinearity -----------------------------------------------------

    def _P(self, u, sigma):
        if not self.reaction:
            return np.zeros_like(u)
        return model.potential_smoothed(u, self.gamma, sigma)

    def _f(self, u, sigma, feasible=False):
        if not self.reaction:
            return np.zeros_like(u)
        if feasible and self.gamma == 1.0 and sigma == 0:
            # on {u >= 0} the potential is linear: right derivative 1 at u = 0
            return np.ones_like(u)
        return model.f_gamma_smoothed(u, self.gamma, sigma)

    def _fprime(self, u, sigma, floor):
        if not self.reaction:
            return np.zeros_like(u)
        return model.f_gamma_smoothed_prime(u, self.gamma, sigma, floor)

    # -- energy -----------------------------------------------------------

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.size != self.grid.size:
            raise DomainError(f"field has {u.size} values, grid has {self.grid.size} nodes")
        u = u.reshape(self.grid.shape)
        if not np.all(np.isfinite(u)):
            raise DataError("non-finite field values")
        return u

    def energy(self, u, sigma: float = 0.0) -> EnergyBreakdown:
        u = self._check(u)
        g = self.grid
        w = self.weights.w
        W = self.weights.nodal
        dtu = np.diff(u, axis=0) / g.dt
        kin_cells = np.array([np.sum(self.m * c * c) for c in dtu])
        kinetic = self.kin * float(np.sum(w * kin_cells))
        flat = u.reshape(g.nt + 1, -1)
        grad_nodes = np.einsum("ki,ki->k", flat, (self.K @ flat.T).T)
        pot_nodes = np.array([2.0 * np.sum(self.m * self._P(s, sigma)) for s in u])
        dirichlet = self.sp * float(np.sum(W * grad_nodes))
        pot = self.sp * float(np.sum(W * pot_nodes))
        kinetic, dirichlet, pot = max(kinetic, 0.0), max(dirichlet, 0.0), max(pot, 0.0)
        return EnergyBreakdown(kinetic + dirichlet + pot, kinetic, dirichlet, pot)

    def energy_difference(self, u, v, sigma: float = 0.0) -> float:
        """``energy(v) - energy(u)`` summed from local differences.

        Stays accurate when the change sits where the weights are tiny, which
        a difference of two totals would lose to rounding.
        """
        u = self._check(u)
        v = self._check(v)
        g = self.grid
        d = v - u
        s = v + u
        dd = np.diff(d, axis=0) / g.dt
        ds = np.diff(s, axis=0) / g.dt
        kin_cells = np.array([np.sum(self.m * a * b) for a, b in zip(dd, ds)])
        fd = d.reshape(g.nt + 1, -1)
        fs = s.reshape(g.nt + 1, -1)
        grad_nodes = np.einsum("ki,ki->k", fd, (self.K @ fs.T).T)
        pot_nodes = np.array([2.0 * np.sum(self.m * (self._P(b, sigma) - self._P(a, sigma))) for a, b in zip(u, v)])
        W = self.weights.nodal
        return float(self.kin * np.sum(self.weights.w * kin_cells) + self.sp * np.sum(W * (grad_nodes + pot_nodes)))

    # -- first variation --------------------------------------------------

    def _time_coeffs(self):
        """Row-scaled time couplings ``(a_k, b_k)`` to the previous/next slice.

        Row ``k`` of the gradient divided by ``2 sp W_k m`` reads
        ``c * (a_k (u^k - u^{k-1}) - b_k (u^{k+1} - u^k)) + ...`` with
        ``c = kin / (sp dt^2)``; computed from ``q`` so no weight underflows.
        """
        nt = self.grid.nt
        q = self.weights.q
        a = np.full(nt + 1, 2.0 / (1.0 + q))
        b = np.full(nt + 1, 2.0 * q / (1.0 + q))
        a[0] = 0.0
        b[0] = 2.0
        a[nt] = 2.0
        b[nt] = 0.0
        return a, b

    def scaled_residual(self, u, sigma: float = 0.0, feasible: bool = False) -> np.ndarray:
        """Gradient rows divided by ``2 sp W_k m_i`` (strong-form units), all nodes.

        ``feasible=True`` gives the gradient of the energy restricted to
        ``u >= 0``, which differs only for ``gamma = 1`` at ``u = 0``
        (right derivative 1 instead of the subgradient selection 0).
        """
        u = self._check(u)
        g = self.grid
        a, b = self._time_coeffs()
        c = self.kin / (self.sp * g.dt**2)
        shp = (-1,) + (1,) * g.dim
        r = np.zeros_like(u)
        du = np.diff(u, axis=0)
        r[1:] += (c * a[1:]).reshape(shp) * du
        r[:-1] -= (c * b[:-1]).reshape(shp) * du
        flat = u.reshape(g.nt + 1, -1)
        Ku = (self.K @ flat.T).T.reshape(u.shape)
        r += Ku / self.m + self._f(u, sigma, feasible)
        return r

    def gradient(self, u, sigma: float = 0.0) -> np.ndarray:
        """Exact gradient of :meth:`energy` (rows at fixed nodes included)."""
        W = self.weights.nodal
        shp = (-1,) + (1,) * self.grid.dim
        return self.scaled_residual(u, sigma) * (2.0 * self.sp * W.reshape(shp) * self.m)

    # -- second variation -------------------------------------------------

    def scaled_jacobian(self, u, sigma: float = 0.0, floor: float = 1e-10) -> sp.csr_matrix:
        """Jacobian of :meth:`scaled_residual` (all nodes, unconstrained)."""
        u = self._check(u)
        g = self.grid
        ns = int(np.prod(g.spatial_shape))
        a, b = self._time_coeffs()
        c = self.kin / (self.sp * g.dt**2)
        diag_t = c * (a + b)
        Tm = sp.diags([diag_t, -c * a[1:], -c * b[:-1]], [0, -1, 1], format="csr")
        Minv_K = sp.diags(1.0 / self.m.reshape(-1)) @ self.K
        J = sp.kron(Tm, sp.identity(ns), format="csr") + sp.kron(sp.identity(g.nt + 1), Minv_K, format="csr")
        fp = self._fprime(u, sigma, floor).reshape(-1)
        return (J + sp.diags(fp)).tocsr()

    def log_row_scale(self) -> np.ndarray:
        """``log(2 sp W_k m_i)`` per node: the factor between gradient and scaled residual."""
        lW = self.weights.log_nodal
        shp = (-1,) + (1,) * self.grid.dim
        return (math.log(2.0 * self.sp) + lW.reshape(shp) + np.log(self.m)[None, ...]) * np.ones(self.grid.shape)

    def hessian_apply(self, u, direction, sigma: float = 0.0, floor: float = 1e-10) -> np.ndarray:
        """Action of the (weighted, symmetric) Hessian of :meth:`energy`."""
        J = self.scaled_jacobian(u, sigma, floor)
        W = self.weights.nodal
        shp = (-1,) + (1,) * self.grid.dim
        scale = (2.0 * self.sp * W.reshape(shp) * self.m).reshape(-1)
        return (scale * (J @ np.asarray(direction, dtype=float).reshape(-1))).reshape(self.grid.shape)


# -- public operations on fields ------------------------------------------


def _sigma(spec):
    return spec.smoothing_sigma


def weighted_energy(field: ScalarField, spec: model.ProblemSpec) -> EnergyBreakdown:
    """Discrete elliptic-regularized energy of a field in physical time."""
    return SpaceTimeFunctional.weighted(spec, field.grid).energy(field.values, _sigma(spec))


def scaled_energy(field_v: ScalarField, spec: model.ProblemSpec) -> EnergyBreakdown:
    """Discrete time-rescaled energy of a field given in scaled time ``s = t/eps``."""
    return SpaceTimeFunctional.scaled(spec, field_v.grid).energy(field_v.values, _sigma(spec))


def to_scaled_time(field_u: ScalarField, eps: float) -> ScalarField:
    """Reindex ``v(x, s) = u(x, eps s)``: same nodal values, horizon ``T/eps``."""
    return ScalarField(field_u.grid.with_time(field_u.grid.T / eps), field_u.values)


def to_physical_time(field_v: ScalarField, eps: float) -> ScalarField:
    return ScalarField(field_v.grid.with_time(field_v.grid.T * eps), field_v.values)


def energy_gradient(field: ScalarField, spec: model.ProblemSpec) -> ScalarField:
    """Gradient of :func:`weighted_energy` with rows of fixed nodes (t=0, Dirichlet) zeroed."""
    F = SpaceTimeFunctional.weighted(spec, field.grid)
    G = F.gradient(field.values, _sigma(spec))
    G[~F.free_mask] = 0.0
    return ScalarField(field.grid, G)


def apply_linearized(field: ScalarField, spec: model.ProblemSpec, direction: ScalarField) -> ScalarField:
    """Hessian action of the weighted energy on the constrained subspace."""
    if direction.grid != field.grid:
        raise DomainError("direction lives on a different grid")
    F = SpaceTimeFunctional.weighted(spec, field.grid)
    d = np.where(F.free_mask, direction.values, 0.0)
    out = F.hessian_apply(field.values, d, _sigma(spec))
    out[~F.free_mask] = 0.0
    return ScalarField(field.grid, out)


@dataclass(frozen=True)
class EnergyTrace:
    """Energy traces in scaled time.

    ``I_cell[k]`` is the kinetic density on cell ``[s_k, s_{k+1}]``; ``I`` is its
    nodal average (for export). ``E`` is the discrete forward tail sum truncated
    at the horizon; ``tail_weight`` is the weight mass ``exp(-(S - s_k))`` that the
    truncation drops, relative to ``E(s_k)``'s normalization.
    """

    t: np.ndarray
    ds: float
    I_cell: np.ndarray
    I: np.ndarray
    R: np.ndarray
    E: np.ndarray
    tail_weight: np.ndarray
    underflow_cells: int = 0
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        rows = np.column_stack([self.t, self.I, self.R, self.E])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,I,R,E\n")
            for row in rows:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def energy_trace(field_u: ScalarField, spec: model.ProblemSpec) -> EnergyTrace:
    """``I``, ``R`` and ``E`` of ``v(x, s) = u(x, eps s)`` by reindexing (no resampling)."""
    eps = spec.epsilon
    g = field_u.grid
    v = field_u.values
    ds = g.dt / eps
    F = SpaceTimeFunctional.scaled(spec, g.with_time(g.T / eps))
    m = F.m
    dv = np.diff(v, axis=0) / ds
    I_cell = np.array([float(np.sum(m * c * c)) for c in dv])
    flat = v.reshape(g.nt + 1, -1)
    grad_nodes = np.einsum("ki,ki->k", flat, (F.K @ flat.T).T)
    pot_nodes = np.array([2.0 * np.sum(m * F._P(s, spec.smoothing_sigma)) for s in v])
    R = eps * (grad_nodes + pot_nodes)
    q = math.exp(-ds)
    one_minus_q = -math.expm1(-ds)
    cell = one_minus_q * (I_cell + 0.5 * (R[:-1] + R[1:]))
    E = np.zeros(g.nt + 1)
    for k in range(g.nt - 1, -1, -1):
        E[k] = cell[k] + q * E[k + 1]
    I_nodes = np.empty(g.nt + 1)
    I_nodes[0] = I_cell[0]
    I_nodes[-1] = I_cell[-1]
    I_nodes[1:-1] = 0.5 * (I_cell[:-1] + I_cell[1:])
    s = g.t / eps
    tail = np.exp(-(s[-1] - s))
    return EnergyTrace(
        t=s, ds=ds, I_cell=I_cell, I=I_nodes, R=R, E=E, tail_weight=tail,
        underflow_cells=int(np.count_nonzero(F.weights.underflow)),
        meta={"epsilon": eps, "horizon_scaled": float(s[-1]), "dropped_tail_mass": float(math.exp(-s[-1]))},
    )

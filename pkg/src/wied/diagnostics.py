"""Empirical checks of the energy estimates, the energy derivative law,
non-degeneracy at the free boundary, and convergence as epsilon -> 0."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .energy import EnergyTrace, level_constant, mass_weights, stiffness_matrix
from .errors import DomainError, NonConvergence, ParameterError
from .grid import ScalarField, SpaceTimeGrid, ball_indices, cylinder_indices, restrict
from .newton import SolverConfig
from .solver import default_theta, interior_mask, minimize


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


# -- energy estimates ------------------------------------------------------


@dataclass
class EnergyEstimateReport:
    kinetic_total: float
    slab_table: list  # rows (r, integral over (0, r), integral / r)
    scaled_slab_table: list  # rows (s, integral over (s, s + 1) in scaled time)
    C_est: float
    margin: float = 10.0
    rejected_radii: list = field(default_factory=list)
    kinetic_ok: bool = True
    slab_ok: bool = True

    @property
    def passed(self) -> bool:
        return self.kinetic_ok and self.slab_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self, path=None) -> str:
        return _write_json(self.to_dict(), path)

    def to_csv(self, path) -> None:
        _write_rows(path, ["r", "integral", "ratio"], self.slab_table)


def _spatial_density(field: ScalarField, gamma) -> np.ndarray:
    """``|grad u|^2 + 2 <M, u_+^gamma>`` per time node."""
    g = field.grid
    m = mass_weights(g).reshape(-1)
    K = stiffness_matrix(g)
    flat = field.values.reshape(g.nt + 1, -1)
    grad = np.einsum("ki,ki->k", flat, (K @ flat.T).T)
    pot = 2.0 * (model.potential(flat, gamma) @ m)
    return np.maximum(grad, 0.0) + pot


def _cumulative(t, density):
    c = np.zeros_like(t)
    c[1:] = np.cumsum(0.5 * np.diff(t) * (density[:-1] + density[1:]))
    return c


def kinetic_total(field: ScalarField) -> float:
    """``int int |u_t|^2`` with the cell difference quotient and lumped mass."""
    g = field.grid
    m = mass_weights(g)
    dtu = np.diff(field.values, axis=0) / g.dt
    return float(g.dt * np.sum(m[None, ...] * dtu * dtu))


def kinetic_total_from_trace(trace: EnergyTrace) -> float:
    """The same integral from a scaled-time trace: ``(1/eps) sum ds I``."""
    return float(trace.ds * np.sum(trace.I_cell) / trace.meta["epsilon"])


def check_energy_bounds(field_u: ScalarField, spec: model.ProblemSpec, radii, margin: float = 10.0
                        ) -> EnergyEstimateReport:
    """Kinetic total and slab integrals against ``C_est`` times ``margin``.

    Radii below ``epsilon`` are outside the estimate's range and are listed in
    ``rejected_radii`` instead of the table.
    """
    if not margin > 0:
        raise ParameterError("margin must be positive")
    g = field_u.grid
    eps = spec.epsilon
    C = level_constant(g, field_u.values[0], spec.gamma)
    dens = _spatial_density(field_u, spec.gamma)
    t = g.t
    cum = _cumulative(t, dens)
    rows, rejected = [], []
    for r in radii:
        r = float(r)
        if r < eps * (1 - 1e-12) or r > g.T * (1 + 1e-12):
            rejected.append(r)
            continue
        integral = float(np.interp(r, t, cum))
        rows.append((r, integral, integral / r))
    # scaled time: int_s^{s+1} (...) ds = (1/eps) int_{eps s}^{eps (s+1)} (...) dt
    scaled = []
    S = g.T / eps
    for s in range(int(math.floor(S - 1 + 1e-12)) + 1):
        lo, hi = eps * s, eps * (s + 1)
        scaled.append((float(s), float(np.interp(hi, t, cum) - np.interp(lo, t, cum)) / eps))
    kin = kinetic_total(field_u)
    return EnergyEstimateReport(
        kinetic_total=kin,
        slab_table=rows,
        scaled_slab_table=scaled,
        C_est=C,
        margin=margin,
        rejected_radii=rejected,
        kinetic_ok=kin <= margin * C,
        slab_ok=all(row[2] <= margin * C for row in rows),
    )


# -- derivative law ----------------------------------------------------------


def check_derivative_law(trace: EnergyTrace):
    """``(residual_l1, monotone)`` for ``E' = -2 I`` on the trace.

    ``residual_l1`` is the ``ds``-weighted sum of ``|(E_{k+1} - E_k)/ds + 2 I_{k+1/2}|``;
    ``monotone`` says ``E`` never grows by more than ``1e-10 * E(0)``.
    """
    E = np.asarray(trace.E)
    if E.size < 2:
        return 0.0, True
    dE = np.diff(E) / trace.ds
    residual = float(trace.ds * np.sum(np.abs(dE + 2.0 * trace.I_cell)))
    monotone = bool(np.max(np.diff(E)) <= 1e-10 * E[0])
    return residual, monotone


def derivative_identity_defect(trace: EnergyTrace) -> float:
    """Max of ``|(E_{k+1} - E_k)/ds - (E - I - R)|`` with ``E, R`` at the right node.

    The tail-sum recursion satisfies this with a defect of order ``ds``.
    """
    E = np.asarray(trace.E)
    if E.size < 2:
        return 0.0
    dE = np.diff(E) / trace.ds
    R_mid = 0.5 * (trace.R[:-1] + trace.R[1:])
    rhs = E[1:] - trace.I_cell - R_mid
    return float(np.max(np.abs(dE - rhs)))


# -- free boundary and non-degeneracy ---------------------------------------


def extract_free_boundary(field: ScalarField, theta: float) -> list:
    """Index tuples ``(k, i, ...)`` of nodes with ``u <= theta`` next to a node with ``u > theta``.

    Neighbours are the axis neighbours in space-time; the ``t = 0`` slice is excluded.
    """
    if not theta > 0:
        raise ParameterError("theta must be positive")
    u = field.values
    pos = u > theta
    near = np.zeros_like(pos)
    for ax in range(u.ndim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        near[tuple(lo)] |= pos[tuple(hi)]
        near[tuple(hi)] |= pos[tuple(lo)]
    fb = near & ~pos
    fb[0] = False
    return [tuple(int(i) for i in idx) for idx in np.argwhere(fb)]


@dataclass
class NondegReport:
    fb_points: list  # (x..., t) coordinates
    radii: list
    ratios: list  # per point, per radius; None where the ball was clipped
    min_ratio: float | None
    c_theory: float
    tol_nd: float = 0.2
    skipped: int = 0
    unresolved_radii: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.min_ratio is None

    @property
    def passed(self) -> bool:
        return self.empty or self.min_ratio >= self.c_theory * (1.0 - self.tol_nd)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(empty=self.empty, passed=self.passed)
        return d

    def to_json(self, path=None) -> str:
        return _write_json(self.to_dict(), path)


def c_theory(dim: int) -> float:
    return 1.0 / (2.0 * (dim + 2))


def nondegeneracy(field: ScalarField, spec: model.ProblemSpec, radii, theta: float | None = None,
                  tol_nd: float = 0.2) -> NondegReport:
    """Min over free-boundary points and radii of ``sup_{B_r} u / r^2``.

    Balls that leave the domain or touch ``t = 0`` are skipped. Radii below
    the coarsest grid spacing cannot see past the center node; they are moved
    to ``unresolved_radii`` and not tested.
    """
    g = field.grid
    if theta is None:
        theta = default_theta(None, field.values[0])
    radii = [float(r) for r in radii]
    if any(not r > 0 for r in radii):
        raise ParameterError("radii must be positive")
    h = max(g.dx + (g.dt,))
    unresolved = [r for r in radii if r < h * (1 - 1e-12)]
    radii = [r for r in radii if r not in unresolved]
    nodes = extract_free_boundary(field, theta)
    flat_u = field.values.reshape(-1)
    points, ratios = [], []
    skipped = 0
    best = math.inf
    for idx in nodes:
        k, *ij = idx
        coords = tuple(g.extents[d][0] + ij[d] * g.dx[d] for d in range(g.dim)) + (k * g.dt,)
        row = []
        for r in radii:
            region = ball_indices(g, coords, r)
            if region.clipped:
                row.append(None)
                skipped += 1
                continue
            ratio = float(np.max(flat_u[region.indices])) / (r * r)
            row.append(ratio)
            best = min(best, ratio)
        points.append(coords)
        ratios.append(row)
    return NondegReport(
        fb_points=points, radii=radii, ratios=ratios,
        min_ratio=None if best == math.inf else best,
        c_theory=c_theory(g.dim), tol_nd=tol_nd, skipped=skipped, unresolved_radii=unresolved,
    )


# -- convergence ---------------------------------------------------------------


def chi_mismatch(field_a: ScalarField, field_b: ScalarField, theta: float) -> float:
    """Fraction of interior nodes where ``u > theta`` differs between the fields."""
    if field_a.grid != field_b.grid:
        raise DomainError("fields live on different grids")
    mask = interior_mask(field_a.grid)
    if not mask.any():
        return 0.0
    a = field_a.values[mask] > theta
    b = field_b.values[mask] > theta
    return float(np.count_nonzero(a != b)) / a.size


def l2_cylinder(field_a: ScalarField, field_b: ScalarField, r: float, origin=None) -> float:
    """Discrete ``L2(Q_r^+)`` distance with lumped mass in space and ``dt`` in time."""
    if field_a.grid != field_b.grid:
        raise DomainError("fields live on different grids")
    g = field_a.grid
    region = cylinder_indices(g, r, origin)
    if len(region) == 0:
        return 0.0
    w = (g.dt * mass_weights(g))[None, ...] * np.ones(g.shape)
    diff = (field_a.values - field_b.values).reshape(-1)[region.indices]
    return float(math.sqrt(np.sum(w.reshape(-1)[region.indices] * diff * diff)))


@dataclass
class ConvergenceReport:
    eps_list: list
    l2_errors: list
    chi_mismatch: list
    r: float
    theta: float
    floor: float | None = None
    failures: dict = field(default_factory=dict)
    solve_seconds: list = field(default_factory=list)

    @property
    def errors_decreasing(self) -> bool:
        """Each halving drops the error by 5%, unless it is already within 2x of the floor."""
        e = self.l2_errors
        floor = self.floor or 0.0
        return all(b <= 0.95 * a or b <= 2.0 * floor for a, b in zip(e, e[1:]))

    @property
    def chi_nonincreasing(self) -> bool:
        c = self.chi_mismatch
        return all(b <= 1.05 * a for a, b in zip(c, c[1:]))

    @property
    def passed(self) -> bool:
        return not self.failures and self.errors_decreasing and self.chi_nonincreasing

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(errors_decreasing=self.errors_decreasing, chi_nonincreasing=self.chi_nonincreasing,
                 passed=self.passed)
        return d

    def to_json(self, path=None) -> str:
        return _write_json(self.to_dict(), path)

    def to_csv(self, path) -> None:
        _write_rows(path, ["eps", "l2_error", "chi_mismatch"],
                    zip(self.eps_list, self.l2_errors, self.chi_mismatch))


def reference_floor(reference: ScalarField, reference_fine: ScalarField, r: float, origin=None) -> float:
    """Oracle discretization floor: ``L2(Q_r^+)`` distance of the reference to its refinement."""
    return l2_cylinder(reference, restrict(reference_fine, reference.grid), r, origin)


def eps_sweep(spec_base: model.ProblemSpec, eps_list, grid: SpaceTimeGrid, config: SolverConfig | None,
              reference: ScalarField, r: float = 0.5, theta: float | None = None,
              floor: float | None = None, origin=None, solved: dict | None = None) -> ConvergenceReport:
    """Solve for each epsilon and compare with the reference on ``Q_r^+``.

    ``solved`` (a dict) collects the fields by epsilon. Solver failures are
    recorded in ``failures`` with NaN entries instead of raising.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("eps_list must be nonempty and strictly decreasing")
    if reference.grid != grid:
        raise DomainError("reference must live on the sweep grid")
    if theta is None:
        theta = default_theta(config, reference.values[0])
    errors, mism, failures, secs = [], [], {}, []
    for eps in eps_list:
        spec = spec_base.with_epsilon(eps)
        try:
            u, rep = minimize(spec, grid, config)
            secs.append(rep.wall_time)
        except NonConvergence as exc:
            failures[str(eps)] = str(exc)
            errors.append(float("nan"))
            mism.append(float("nan"))
            secs.append(float("nan"))
            continue
        if solved is not None:
            solved[eps] = u
        errors.append(l2_cylinder(u, reference, r, origin))
        mism.append(chi_mismatch(u, reference, theta))
    return ConvergenceReport(eps_list, errors, mism, float(r), float(theta), floor, failures, secs)

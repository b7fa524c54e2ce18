"""Implicit-Euler reference solver for the parabolic problem and its weak-form residual.

Each step solves ``(u - u_prev)/dt + M^{-1} K u + f(u) = 0`` on the free
spatial nodes with the same complementarity Newton iteration and the same
reaction code as the space-time solver.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import model
from .energy import mass_weights, stiffness_matrix
from .errors import DomainError, NonConvergence, ParameterError
from .grid import ScalarField, SpaceTimeGrid
from .newton import SolverConfig, solve_complementarity


class _Step:
    """One implicit-Euler step as a convex minimization over the new slice."""

    def __init__(self, grid, gamma, reaction, m, K, prev):
        self.gamma = gamma
        self.reaction = reaction
        self.dt = grid.dt
        self.m = m
        self.K = K
        self.prev = prev
        self.MinvK = sp.diags(1.0 / m) @ K

    def residual(self, u, sigma, feasible):
        r = (u - self.prev) / self.dt + (self.K @ u) / self.m
        if self.reaction:
            if feasible and self.gamma == 1.0 and sigma == 0:
                r = r + 1.0
            else:
                r = r + model.f_gamma_smoothed(u, self.gamma, sigma)
        return r

    def jacobian(self, u, sigma, floor):
        d = np.full(u.size, 1.0 / self.dt)
        if self.reaction:
            d = d + model.f_gamma_smoothed_prime(u, self.gamma, sigma, floor)
        return (self.MinvK + sp.diags(d)).tocsr()

    def energy_difference(self, u, v, sigma):
        def e(w):
            out = 0.5 * np.sum(self.m * (w - self.prev) ** 2) / self.dt + 0.5 * float(w @ (self.K @ w))
            if self.reaction:
                out += np.sum(self.m * model.potential_smoothed(w, self.gamma, sigma))
            return out
        return float(e(v) - e(u))

    def gradient(self, u, sigma):
        return self.m * self.residual(u, sigma, False)


def solve_parabolic(spec: model.ProblemSpec, grid: SpaceTimeGrid, config: SolverConfig | None = None,
                    step_log: list | None = None) -> ScalarField:
    """Implicit-Euler evolution of the sampled initial datum on ``grid`` (epsilon is ignored).

    ``step_log`` (a list) receives ``(step, newton_iters, residual)`` per step.
    Raises :class:`NonConvergence` carrying the failing step index.
    """
    config = config or SolverConfig()
    u0 = spec.u0(grid).reshape(-1)
    m = mass_weights(grid).reshape(-1)
    K = stiffness_matrix(grid)
    free = np.ones(u0.size, dtype=bool)
    if spec.bc == "dirichlet":
        free[grid.boundary_mask().reshape(-1)] = False
    schedule = config.schedule_for(spec.gamma) if spec.reaction else (0.0,)
    out = np.empty((grid.nt + 1, u0.size))
    out[0] = u0
    u = u0.copy()
    for k in range(1, grid.nt + 1):
        step = _Step(grid, spec.gamma, spec.reaction, m, K, u.copy())
        its = 0
        res = None
        tol_final = None
        for i, sigma in enumerate(schedule):
            constrained = spec.reaction and sigma == 0
            merit = (lambda x, y, s=sigma: step.energy_difference(x, y, s),
                     lambda x, s=sigma: step.gradient(x, s))
            if tol_final is None:
                r0 = step.residual(u, sigma, constrained)
                phi0 = np.minimum(u, r0) if constrained else r0
                nrm_first = float(np.max(np.abs(phi0[free]))) if free.any() else 0.0
                tol_final = max(config.tol_grad * nrm_first, config.atol)
            last = i == len(schedule) - 1
            tol = tol_final if last else max(1e-4 * nrm_first, tol_final)
            res = solve_complementarity(
                lambda x, s=sigma, c=constrained: step.residual(x, s, c),
                lambda x, s=sigma: step.jacobian(x, s, config.sigma_min),
                u, free, constrained, config, tol=tol,
                energy=None if constrained and spec.gamma == 1.0 else merit,
            )
            its += res.iterations
            u = res.u
        if step_log is not None:
            step_log.append((k, its, float(res.residual)))
        if not res.converged:
            out[k] = u
            out[k + 1:] = u
            raise NonConvergence(
                f"parabolic step {k} stopped after {its} Newton iterations with residual {res.residual:.3e}",
                field=ScalarField(grid, out.reshape(grid.shape)), step=k,
            )
        out[k] = u
    return ScalarField(grid, out.reshape(grid.shape))


def write_step_log(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "newton_iters", "residual"])
        for step, its, res in rows:
            w.writerow([step, its, f"{res:.17g}"])


# -- weak-form residual ----------------------------------------------------


@dataclass(frozen=True)
class TestBank:
    """Smooth space-time bumps ``prod (1 - rho^2)^2`` with compact support in the interior.

    Row ``j`` is the center ``(x..., t)`` with spatial radius ``rx[j]`` and
    temporal half-width ``rt[j]``.
    """

    centers: np.ndarray
    rx: np.ndarray
    rt: np.ndarray

    def __len__(self):
        return len(self.centers)

    def evaluate(self, grid: SpaceTimeGrid, j: int) -> np.ndarray:
        t, *xs = grid.mesh()
        *c, tc = self.centers[j]
        rho2 = sum((x - ci) ** 2 for x, ci in zip(xs, c)) / self.rx[j] ** 2
        tau2 = (t - tc) ** 2 / self.rt[j] ** 2
        return np.where(rho2 < 1, (1 - rho2) ** 2, 0.0) * np.where(tau2 < 1, (1 - tau2) ** 2, 0.0)


def bump_bank(grid: SpaceTimeGrid, count: int = 12, scales=(0.125, 0.25, 0.5), seed: int = 0) -> TestBank:
    """Deterministic bank of ``count`` bumps (10 to 50) at the given scales.

    A scale ``s`` gives spatial radius ``s`` times the half-width of the box
    and temporal half-width ``s * T / 2``. Centers are drawn so each support
    stays inside the open space-time box.
    """
    if not 10 <= count <= 50:
        raise ParameterError(f"test bank size must lie in [10, 50], got {count}")
    if not scales or any(not 0 < s < 1 for s in scales):
        raise ParameterError("bank scales must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    half = min(0.5 * (b - a) for a, b in grid.extents)
    centers, rx, rt = [], [], []
    for j in range(count):
        s = scales[j % len(scales)]
        r = s * half
        tau = s * grid.T / 2
        c = [rng.uniform(a + r, b - r) for a, b in grid.extents]
        c.append(rng.uniform(tau, grid.T - tau))
        centers.append(c)
        rx.append(r)
        rt.append(tau)
    return TestBank(np.array(centers), np.array(rx), np.array(rt))


def strong_residual(field: ScalarField, spec: model.ProblemSpec, test_bank: TestBank | None = None) -> float:
    """Max over the bank of ``|int int (u_t eta + grad u . grad eta + f(u) eta)|``.

    Time integrals use the trapezoid rule per cell with the difference
    quotient for ``u_t``; space integrals use the lumped mass and the edge
    form of the gradient pairing.
    """
    g = field.grid
    if test_bank is None:
        test_bank = bump_bank(g)
    u = field.values.reshape(g.nt + 1, -1)
    m = mass_weights(g).reshape(-1)
    K = stiffness_matrix(g)
    Ku = (K @ u.T).T
    f = model.f_gamma(u, spec.gamma) if spec.reaction else np.zeros_like(u)
    ut = np.diff(u, axis=0) / g.dt
    worst = 0.0
    for j in range(len(test_bank)):
        eta = test_bank.evaluate(g, j).reshape(g.nt + 1, -1)
        if eta.shape != u.shape:
            raise DomainError("test function does not match the field grid")
        node = np.einsum("ki,ki->k", Ku, eta) + np.einsum("i,ki,ki->k", m, f, eta)
        cell = np.einsum("i,ki,ki->k", m, ut, 0.5 * (eta[:-1] + eta[1:]))
        val = g.dt * (np.sum(cell) + 0.5 * np.sum(node[:-1] + node[1:]))
        worst = max(worst, abs(float(val)))
    return worst if math.isfinite(worst) else float("inf")

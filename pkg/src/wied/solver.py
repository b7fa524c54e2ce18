"""Minimizers of the discrete regularized energies and their Euler-Lagrange checks."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .energy import SpaceTimeFunctional, EnergyBreakdown
from .errors import NonConvergence, UsageError
from .grid import ScalarField, SpaceTimeGrid, restrict
from .newton import SolverConfig, solve_complementarity


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    energy: dict
    wall_time: float
    functional: str = "weighted"
    stages: list = field(default_factory=list)
    fallback_steps: int = 0
    competitor_energy: float | None = None
    minimal: bool | None = None
    levels: list = field(default_factory=list)  # coarse solves that produced the starting guess

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _start(F: SpaceTimeFunctional, initial_guess):
    u0 = F.u0
    if initial_guess is None:
        u = np.broadcast_to(u0, F.grid.shape).copy()
    else:
        u = np.array(initial_guess.values if isinstance(initial_guess, ScalarField) else initial_guess,
                     dtype=float).reshape(F.grid.shape)
        # fixed nodes always carry the data
        fixed = ~F.free_mask
        u[fixed] = np.broadcast_to(u0, F.grid.shape)[fixed]
    return u


def _run(F: SpaceTimeFunctional, config: SolverConfig, initial_guess, kind: str, levels=()):
    t0 = time.perf_counter()
    u = _start(F, initial_guess).reshape(-1)
    free = F.free_mask.reshape(-1)
    bound = F.reaction
    schedule = config.schedule_for(F.gamma) if F.reaction else (0.0,)
    log_scale = F.log_row_scale().reshape(-1)
    stages = []
    total_it = 0
    fallback = 0
    tol_final = None
    res = None
    for i, sigma in enumerate(schedule):
        last = i == len(schedule) - 1

        # every stage keeps u >= 0 explicitly: the smoothed minimizers are
        # nonnegative anyway and unconstrained stages wander below 0 on coarse grids
        constrained = bound

        def residual(x, s=sigma, c=constrained):
            return F.scaled_residual(x, s, feasible=c).reshape(-1)

        def jacobian(x, s=sigma):
            return F.scaled_jacobian(x, s, config.sigma_min)

        merit = (
            lambda x, y, s=sigma: F.energy_difference(x, y, s),
            lambda x, s=sigma: F.gradient(x, s).reshape(-1),
        )

        if tol_final is None:
            r0 = residual(u)
            phi0 = np.minimum(u, r0) if constrained else r0
            nrm_first = float(np.max(np.abs(phi0[free]))) if free.any() else 0.0
            tol_final = max(config.tol_grad * nrm_first, config.atol)
        # intermediate stages only need a warm start, accurate to about their own smoothing scale
        tol = tol_final if last else max(min(1e-4 * nrm_first, sigma), tol_final)
        res = solve_complementarity(residual, jacobian, u, free, constrained, config, log_scale, tol=tol,
                                    energy=None if constrained and F.gamma == 1.0 else merit)
        stages.append({"sigma": sigma, "iterations": res.iterations, "residual": res.residual,
                       "converged": res.converged})
        total_it += res.iterations
        fallback += res.fallback_steps
        u = res.u
    values = u.reshape(F.grid.shape)
    sigma_last = schedule[-1]
    energy = F.energy(values, sigma_last)
    comp = F.energy(np.broadcast_to(F.u0, F.grid.shape), sigma_last)
    report = SolveReport(
        converged=bool(res.converged),
        iterations=total_it,
        residual=float(res.residual),
        energy=energy.to_dict(),
        wall_time=time.perf_counter() - t0,
        functional=kind,
        stages=stages,
        fallback_steps=fallback,
        competitor_energy=comp.total,
        minimal=bool(energy.total <= comp.total * (1 + 1e-12) + 1e-14),
        levels=list(levels),
    )
    out = ScalarField(F.grid, values)
    if not report.converged:
        raise NonConvergence(
            f"{kind} solve stopped after {total_it} Newton iterations with residual {res.residual:.3e}",
            report=report, field=out,
        )
    return out, report


def _coarse_grid(grid: SpaceTimeGrid, config: SolverConfig):
    counts = grid.nx + (grid.nt,)
    if all(n % 2 == 0 and n // 2 >= config.coarse_min for n in counts):
        return dataclasses.replace(grid, nx=tuple(n // 2 for n in grid.nx), nt=grid.nt // 2)
    return None


def _solve(build, grid: SpaceTimeGrid, config: SolverConfig, initial_guess, kind: str):
    F = build(grid)
    levels = []
    coarse = _coarse_grid(grid, config) if config.nested else None
    if coarse is not None:
        guess = None
        if initial_guess is not None:
            vals = initial_guess.values if isinstance(initial_guess, ScalarField) else initial_guess
            guess = restrict(ScalarField(grid, np.reshape(vals, grid.shape)), coarse)
        try:
            uc, rc = _solve(build, coarse, config, guess, kind)
        except NonConvergence as exc:
            # an unconverged coarse iterate is still a better start than nothing
            uc, rc = exc.field, exc.report
        initial_guess = restrict(uc, grid).values
        if F.reaction:
            initial_guess = np.maximum(initial_guess, 0.0)
        levels = rc.levels + [{"shape": list(coarse.shape), "iterations": rc.iterations,
                               "converged": rc.converged}]
    return _run(F, config, initial_guess, kind, levels)


def minimize(spec: model.ProblemSpec, grid: SpaceTimeGrid, config: SolverConfig | None = None,
             initial_guess=None):
    """Unique minimizer of the discrete weighted energy over the admissible set.

    Returns ``(field, report)``; raises :class:`NonConvergence` on iteration caps.
    With ``config.nested`` the start is interpolated from the solution on a
    grid with half the cells per axis (recursively), which keeps the
    active-set iteration count nearly independent of the resolution.
    """
    config = config or SolverConfig()
    return _solve(lambda g: SpaceTimeFunctional.weighted(spec, g), grid, config, initial_guess, "weighted")


def solve_scaled(spec: model.ProblemSpec, grid_v: SpaceTimeGrid, config: SolverConfig | None = None,
                 initial_guess=None):
    """Minimizer of the time-rescaled energy on a grid in scaled time ``s = t/eps``."""
    config = config or SolverConfig()
    return _solve(lambda g: SpaceTimeFunctional.scaled(spec, g), grid_v, config, initial_guess, "scaled")


# -- residual checks -------------------------------------------------------


def _laplacian_interior(u, grid):
    """Standard (2*dim+1)-point Laplacian at interior spatial nodes, NaN elsewhere."""
    lap = np.full(u.shape, np.nan)
    inner = (slice(None),) + (slice(1, -1),) * grid.dim
    acc = np.zeros(u[inner].shape)
    for d in range(grid.dim):
        ax = d + 1
        lo = [slice(None)] + [slice(1, -1)] * grid.dim
        hi = list(lo)
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        acc += (u[tuple(lo)] - 2.0 * u[inner] + u[tuple(hi)]) / grid.dx[d] ** 2
    lap[inner] = acc
    return lap


def regularized_operator(field: ScalarField, eps: float) -> np.ndarray:
    """``eps u_tt + Lap u - u_t`` by central differences; NaN off the interior."""
    g = field.grid
    u = field.values
    lap = _laplacian_interior(u, g)
    out = np.full(u.shape, np.nan)
    utt = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / g.dt**2
    ut = (u[2:] - u[:-2]) / (2.0 * g.dt)
    out[1:-1] = eps * utt + lap[1:-1] - ut
    return out


def interior_mask(grid: SpaceTimeGrid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[(slice(1, -1),) + (slice(1, -1),) * grid.dim] = True
    return mask


def el_residual(field: ScalarField, spec: model.ProblemSpec) -> ScalarField:
    """Strong-form residual ``-eps u_tt + u_t - Lap u + f(u)`` at interior nodes.

    Rows at ``t = T`` and on Neumann boundaries carry the discrete
    natural-condition defect (the row-scaled gradient); rows at ``t = 0`` and
    Dirichlet nodes are 0.
    """
    g = field.grid
    F = SpaceTimeFunctional.weighted(spec, g)
    out = F.scaled_residual(field.values, spec.smoothing_sigma)
    out[~F.free_mask] = 0.0
    interior = interior_mask(g)
    L = regularized_operator(field, spec.epsilon)
    f = model.f_gamma(field.values, spec.gamma) if spec.reaction else 0.0 * field.values
    out[interior] = (-L + f)[interior]
    return ScalarField(g, out)


def default_theta(config: SolverConfig | None, u0) -> float:
    """Positivity threshold ``max(10 * atol, 1e-8 * max u0)``."""
    atol = (config or SolverConfig()).atol
    return max(10.0 * atol, 1e-8 * float(np.max(u0)))


def double_inequality_check(field: ScalarField, spec: model.ProblemSpec, theta: float | None = None):
    """Defects of ``chi_{u > theta} <= eps u_tt + Lap u - u_t <= 1`` at interior nodes.

    Returns ``(lower_defect, upper_defect)``: the largest violations
    ``max (chi - L)_+`` and ``max (L - 1)_+``.
    """
    if spec.gamma != 1.0:
        raise UsageError("the double inequality is stated for gamma = 1 only")
    if theta is None:
        theta = default_theta(None, spec.u0(field.grid))
    interior = interior_mask(field.grid)
    L = regularized_operator(field, spec.epsilon)[interior]
    chi = (field.values[interior] > theta).astype(float)
    if L.size == 0:
        return 0.0, 0.0
    lower = float(np.max(np.maximum(chi - L, 0.0)))
    upper = float(np.max(np.maximum(L - 1.0, 0.0)))
    return lower, upper

"""Semismooth Newton (primal-dual active set) for bound-constrained convex problems.

Solves the complementarity system ``u >= 0, r(u) >= 0, u * r(u) = 0`` on the
free nodes, written as ``Phi(u) = min(u, r(u)) = 0``, where ``r`` is a
row-scaled gradient of a convex energy. Without the bound the plain equation
``r(u) = 0`` is solved. Globalized by backtracking on ``|Phi|``; a projected
Jacobi step is the fallback when backtracking stalls.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import NonConvergence, NonFinite, ParameterError

log = logging.getLogger(__name__)

# direct solves use a banded Cholesky factorization up to this bandwidth
BANDED_MAX = 300


@dataclass(frozen=True)
class SolverConfig:
    tol_grad: float = 1e-9
    atol: float = 1e-9
    max_newton: int = 100
    sigma_schedule: tuple[float, ...] | None = None
    sigma_min: float = 1e-10
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtrack: int = 30
    watchdog: int = 5
    linear_solver: str = "direct"
    linear_tol: float = 1e-12
    linear_maxit: int = 20000
    tol_pos: float = 1e-8
    nested: bool = False  # start from the solution on successively halved grids
    coarse_min: int = 8  # fewest cells per axis on the coarsest of those grids

    def __post_init__(self):
        for name in ("tol_grad", "atol", "sigma_min", "armijo_c", "linear_tol", "tol_pos"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.armijo_shrink < 1:
            raise ParameterError("armijo_shrink must lie in (0, 1)")
        if self.max_newton < 1 or self.linear_maxit < 1 or self.max_backtrack < 1 or self.coarse_min < 2:
            raise ParameterError("iteration caps must be >= 1")
        if self.linear_solver not in ("direct", "cg"):
            raise ParameterError(f"linear_solver must be 'direct' or 'cg', got {self.linear_solver!r}")
        if self.sigma_schedule is not None:
            s = tuple(float(x) for x in self.sigma_schedule)
            if not s or any(x < 0 for x in s):
                raise ParameterError("sigma_schedule must be a nonempty list of values >= 0")
            if any(b >= a for a, b in zip(s, s[1:])):
                raise ParameterError("sigma_schedule must be strictly decreasing")
            object.__setattr__(self, "sigma_schedule", s)

    def schedule_for(self, gamma: float) -> tuple[float, ...]:
        if self.sigma_schedule is not None:
            return self.sigma_schedule
        if gamma == 1.0:
            return (0.0,)
        # decade continuation down to the clamp level of the singular derivative
        steps = []
        k = 2
        while 10.0**-k > self.sigma_min * (1 + 1e-9):
            steps.append(10.0**-k)
            k += 1
        return tuple(steps) + (self.sigma_min,)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sigma_schedule"] is not None:
            d["sigma_schedule"] = list(d["sigma_schedule"])
        return d


@dataclass
class NewtonResult:
    u: np.ndarray
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    fallback_steps: int = 0


def ncp_residual(u, r, free, bound):
    """``min(u, r)`` (or ``r``) on free nodes, 0 elsewhere."""
    phi = np.minimum(u, r) if bound else r.copy()
    phi[~free] = 0.0
    return phi


def _symmetrize(A, log_scale):
    # A = diag(scale)^{-1} H with H symmetric; D^{1/2} A D^{-1/2} is symmetric
    if log_scale is None:
        s = np.ones(A.shape[0])
    else:
        s = np.exp(0.5 * (log_scale - log_scale.max()))
    As = (sp.diags(s) @ A @ sp.diags(1.0 / s)).tocsr()
    return 0.5 * (As + As.T), s


def _bandwidth(A):
    coo = A.tocoo()
    return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0


def _solve_linear(A, b, config, log_scale=None):
    if config.linear_solver == "direct":
        if log_scale is not None and _bandwidth(A) <= BANDED_MAX:
            As, s = _symmetrize(A, log_scale)
            up = sp.triu(As).tocoo()
            bw = int(np.max(up.col - up.row)) if up.nnz else 0
            # upper banded storage: ab[bw + i - j, j] = A[i, j]
            ab = np.zeros((bw + 1, As.shape[0]))
            ab[bw + up.row - up.col, up.col] = up.data
            try:
                return sla.solveh_banded(ab, s * b, check_finite=False) / s
            except sla.LinAlgError:
                log.debug("banded Cholesky failed, using sparse LU")
        x = spla.spsolve(A.tocsc(), b, permc_spec="MMD_AT_PLUS_A")
        return np.asarray(x, dtype=float)
    As, s = _symmetrize(A, log_scale)
    dinv = 1.0 / As.diagonal()
    M = spla.LinearOperator(As.shape, matvec=lambda x: dinv * x)
    y, info = spla.cg(As, s * b, rtol=config.linear_tol, maxiter=config.linear_maxit, M=M)
    if info != 0:
        log.warning("cg did not reach linear_tol (info=%d)", info)
    return y / s


def solve_complementarity(residual, jacobian, u0, free, bound, config: SolverConfig,
                          log_scale=None, tol=None, energy=None) -> NewtonResult:
    """Newton iteration for ``Phi(u) = 0``; ``u0`` holds the fixed nodes' values.

    ``residual(u)`` and ``jacobian(u)`` act on flat arrays over all nodes.
    ``tol`` overrides the stopping threshold on ``max|Phi|``.

    With ``bound=True`` this is the primal-dual active set method. The active
    set compares ``u`` with the Jacobi-scaled residual ``r / diag(J)``.

    ``energy`` is an optional pair ``(difference(u, v), gradient(u))`` of the
    underlying convex energy. Given it, trial points are projected onto the
    bound (when there is one) and accepted on the Armijo condition. Without
    it, full steps are taken while the active set keeps changing to sets not
    seen before (monotone for M-matrix systems), and otherwise steps are
    backtracked on a watchdog decrease of ``|Phi|``.
    """
    u = np.array(u0, dtype=float).reshape(-1)
    free = np.asarray(free, dtype=bool).reshape(-1)
    fidx = np.flatnonzero(free)
    r = residual(u)
    phi = ncp_residual(u, r, free, bound)
    nrm0 = float(np.max(np.abs(phi))) if phi.size else 0.0
    if tol is None:
        tol = max(config.tol_grad * nrm0, config.atol)
    history = [nrm0]
    nrm = nrm0
    it = 0
    fallback = 0
    seen = set()
    project = bound and energy is not None
    while nrm > tol and it < config.max_newton:
        it += 1
        J = jacobian(u)
        if bound:
            # Jacobi-scaled comparison: r/d is the size of the correction in units of u
            active = free & (u * J.diagonal() < r)
        else:
            active = np.zeros_like(free)
        inactive = free & ~active
        delta = np.zeros_like(u)
        delta[active] = -u[active]
        iidx = np.flatnonzero(inactive)
        if iidx.size:
            rhs = -r[iidx]
            if np.any(active):
                aidx = np.flatnonzero(active)
                rhs -= J[iidx][:, aidx] @ delta[aidx]
            Jii = J[iidx][:, iidx]
            ls = None if log_scale is None else log_scale.reshape(-1)[iidx]
            delta[iidx] = _solve_linear(Jii, rhs, config, ls)
        if not np.all(np.isfinite(delta)):
            raise NonFinite("Newton direction is not finite (singular or ill-conditioned system)")

        full_step = False
        if bound and energy is None:
            key = hash(np.packbits(active).tobytes())
            full_step = key not in seen
            seen.add(key)
        grad = energy[1](u) if energy is not None else None
        ref = max(history[-config.watchdog:])
        alpha = 1.0
        accepted = False
        for _ in range(config.max_backtrack):
            trial = u + alpha * delta
            if project:
                trial[fidx] = np.maximum(trial[fidx], 0.0)
            r_t = residual(trial)
            phi_t = ncp_residual(trial, r_t, free, bound)
            nrm_t = float(np.max(np.abs(phi_t)))
            if not math.isfinite(nrm_t):
                raise NonFinite("residual became non-finite")
            if full_step or nrm_t <= tol:
                accepted = True
                break
            if energy is not None:
                slope = float(np.dot(grad[fidx], trial[fidx] - u[fidx]))
                if slope < 0 and energy[0](u, trial) <= config.armijo_c * slope:
                    accepted = True
                    break
            elif nrm_t <= (1.0 - config.armijo_c * alpha) * ref:
                accepted = True
                break
            alpha *= config.armijo_shrink
        if not accepted:
            # projected Jacobi step on the free nodes
            fallback += 1
            d = J.diagonal()
            trial = u.copy()
            trial[fidx] = u[fidx] - r[fidx] / d[fidx]
            if bound:
                trial[fidx] = np.maximum(trial[fidx], 0.0)
            r_t = residual(trial)
            phi_t = ncp_residual(trial, r_t, free, bound)
            nrm_t = float(np.max(np.abs(phi_t)))
        u, r, phi, nrm = trial, r_t, phi_t, nrm_t
        history.append(nrm)
        log.debug("newton it=%d |Phi|=%.3e alpha=%.3g", it, nrm, alpha)
    if not np.all(np.isfinite(u)):
        raise NonFinite("iterate is not finite")
    return NewtonResult(u, nrm <= tol, it, nrm, history, fallback)

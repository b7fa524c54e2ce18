"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

The lines are repeated in the "acceptance criteria" section at the end of the
pytest output. Shared runs are solved once per session.
"""

import time

import numpy as np
import pytest

from conftest import bump_problem, stationary_problem
from wied import InitialDatum, ProblemSpec, ScalarField, make_grid, minimize
from wied import diagnostics as diag
from wied.newton import SolverConfig
from wied.energy import energy_trace, level_constant, mass_weights, scaled_energy, to_scaled_time, weighted_energy
from wied.reference import solve_parabolic
from wied.solver import default_theta, double_inequality_check, el_residual, interior_mask

pytestmark = pytest.mark.slow

SWEEP_EPS = (0.2, 0.1, 0.05, 0.025)
RADII = (0.05, 0.1, 0.2)


def verdict(log, n, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} #{n:02d} {name}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


class Runs:
    """Lazily solved runs shared by the criteria, keyed by a short label."""

    def __init__(self):
        self.fields = {}
        self.seconds = {}

    def get(self, key, prob, grid, **kw):
        if key not in self.fields:
            t0 = time.perf_counter()
            u, rep = minimize(prob, grid, **kw)
            self.seconds[key] = time.perf_counter() - t0
            self.fields[key] = (prob, u, rep)
        return self.fields[key]

    def stationary(self, gamma):
        prob = stationary_problem(gamma=gamma, eps=0.1)
        g = make_grid(1, [-1, 1], 256, 1.0, 256)
        cold = np.zeros(g.shape)
        cold[0] = prob.u0(g)
        # cold start: zeros for t > 0, brought in from coarser grids
        return self.get(f"stationary g={gamma}", prob, g, config=SolverConfig(nested=True), initial_guess=cold)

    def bump(self, eps=0.1, nx=128, nt=512, gamma=1.0):
        return self.get(f"bump g={gamma} eps={eps} {nx + 1}x{nt + 1}", bump_problem(gamma=gamma, eps=eps),
                        make_grid(1, [-1, 1], nx, 1.0, nt))

    def bump_2d(self):
        datum = InitialDatum("bump", center=(0.0, 0.0), radius=0.5, height=0.5)
        prob = ProblemSpec(gamma=1.0, epsilon=0.1, dim=2, bc="dirichlet", initial=datum)
        return self.get("bump 2d 33^3", prob, make_grid(2, [-1, 1], 32, 1.0, 32))

    def everything(self):
        self.stationary(1.0)
        self.stationary(1.5)
        for eps in SWEEP_EPS:
            self.bump(eps)
        self.bump(nt=1024)
        self.bump(nx=256, nt=1024)
        self.bump(gamma=1.5)
        self.bump_2d()
        return self.fields


@pytest.fixture(scope="module")
def runs():
    return Runs()


def test_01_stationary_gamma_one(runs, acceptance_log):
    prob, u, rep = runs.stationary(1.0)
    g = u.grid
    dev = float(np.max(np.abs(u.values - prob.u0(g))))
    theta = default_theta(None, prob.u0(g))
    mask = interior_mask(g) & (u.values > theta)
    res = float(np.max(np.abs(el_residual(u, prob).values[mask])))
    secs = runs.seconds["stationary g=1.0"]
    ok = rep.converged and dev <= 5e-4 and res <= 5e-3 and secs <= 60
    verdict(acceptance_log, 1, "stationary oracle gamma=1 (257x257, cold start)", ok,
            f"deviation {dev:.2e} (<= 5e-4), EL residual on u>theta {res:.2e} (<= 5e-3), {secs:.1f} s (<= 60)")


def test_02_stationary_gamma_three_halves(runs, acceptance_log):
    prob, u, rep = runs.stationary(1.5)
    dev = float(np.max(np.abs(u.values - prob.u0(u.grid))))
    verdict(acceptance_log, 2, "stationary oracle gamma=1.5 (257x257)", rep.converged and dev <= 5e-4,
            f"deviation {dev:.2e} (<= 5e-4)")


def test_03_scaling_identity(runs, acceptance_log):
    worst, where = 0.0, ""
    for key, (prob, u, rep) in runs.everything().items():
        E = weighted_energy(u, prob).total
        J = scaled_energy(to_scaled_time(u, prob.epsilon), prob).total
        rel = abs(prob.epsilon * E - J) / (1 + J)
        if rel >= worst:
            worst, where = rel, key
    verdict(acceptance_log, 3, "scaling identity on every run", worst <= 1e-8,
            f"max |eps E - J|/(1+J) = {worst:.2e} ({where}) (<= 1e-8)")


def test_04_derivative_law(runs, acceptance_log):
    # time step halving at fixed h on the gamma = 1 bump
    coarse = runs.bump(nt=512)
    fine = runs.bump(nt=1024)
    r1, _ = diag.check_derivative_law(energy_trace(coarse[1], coarse[0]))
    r2, _ = diag.check_derivative_law(energy_trace(fine[1], fine[0]))
    ratio = r1 / r2
    monotone = all(diag.check_derivative_law(energy_trace(u, p))[1] for p, u, _ in runs.everything().values())
    ok = 1.5 <= ratio <= 3.0 and monotone
    verdict(acceptance_log, 4, "derivative law E' = -2I", ok,
            f"residual_l1 {r1:.3e} (nt=512) / {r2:.3e} (nt=1024) = {ratio:.2f} (window [1.5, 3]); "
            f"E non-increasing on all runs: {monotone}")


def test_05_energy_level(runs, acceptance_log):
    worst, where = -np.inf, ""
    for key, (prob, u, _) in runs.everything().items():
        J = scaled_energy(to_scaled_time(u, prob.epsilon), prob).total
        bound = prob.epsilon * level_constant(u.grid, u.values[0], prob.gamma)
        if J / bound > worst:
            worst, where = J / bound, key
    verdict(acceptance_log, 5, "energy level J <= eps C", worst <= 1.0,
            f"max J/(eps C) = {worst:.4f} ({where}) (<= 1)")


def test_06_uniform_bounds(runs, acceptance_log):
    kin, slab_ok, C = [], True, None
    worst_slab = 0.0
    for eps in SWEEP_EPS:
        prob, u, _ = runs.bump(eps)
        rep = diag.check_energy_bounds(u, prob, (eps, 2 * eps, 0.25, 0.5), margin=10.0)
        kin.append(rep.kinetic_total)
        C = rep.C_est
        slab_ok &= rep.slab_ok and not rep.rejected_radii
        worst_slab = max(worst_slab, max(row[2] for row in rep.slab_table) / rep.C_est)
    spread = max(kin) / min(kin)
    ok = max(kin) <= 10 * C and spread <= 3 and slab_ok
    col = ", ".join(f"{k:.3f}" for k in kin)
    verdict(acceptance_log, 6, "uniform energy bounds over eps (129x513)", ok,
            f"kinetic_total [{col}] vs 10 C = {10 * C:.2f}, max/min {spread:.2f} (<= 3), "
            f"max slab ratio / C {worst_slab:.2f} (<= 10)")


def test_07_double_inequality(runs, acceptance_log):
    defects = []
    for nx, nt in ((128, 512), (256, 1024)):
        prob, u, _ = runs.bump(nx=nx, nt=nt)
        defects.append(max(double_inequality_check(u, prob)))
    shrink = defects[0] / defects[1]
    ok = defects[0] <= 0.05 and shrink >= 1.8
    verdict(acceptance_log, 7, "double inequality chi <= L(u) <= 1", ok,
            f"max defect {defects[0]:.2e} (129x513, <= 0.05), {defects[1]:.2e} (257x1025), "
            f"shrink {shrink:.2f} (>= 1.8)")


def test_08_nondegeneracy(runs, acceptance_log):
    t0 = time.perf_counter()
    runs.bump_2d()
    secs_2d = runs.seconds["bump 2d 33^3"] + time.perf_counter() - t0
    worst = {}
    ok = True
    for key, (prob, u, _) in runs.everything().items():
        if prob.gamma != 1.0:
            continue
        rep = diag.nondegeneracy(u, prob, RADII)
        if rep.empty:
            continue
        ok &= rep.passed
        d = u.grid.dim
        worst[d] = min(worst.get(d, np.inf), rep.min_ratio / rep.c_theory)
    ok &= set(worst) == {1, 2} and secs_2d <= 300
    detail = ", ".join(f"{d}D min_ratio/c {v:.2f}" for d, v in sorted(worst.items()))
    verdict(acceptance_log, 8, "non-degeneracy sup u >= c r^2", ok,
            f"{detail} (>= 0.8); 2D 33^3 solve {secs_2d:.1f} s (<= 300)")


def test_09_convergence_to_parabolic(runs, acceptance_log):
    prob = bump_problem(gamma=1.0, eps=0.1)
    g = make_grid(1, [-1, 1], 128, 1.0, 512)
    ref = solve_parabolic(prob, g)
    ref_fine = solve_parabolic(prob, g.refined())
    floor = diag.reference_floor(ref, ref_fine, 0.5)
    theta = default_theta(None, prob.u0(g))
    errors, chi = [], []
    for eps in SWEEP_EPS:
        _, u, _ = runs.bump(eps)
        errors.append(diag.l2_cylinder(u, ref, 0.5))
        chi.append(diag.chi_mismatch(u, ref, theta))
    rep = diag.ConvergenceReport(list(SWEEP_EPS), errors, chi, 0.5, theta, floor)
    verdict(acceptance_log, 9, "eps-sweep convergence to the implicit-Euler reference", rep.passed,
            f"L2(Q_r+) errors [{', '.join(f'{e:.4f}' for e in errors)}] floor {floor:.1e}; "
            f"chi-mismatch [{', '.join(f'{c:.3f}' for c in chi)}]")


def test_10_positivity_and_maximum(runs, acceptance_log):
    ok, worst_lo, worst_hi = True, 0.0, -np.inf
    for prob, u, _ in runs.everything().values():
        m0 = float(np.max(u.values[0]))
        lo = float(u.values.min())
        hi = float(u.values.max()) - m0
        ok &= lo >= -1e-8 * (1 + m0) and hi <= 1e-8
        worst_lo, worst_hi = min(worst_lo, lo), max(worst_hi, hi)
    verdict(acceptance_log, 10, "positivity and maximum bound on every run", ok,
            f"min u {worst_lo:.2e} (>= -1e-8 (1 + max u0)), max u - max u0 {worst_hi:.2e} (<= 1e-8)")


def test_11_reference_self_test(acceptance_log):
    prob = ProblemSpec(gamma=1.0, epsilon=0.1, bc="neumann", reaction=False,
                       initial=InitialDatum("bump", center=(0.3,), radius=0.5, height=0.5))
    g = make_grid(1, [-1, 1], 128, 1.0, 256)
    u = solve_parabolic(prob, g).values
    mass = u @ mass_weights(g)
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    maxes = u.max(axis=1)
    mins = u.min(axis=1)
    principle = bool(np.all(np.diff(maxes) <= 1e-14) and np.all(np.diff(mins) >= -1e-14))
    ok = drift <= 1e-10 and principle
    verdict(acceptance_log, 11, "reference self-test (Neumann heat)", ok,
            f"relative mass drift {drift:.1e} (<= 1e-10), discrete maximum principle every step: {principle}")

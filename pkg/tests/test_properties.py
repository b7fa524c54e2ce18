"""Invariants checked on generated inputs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bump_problem
from wied import InitialDatum, ProblemSpec, ScalarField, make_grid, minimize
from wied import diagnostics as diag
from wied.config import parse_config, to_text
from wied.energy import (SpaceTimeFunctional, apply_linearized, energy_gradient, energy_trace, level_constant,
                         scaled_energy, time_weights, to_scaled_time, weighted_energy)
from wied.grid import ball_indices, restrict
from wied.model import alt_phillips_profile, f_gamma, potential
from wied.newton import SolverConfig
from wied.reference import solve_parabolic

gammas = st.floats(1.0, 1.95)
seeds = st.integers(0, 2**32 - 1)


def small_grid(dim=1):
    return make_grid(dim, [-1, 1], 6 if dim == 1 else 4, 0.5, 5)


# -- grid ----------------------------------------------------------------------


@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.floats(-0.9, 0.9), st.floats(0.1, 0.9))
def test_ball_is_monotone_in_radius(r1, dr, x, t):
    g = make_grid(1, [-1, 1], 16, 1.0, 16)
    small = set(ball_indices(g, (x, t), r1).indices.tolist())
    large = set(ball_indices(g, (x, t), r1 + dr).indices.tolist())
    assert small <= large


@given(seeds)
def test_restrict_to_self_is_identity(seed):
    g = make_grid(2, [-1, 1], 3, 1.0, 3)
    u = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape))
    assert restrict(u, g).values.tobytes() == u.values.tobytes()


# -- model ---------------------------------------------------------------------


@given(gammas, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_potential_is_convex(gamma, a, b, lam):
    mid = potential(lam * a + (1 - lam) * b, gamma)
    assert mid <= lam * potential(a, gamma) + (1 - lam) * potential(b, gamma) + 1e-12


@given(st.floats(1.01, 1.95), st.floats(0.1, 3.0))
def test_potential_derivative_is_f(gamma, u):
    h = 1e-5
    fd = (potential(u + h, gamma) - potential(u - h, gamma)) / (2 * h)
    assert fd == pytest.approx(f_gamma(u, gamma), rel=1e-5)


@given(gammas)
def test_alt_phillips_residual_on_unit_interval(gamma):
    beta, A = alt_phillips_profile(gamma)
    for x in np.linspace(0.1, 1.0, 10):
        lhs = A * beta * (beta - 1) * x ** (beta - 2)
        assert abs(lhs - gamma * (A * x**beta) ** (gamma - 1)) <= 1e-12 * max(1.0, lhs)


def test_alt_phillips_four_thirds():
    beta, A = alt_phillips_profile(4 / 3)
    assert beta == pytest.approx(3.0) and A == pytest.approx((2 / 9) ** 1.5)


@given(st.sampled_from(["zero", "bump", "alt_phillips"]), st.floats(0.05, 1.0), st.floats(0, 3), gammas)
def test_initial_data_are_finite_and_nonnegative(kind, radius, height, gamma):
    g = make_grid(1, [-1, 1], 20, 1.0, 2)
    datum = InitialDatum(kind, center=(0.0,), radius=radius, height=height, clip=True)
    u0 = ProblemSpec(gamma=gamma, initial=datum).u0(g)
    assert np.all(np.isfinite(u0)) and np.all(u0 >= 0)


# -- energy --------------------------------------------------------------------


@given(seeds, gammas, st.floats(0.02, 1.0), st.sampled_from([1, 2]))
def test_breakdown_components_nonnegative(seed, gamma, eps, dim):
    g = small_grid(dim)
    u = np.random.default_rng(seed).normal(size=g.shape)
    br = SpaceTimeFunctional(g, gamma, 1 / eps, eps, 1.0).energy(u)
    assert min(br.kinetic, br.dirichlet, br.potential) >= 0
    assert br.total == br.kinetic + br.dirichlet + br.potential


@given(st.floats(0.001, 1.0), st.floats(0.1, 5.0), st.integers(2, 400))
def test_weights_are_exact(eps, T, nt):
    g = make_grid(1, [-1, 1], 2, T, nt)
    w = time_weights(g, 1 / eps)
    assert math.fsum(w.w) == pytest.approx(-math.expm1(-T / eps), rel=1e-13)
    assert np.all((w.w > 0) | w.underflow)


@given(seeds, gammas, st.floats(0.02, 1.0))
def test_scaling_identity_on_random_fields(seed, gamma, eps):
    prob = ProblemSpec(gamma=gamma, epsilon=eps, bc="neumann")
    g = small_grid()
    u = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape))
    E = weighted_energy(u, prob).total
    J = scaled_energy(to_scaled_time(u, eps), prob).total
    assert abs(eps * E - J) <= 1e-10 * (1 + J)


@given(seeds, st.floats(1.05, 1.95))
def test_gradient_consistency_along_random_directions(seed, gamma):
    prob = ProblemSpec(gamma=gamma, epsilon=0.2, bc="neumann")
    g = small_grid()
    rng = np.random.default_rng(seed)
    u = ScalarField(g, 0.5 + rng.random(g.shape))
    G = energy_gradient(u, prob).values
    free = SpaceTimeFunctional.weighted(prob, g).free_mask
    for _ in range(20):
        eta = np.where(free, rng.normal(size=g.shape), 0.0)
        h = 1e-5
        fd = (weighted_energy(ScalarField(g, u.values + h * eta), prob).total
              - weighted_energy(ScalarField(g, u.values - h * eta), prob).total) / (2 * h)
        assert np.sum(G * eta) == pytest.approx(fd, rel=1e-5, abs=1e-10)


@given(seeds, gammas)
def test_linearized_operator_symmetric_and_nonnegative(seed, gamma):
    prob = ProblemSpec(gamma=gamma, epsilon=0.2, bc="dirichlet")
    g = small_grid()
    rng = np.random.default_rng(seed)
    u = ScalarField(g, rng.random(g.shape))
    free = SpaceTimeFunctional.weighted(prob, g).free_mask
    v, w = (np.where(free, rng.normal(size=g.shape), 0.0) for _ in range(2))
    Av = apply_linearized(u, prob, ScalarField(g, v)).values
    Aw = apply_linearized(u, prob, ScalarField(g, w)).values
    assert abs(np.sum(Av * w) - np.sum(Aw * v)) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(w)
    assert np.sum(Av * v) >= 0
    assert np.all(apply_linearized(u, prob, ScalarField.zeros(g)).values == 0)


# -- solver --------------------------------------------------------------------


@settings(max_examples=8)
@given(seeds, st.sampled_from([1.0, 1.5]))
def test_minimizer_is_unique(seed, gamma):
    prob = bump_problem(gamma=gamma, eps=0.2)
    g = make_grid(1, [-1, 1], 16, 0.5, 16)
    cfg = SolverConfig()
    rng = np.random.default_rng(seed)
    a, _ = minimize(prob, g, cfg, initial_guess=rng.random(g.shape))
    b, _ = minimize(prob, g, cfg, initial_guess=rng.random(g.shape))
    # 10 x the stopping tolerance, read in the units of u
    assert np.max(np.abs(a.values - b.values)) <= 10 * 1e-8


@settings(max_examples=8)
@given(seeds, st.sampled_from([1.0, 1.5]), st.sampled_from([0.2, 0.05]))
def test_minimality_positivity_and_level(seed, gamma, eps):
    prob = bump_problem(gamma=gamma, eps=eps)
    g = make_grid(1, [-1, 1], 16, 0.5, 16)
    u, rep = minimize(prob, g)
    u0 = prob.u0(g)
    E = weighted_energy(u, prob).total
    rng = np.random.default_rng(seed)
    competitors = [np.broadcast_to(u0, g.shape).copy()]
    for _ in range(4):
        c = np.abs(u.values + 0.05 * rng.normal(size=g.shape))
        c[0] = u0
        c[:, [0, -1]] = 0.0
        competitors.append(c)
    for c in competitors:
        assert E <= weighted_energy(ScalarField(g, c), prob).total + 1e-12
    assert u.values.min() >= -1e-8 * (1 + u0.max())
    assert u.values.max() <= u0.max() + 1e-8
    J = scaled_energy(to_scaled_time(u, eps), prob).total
    assert J <= eps * level_constant(g, u0, gamma) + 1e-12


# -- traces and diagnostics ----------------------------------------------------


@settings(max_examples=6)
@given(st.sampled_from([1.0, 1.5]), st.sampled_from([0.2, 0.1, 0.05]))
def test_trace_monotone_and_level_bound(gamma, eps):
    prob = bump_problem(gamma=gamma, eps=eps)
    g = make_grid(1, [-1, 1], 16, 0.5, 32)
    u, _ = minimize(prob, g)
    tr = energy_trace(u, prob)
    assert np.all(tr.I >= 0) and np.all(tr.R >= 0) and np.all(tr.E >= 0)
    assert np.max(np.diff(tr.E)) <= 1e-10 * tr.E[0]
    C = diag.check_energy_bounds(u, prob, []).C_est
    assert tr.E[0] <= eps * C * (1 + 1e-6)
    assert diag.kinetic_total(u) == pytest.approx(diag.kinetic_total_from_trace(tr), rel=1e-8)


@given(seeds)
def test_chi_mismatch_against_negative(seed):
    g = small_grid()
    u = ScalarField(g, np.maximum(np.random.default_rng(seed).normal(size=g.shape), 0.0))
    inner = diag.interior_mask(g)
    expected = np.count_nonzero(u.values[inner] > 1e-8) / inner.sum()
    assert diag.chi_mismatch(u, ScalarField(g, -u.values), 1e-8) == pytest.approx(expected)


@settings(max_examples=10)
@given(st.floats(0.2, 1.0), st.floats(0.1, 1.0))
def test_reference_preserves_positivity(height, radius):
    datum = InitialDatum("bump", center=(0.0,), radius=radius, height=height, clip=True)
    u = solve_parabolic(ProblemSpec(gamma=1.0, initial=datum), make_grid(1, [-1, 1], 16, 0.5, 8))
    assert u.values.min() >= -1e-10


# -- config --------------------------------------------------------------------


@given(gammas, st.floats(0.01, 1.0), st.integers(2, 40), st.integers(2, 40), st.floats(0.1, 2.0),
       st.sampled_from(["dirichlet", "neumann"]), st.booleans())
def test_config_text_round_trip(gamma, eps, nx, nt, T, bc, reaction):
    text = (f"[problem]\ngamma = {gamma!r}\nepsilon = {eps!r}\nbc = {bc}\n"
            f"reaction = {str(reaction).lower()}\n[grid]\nnx = {nx}\nT = {T!r}\nnt = {nt}\n")
    once = to_text(parse_config(text))
    assert to_text(parse_config(once)) == once
    assert parse_config(once) == parse_config(text)

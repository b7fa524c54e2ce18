import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wied.errors import DataError, DomainError, ParameterError
from wied.grid import (ScalarField, SpaceTimeGrid, ball_fits, ball_indices, cylinder_indices, make_grid,
                       restrict)


def test_make_grid_spacings_and_shape():
    g = make_grid(2, [[-1, 1], [0, 2]], [4, 8], 0.5, 10)
    assert g.dx == (0.5, 0.25)
    assert g.dt == 0.05
    assert g.shape == (11, 5, 9)
    assert g.origin == (0.0, 1.0)


@pytest.mark.parametrize("kw", [
    dict(dim=3, extents=[0, 1], nx=4, T=1, nt=4),
    dict(dim=1, extents=[1, 1], nx=4, T=1, nt=4),
    dict(dim=1, extents=[0, 1], nx=1, T=1, nt=4),
    dict(dim=1, extents=[0, 1], nx=4, T=0, nt=4),
    dict(dim=1, extents=[0, 1], nx=4, T=1, nt=1),
    dict(dim=1, extents=[0, 1], nx=2.5, T=1, nt=4),
])
def test_make_grid_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        make_grid(**kw)


@given(st.integers(1, 2), st.integers(2, 6), st.integers(2, 6), st.data())
def test_flat_index_round_trip(dim, nx, nt, data):
    g = make_grid(dim, [0, 1], nx, 1.0, nt)
    flat = data.draw(st.integers(0, g.size - 1))
    idx = g.unravel(flat)
    assert g.flat_index(*idx) == flat


def test_ordering_is_time_slowest():
    g = make_grid(1, [0, 1], 3, 1.0, 2)
    assert g.flat_index(1, 0) == 4
    coords = g.node_coords(5)
    assert np.allclose(coords, [1 / 3, 0.5])


def test_scalar_field_is_read_only_and_finite():
    g = make_grid(1, [0, 1], 2, 1.0, 2)
    f = ScalarField.zeros(g)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(DataError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(DataError):
        ScalarField(g, np.zeros(3))


def test_from_function_and_time_constant():
    g = make_grid(1, [0, 1], 4, 1.0, 3)
    f = ScalarField.from_function(g, lambda t, x: t + x)
    assert f.values[2, 3] == pytest.approx(g.t[2] + g.axes[0][3])
    c = ScalarField.time_constant(g, g.axes[0])
    assert np.all(c.values == g.axes[0][None, :])
    assert c.is_admissible(g.axes[0])


def test_ball_indices_counts_nodes_within_radius():
    g = make_grid(1, [-1, 1], 8, 1.0, 4)
    region = ball_indices(g, (0.0, 0.5), 0.25)
    # nodes (x, t) with x^2 + (t - 0.5)^2 <= 1/16: x in {-0.25, 0, 0.25} at t = 0.5, x = 0 at t = 0.25, 0.75
    assert len(region) == 5
    assert not region.clipped


def test_ball_clipping_rules():
    g = make_grid(1, [-1, 1], 8, 1.0, 8)
    assert ball_indices(g, (0.9, 0.5), 0.2).clipped
    assert ball_indices(g, (0.0, 0.2), 0.2).clipped  # touches t = 0
    assert not ball_fits(g, (0.0, 0.2), 0.2)
    assert ball_fits(g, (0.0, 0.5), 0.2)
    with pytest.raises(DomainError):
        ball_indices(g, (2.0, 0.5), 0.1)
    with pytest.raises(ParameterError):
        ball_indices(g, (0.0, 0.5), 0.0)


def test_cylinder_is_open():
    g = make_grid(1, [-1, 1], 8, 1.0, 16)
    region = cylinder_indices(g, 0.5)
    t, x = g.mesh()
    sel = np.zeros(g.size, dtype=bool)
    sel[region.indices] = True
    sel = sel.reshape(g.shape)
    assert not sel[:, np.isclose(g.axes[0], 0.5)].any()
    assert not sel[0].any()
    assert sel[1, 4]
    assert len(cylinder_indices(g, 0.0)) == 0


def test_restrict_exact_on_multilinear_fields():
    coarse = make_grid(1, [0, 1], 4, 1.0, 4)
    fine = coarse.refined()
    f = ScalarField.from_function(fine, lambda t, x: 2 * t + 3 * x - t * x)
    r = restrict(f, coarse)
    assert np.allclose(r.values, ScalarField.from_function(coarse, lambda t, x: 2 * t + 3 * x - t * x).values)
    back = restrict(r, fine)
    assert np.allclose(back.values, f.values)


def test_restrict_copies_coincident_nodes_bit_exactly():
    coarse = make_grid(1, [-1, 1], 8, 1.0, 8)
    fine = coarse.refined()
    rng = np.random.default_rng(3)
    f = ScalarField(fine, rng.random(fine.shape))
    r = restrict(f, coarse)
    assert np.array_equal(r.values, f.values[::2, ::2])


def test_restrict_rejects_other_domains():
    a = make_grid(1, [0, 1], 4, 1.0, 4)
    b = make_grid(1, [0, 2], 4, 1.0, 4)
    with pytest.raises(DomainError):
        restrict(ScalarField.zeros(a), b)


def test_with_time_keeps_space():
    g = make_grid(1, [0, 1], 4, 1.0, 8)
    h = g.with_time(10.0)
    assert h.nt == 8 and h.T == 10.0 and h.nx == g.nx
    assert math.isclose(h.dt, 10 * g.dt)

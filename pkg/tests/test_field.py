import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpz_shock_lab.field import (CoupledState, FieldState, GridSpec, default_half_width, eval_at, read_snapshot,
                                 recenter, v_map, validate_space, write_snapshot)
from kpz_shock_lab.samplers import sample_nu_theta_batch


@pytest.fixture
def grid():
    return GridSpec.symmetric(10.0, 0.1)


def test_grid_bookkeeping(grid):
    assert grid.n == 201
    assert grid.origin_index == 100
    assert grid.x[grid.origin_index] == 0.0
    assert math.isclose(grid.dt, 0.4 * 0.01)
    assert grid.index_of(2.5) == 125
    assert grid.cell_offset == -100
    assert grid.steps_for(1.0) == 250


def test_grid_rejects_unstable_dt():
    with pytest.raises(ValueError):
        GridSpec(dx=0.1, n=11, origin_index=5, dt=0.006)
    with pytest.raises(ValueError):
        GridSpec.from_bounds(0.0, 0.1, 0.1)


def test_default_half_width():
    assert default_half_width(1.0, 4.0) == 2 * 4 + 12 * 2
    assert default_half_width(0.5, 0.25) == 0.25 + 12


def test_recenter_examples(grid):
    f = FieldState(grid, np.full(grid.n, 7.0))
    assert np.all(recenter(f).h == 0.0)
    g = FieldState(grid, 0.3 * grid.x)
    assert np.array_equal(recenter(g).h, g.h)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=21, max_size=21))
def test_recenter_pins_and_is_idempotent(vals):
    g = GridSpec.symmetric(1.0, 0.1)
    f = FieldState(g, np.array(vals))
    r = recenter(f)
    assert r.h[g.origin_index] == 0.0
    assert np.array_equal(recenter(r).h, r.h)


def test_eval_at(grid):
    f = FieldState(grid, 2.0 * grid.x)
    assert eval_at(f, grid.x[37]) == f.h[37]
    assert math.isclose(eval_at(f, 0.05), 0.1, abs_tol=1e-14)
    q = FieldState(grid, grid.x**2)
    xs = grid.x[:-1] + grid.dx / 2
    err = max(abs(eval_at(q, x) - x * x) for x in xs)
    # linear interpolation error is max|h''| dx^2 / 8, and h'' = 2 here
    assert err <= 2 * grid.dx**2 / 8 + 1e-12
    assert err > grid.dx**2 / 8
    with pytest.raises(ValueError):
        eval_at(f, 11.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-9.99, 9.99), st.floats(0, 0.099))
def test_eval_at_preserves_monotone_data(x, d):
    g = GridSpec.symmetric(10.0, 0.1)
    f = FieldState(g, np.cumsum(np.abs(np.sin(np.arange(g.n))) + 0.01))
    assert eval_at(f, x) <= eval_at(f, min(x + d, 9.99)) + 1e-12


def test_v_map_identities():
    f = np.linspace(-3, 3, 7)
    assert np.allclose(v_map(f, f), f, atol=1e-15)
    th = 0.7
    x = np.linspace(-5, 5, 11)
    v = v_map(-th * x, th * x)
    assert np.allclose(v, th * np.abs(x) + np.log((1 + np.exp(-2 * th * np.abs(x))) / 2))
    assert v[5] == 0.0
    assert np.all(v <= th * np.abs(x) + 1e-15)
    assert np.isfinite(v_map(np.array([800.0]), np.array([-800.0]))).all()


def test_coupled_state_checks(grid):
    th = 1.0
    s = CoupledState.from_arrays(grid, -th * grid.x, th * grid.x, th, with_v=True)
    assert len(s.members) == 3
    assert np.allclose(s.gap, 2 * th * grid.x)
    with pytest.raises(ValueError):
        CoupledState(s.h_minus, s.h_plus, s.h_v.copy(h=s.h_v.h + 1.0))
    with pytest.raises(ValueError):
        CoupledState(s.h_minus, s.h_plus.copy(t=1.0))
    with pytest.raises(ValueError):
        FieldState(grid, np.full(grid.n, np.nan))


def test_validate_space_examples(grid):
    th = 1.0
    pair = CoupledState.from_arrays(grid, -th * grid.x, th * grid.x, th)
    for sp in ("Y", "X", "Y0", "X0"):
        rep = validate_space(pair, sp, th)
        assert rep.passed, rep.as_dict()
    assert validate_space(pair, "X", th).violations == 0
    flat = CoupledState.from_arrays(grid, th * grid.x, th * grid.x, th)
    rep = validate_space(flat, "X", th)
    assert not rep.passed
    assert rep.violations == grid.n - 1
    bump = FieldState(grid, grid.x**2)
    assert not validate_space(bump, "V", 1.0).passed


def test_nu_samples_land_in_x0():
    g = GridSpec.symmetric(30.0, 0.05)
    ic = sample_nu_theta_batch(1.0, g, 11, np.arange(50))
    for fm, fp in zip(ic["f_minus"], ic["f_plus"]):
        rep = validate_space(CoupledState.from_arrays(g, fm, fp, 1.0), "X0", 1.0)
        assert rep.violations == 0
        assert rep.pin_residual == 0.0
        assert rep.passed, rep.as_dict()


def test_snapshot_round_trip(tmp_path, grid):
    s = CoupledState.from_arrays(grid, -0.5 * grid.x + np.sin(grid.x), 0.5 * grid.x, 0.5, with_v=True)
    p = tmp_path / "snap.csv"
    write_snapshot(p, s, {"seed": 42, "target": "round trip"})
    back, meta = read_snapshot(p)
    assert meta["seed"] == "42"
    for a, b in zip(s.members, back.members):
        assert np.array_equal(a.h, b.h)
        assert (a.slope_left, a.slope_right) == (b.slope_left, b.slope_right)
    assert back.grid == grid

import math

import numpy as np
import pytest

from kpz_shock_lab.field import CoupledState, GridSpec
from kpz_shock_lab.samplers import flat_pair, sample_nu_theta_batch
from kpz_shock_lab.shock import (DomainTooSmallError, ShockRecord, find_shock, find_shock_profiles, m_statistic,
                                 read_shock_trace, shift_to_shock, write_shock_trace)
from kpz_shock_lab.solver import evolve_ensemble


@pytest.fixture
def grid():
    return GridSpec.symmetric(8.0, 0.05)


def pair(grid, fm, fp, th=1.0):
    return CoupledState.from_arrays(grid, fm, fp, th)


def test_linear_gaps(grid):
    th = 1.0
    x = grid.x
    assert find_shock(pair(grid, -th * x, th * x)).b == 0.0
    rec = find_shock(pair(grid, -th * x, th * x - 2 * th))
    assert rec.b == pytest.approx(1.0, abs=1e-12)
    assert rec.unique and rec.violations == 0


def test_constant_added_to_plus_moves_shock(grid):
    th = 0.75
    x = grid.x
    for c in (0.3, -1.1, 2.0):
        b = find_shock(pair(grid, -th * x, th * x + c, th)).b
        assert b == pytest.approx(-c / (2 * th), abs=1e-12)


def test_flat_data_shock_at_origin(grid):
    p = flat_pair(1.3, grid)
    assert find_shock(pair(grid, p.f_minus, p.f_plus, 1.3)).b == 0.0


def test_nu_data_has_unique_shock():
    g = GridSpec.symmetric(5.0, 0.05)
    ic = sample_nu_theta_batch(1.0, g, 3, np.arange(10_000))
    b, uniq, viol = find_shock_profiles(ic["f_plus"] - ic["f_minus"], g)
    assert uniq.mean() >= 0.99
    assert np.all(b == 0.0)


def test_multiple_roots_flagged(grid):
    x = grid.x
    J = np.sin(3 * x) + 0.05 * x
    b, uniq, viol = find_shock_profiles(J, grid)
    assert not uniq[0] and viol[0] > 0
    assert abs(np.interp(b[0], x, J)) < 1e-2


def test_no_root_reports_domain(grid):
    x = grid.x
    with pytest.raises(DomainTooSmallError, match="increase the domain"):
        find_shock(pair(grid, -x, x + 100.0))
    b, uniq, viol = find_shock_profiles(np.ones((2, grid.n)), grid)
    assert np.all(np.isnan(b)) and np.all(viol == -1)


def test_m_statistic_examples(grid):
    th, eps = 1.0, 0.5
    x = grid.x
    assert m_statistic(pair(grid, -th * x, th * x), th, eps) == 0.0
    st = pair(grid, -th * x, th * x + np.sin(x))
    m = m_statistic(st, th, eps)
    assert 0.0 <= m <= 1.0
    assert m == pytest.approx(np.max(np.abs(np.sin(x)) - eps * np.abs(x)), abs=1e-12)


def test_m_statistic_nonnegative():
    g = GridSpec.symmetric(6.0, 0.05)
    ic = sample_nu_theta_batch(0.5, g, 8, np.arange(50))
    for fm, fp in zip(ic["f_minus"], ic["f_plus"]):
        assert m_statistic(pair(g, fm, fp, 0.5), 0.5, 0.3) >= 0.0


def test_m_statistic_over_sqrt_t_decreases():
    th, eps = 1.0, 0.5
    times = (1.0, 4.0, 16.0)
    g = GridSpec.symmetric(2 * th * 16 + 48, 0.1)
    ids = np.arange(40)
    ic = sample_nu_theta_batch(th, g, 12, ids)
    run = evolve_ensemble(np.stack([ic["f_minus"], ic["f_plus"]], axis=1), g, [(-th, -th), (th, th)], 12, ids,
                          16.0, record_times=times)
    med = []
    for k, t in enumerate(times):
        ms = [m_statistic(pair(g, run.h[r, k, 0], run.h[r, k, 1], th), th, eps) for r in range(len(ids))]
        med.append(np.median(ms) / math.sqrt(t))
    assert med[0] > med[1] > med[2]


def test_shift_to_shock(grid):
    th = 1.0
    x = grid.x
    fm = -th * x + 0.3 * np.sin(x)
    fp = th * x - 0.7 + 0.3 * np.sin(x)
    st = pair(grid, fm, fp)
    out = shift_to_shock(st)
    o = grid.origin_index
    assert abs(out.h_minus.h[o]) < 1e-9 and abs(out.h_plus.h[o]) < 1e-9
    assert find_shock(out).b == pytest.approx(0.0, abs=1e-9)
    shifted = shift_to_shock(pair(grid, fm + 4.2, fp + 4.2))
    assert np.max(np.abs(shifted.h_minus.h - out.h_minus.h)) < 1e-12
    assert np.max(np.abs(shifted.h_plus.h - out.h_plus.h)) < 1e-12
    with pytest.raises(ValueError):
        shift_to_shock(pair(grid, -x, np.sin(3 * x) + 0.05 * x - x))


def test_shift_is_exact_on_linear_data(grid):
    th = 0.6
    x = grid.x
    st = pair(grid, -th * x, th * x - 0.9, th)
    out = shift_to_shock(st)
    assert np.max(np.abs(out.h_minus.h + th * x)) < 1e-12
    assert np.max(np.abs(out.h_plus.h - th * x)) < 1e-12


def test_trace_round_trip(tmp_path):
    recs = [ShockRecord(0.5, -0.25, 1.5, True, 0, 0), ShockRecord(1.0, float("nan"), -2.0, False, -1, 3)]
    p = tmp_path / "trace.csv"
    write_shock_trace(p, recs, {"seed": 1})
    back = read_shock_trace(p)
    assert back[0] == recs[0]
    assert math.isnan(back[1].b) and back[1].replica == 3 and back[1].violations == -1

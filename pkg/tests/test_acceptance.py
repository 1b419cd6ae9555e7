"""Acceptance criteria 1 to 10 at their stated tolerances.

Each test records one PASS/FAIL line, printed again in the terminal summary.
The Monte Carlo runs use fixed seeds chosen before any result was seen.
"""

import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from kpz_shock_lab.experiments import ExperimentConfig, run_experiment, run_invariance_suite, tilted_checks
from kpz_shock_lab.field import CoupledState, FieldState, GridSpec, v_map
from kpz_shock_lab.halfline import dirichlet_heat_kernel, evolve_halfline, halfline_grid
from kpz_shock_lab.rng import Purpose, StreamKey
from kpz_shock_lab.samplers import a_split, apply_D, sample_nu_theta, sample_nu_theta_batch, v_abs_profile, \
    v_combine
from kpz_shock_lab.shock import shift_to_shock
from kpz_shock_lab.solver import SchemeConfig, evolve_coupled, evolve_ensemble, evolve_field
from kpz_shock_lab.stats import gamma_cdf, gaussian_cdf, ks_distance

pytestmark = pytest.mark.slow

QUIET = SchemeConfig(noise=False)


def _fmt(checks):
    return "; ".join(f"{c['test']}={_num(c['statistic'])}{'' if c['pass'] else ' (fail)'}" for c in checks)


def _num(v):
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(f"{float(x):.4g}" for x in v) + "]"
    return f"{float(v):.4g}"


def _pick(checks, *prefixes):
    out = [c for c in checks if c["test"].startswith(prefixes)]
    assert out, prefixes
    return out


def _conclude(number, checks, extra=""):
    ok = all(c["pass"] for c in checks)
    record_criterion(number, ok, _fmt(checks) + extra)
    assert ok, _fmt(checks)


# --------------------------------------------------------------------------
# shared ensembles


@pytest.fixture(scope="module")
def stationary_run():
    t0 = time.time()
    cfg = ExperimentConfig(scenario="stationary", theta=1.0, times=[2, 4, 8], replicas=400, dx=0.05, seed=1)
    res = run_experiment(cfg, write=False)
    tcfg = ExperimentConfig(scenario="tilted", theta=1.0, times=[2, 4, 8], replicas=400, dx=0.05, seed=1)
    return res, tilted_checks(res, tcfg), time.time() - t0


@pytest.fixture(scope="module")
def flat_run():
    # boundary information travels at speed theta, so theta T + 12 sqrt(T) (~64 at T=16) is enough
    cfg = ExperimentConfig(scenario="flat", theta=1.0, times=[4, 8, 16], replicas=400, dx=0.05, seed=2,
                           half_width=64.0)
    return run_experiment(cfg, write=False)


# --------------------------------------------------------------------------


def test_criterion_01_sampler_laws():
    t0 = time.time()
    checks = []
    for th in (0.25, 0.5, 1.0, 2.0):
        g = GridSpec.from_bounds(-0.05, 1.0, 0.05)
        ic = sample_nu_theta_batch(th, g, 1000 + int(4 * th), np.arange(100_000))
        k_gam = ks_distance(ic["deriv0"], lambda v: gamma_cdf(v, 2 * th, 1.0))
        inc = ic["f_plus"][:, g.index_of(1.0)] - ic["f_plus"][:, g.origin_index]
        k_inc = ks_distance(inc, lambda v: gaussian_cdf(v, th, 1.0))
        mw = float(ic["weight"].mean())
        checks += [dict(test=f"gamma_ks@theta={th:g}", statistic=k_gam, **{"pass": k_gam < 0.02}),
                   dict(test=f"increment_ks@theta={th:g}", statistic=k_inc, **{"pass": k_inc < 0.02}),
                   dict(test=f"mean_weight@theta={th:g}", statistic=mw, **{"pass": abs(mw - 1) <= 0.02})]
    dt = time.time() - t0
    checks.append(dict(test="runtime_s", statistic=dt, **{"pass": dt <= 120}))
    _conclude(1, checks)


def test_criterion_02_algebraic_identities():
    checks = []
    th = 0.8
    g = GridSpec.symmetric(10.0, 0.05)
    fv = v_abs_profile(th, g)
    err = float(np.max(np.abs(v_combine(a_split(fv, th)).values - fv.values)))
    checks.append(dict(test="V_after_A_sup_error", statistic=err, **{"pass": err < 1e-10}))

    th = 0.5
    g = GridSpec.symmetric(20.0, 0.05)
    out = apply_D(-th * g.x, th * g.x, th, g)
    e_f = float(np.max(np.abs(out.f_plus - th * g.x)))
    e_w = abs(out.weight - 1.0)
    quad = (2 * th * g.dx) ** 2 / 12
    checks.append(dict(test="D_identity_profile_error", statistic=e_f, **{"pass": e_f < 1e-10}))
    checks.append(dict(test="D_identity_weight_error", statistic=e_w, **{"pass": e_w < 1.01 * quad}))

    g = GridSpec.symmetric(6.0, 0.05)
    o = g.origin_index
    viol = 0
    for th, seed in ((0.25, 1), (1.0, 2), (2.0, 3)):
        ic = sample_nu_theta_batch(th, g, seed, np.arange(334))
        for fm, fp in zip(ic["f_minus"], ic["f_plus"]):
            fvv = v_map(fm, fp)
            r = np.abs((fvv[o:] - fvv[o]) - (fp[o:] - fp[o]))
            l = np.abs((fvv[:o + 1] - fvv[o]) - (fm[:o + 1] - fm[o]))
            viol += int(np.sum(r > math.log(2) + 1e-12) + np.sum(l > math.log(2) + 1e-12))
    checks.append(dict(test="log2_sandwich_violations_1002_pairs", statistic=viol, **{"pass": viol == 0}))

    th = 1.0
    g = GridSpec.symmetric(12.0, 0.05)
    worst = 0.0
    for r in range(20):
        p = sample_nu_theta(th, g, StreamKey(77, r, Purpose.INITIAL_DATA))
        fm = p.f_minus + 0.4 * np.sin(g.x)
        fp = p.f_plus + 0.4 * np.sin(g.x) - 0.9
        a = shift_to_shock(CoupledState.from_arrays(g, fm, fp, th))
        c = 3.7 * (r - 10)
        b = shift_to_shock(CoupledState.from_arrays(g, fm + c, fp + c, th))
        worst = max(worst, float(np.max(np.abs(a.h_minus.h - b.h_minus.h))),
                    float(np.max(np.abs(a.h_plus.h - b.h_plus.h))))
    checks.append(dict(test="shock_shift_constant_invariance", statistic=worst, **{"pass": worst < 1e-12}))
    _conclude(2, checks)


def test_criterion_03_solver_oracles():
    checks = []
    g = GridSpec.symmetric(12.0, 0.05)
    s0 = 0.25
    f = FieldState(g, -g.x**2 / (2 * s0) - 0.5 * math.log(2 * math.pi * s0))
    t = 1000 * g.dt
    out = evolve_field(f, StreamKey(1), t, QUIET).states[-1]
    v = s0 + t
    exact = np.exp(-g.x**2 / (2 * v)) / math.sqrt(2 * math.pi * v)
    e = float(np.max(np.abs(np.exp(out.h) - exact)[np.abs(g.x) < 8]))
    checks.append(dict(test="heat_kernel_sup_error", statistic=e, **{"pass": e < 1e-4}))

    from scipy import integrate

    th, t = 0.8, 1.0
    hg = halfline_grid(1, th * t + 12.0, 0.05)
    hout = evolve_halfline(th, 1, hg, StreamKey(1), t, QUIET).states[-1]
    worst = 0.0
    for x in (0.5, 1.0, 2.0, 4.0):
        want = integrate.quad(lambda y: dirichlet_heat_kernel(t, x, y) * math.exp(th * y), 0, x + th * t + 20)[0]
        worst = max(worst, abs(math.exp(hout.h[hg.index_of(x)]) / want - 1.0))
    checks.append(dict(test="dirichlet_quadrature_rel_error", statistic=worst, **{"pass": worst < 1e-4}))

    th = 1.0
    g = GridSpec.symmetric(14.0, 0.05)
    p = sample_nu_theta(th, g, StreamKey(6, 0, Purpose.INITIAL_DATA))
    st = CoupledState.from_arrays(g, p.f_minus, p.f_plus, th, with_v=True)
    rec = tuple(np.round(np.arange(1, 11) * 0.1, 10))
    traj = evolve_coupled(st, StreamKey(6), 1.0, SchemeConfig(record_times=rec))
    ev = max(float(np.max(np.abs(s.h_v.h - v_map(s.h_minus.h, s.h_plus.h)))) for s in traj.states)
    checks.append(dict(test="V_identity_through_t1", statistic=ev, **{"pass": ev < 1e-8}))

    g = GridSpec.symmetric(5.0, 0.1)
    ids = np.arange(16)
    ic = sample_nu_theta_batch(th, g, 1, ids)
    h0 = np.stack([ic["f_minus"], ic["f_plus"]], axis=1)
    runs = [evolve_ensemble(h0, g, [(-th, -th), (th, th)], 99, ids, 0.4, SchemeConfig(n_jobs=j, chunk_size=c),
                            record_times=(0.2, 0.4)).h for j, c in ((1, 16), (2, 3), (4, 5))]
    same = all(np.array_equal(r, runs[0]) for r in runs[1:])
    checks.append(dict(test="bitwise_identical_over_workers_1_2_4", statistic=float(same), **{"pass": same}))
    _conclude(3, checks)


def test_criterion_04_fixed_time_stationarity():
    t0 = time.time()
    cfg = ExperimentConfig(scenario="stationary", theta=1.0, times=[1, 2], replicas=500, dx=0.05, seed=5)
    rep = run_invariance_suite(cfg, t=1.0, n_stationarity=500, n_idempotence=400)
    dt = time.time() - t0
    gate = _pick(rep["checks"], "mu_increment", "nu_increment")
    for c in gate:
        c["pass"] = c["statistic"] < 0.08
    side = _pick(rep["checks"], "gap_slope_gamma", "idempotence")
    gate.append(dict(test="runtime_s", statistic=dt, **{"pass": dt <= 15 * 60}))
    _conclude(4, gate, "  | also: " + _fmt(side))


def test_criterion_05_stationary_fluctuations(stationary_run):
    res, _, dt = stationary_run
    checks = _pick(res.checks, "var_j0_over_t", "std_exponent_j0", "ks_j0_normal")
    checks.append(dict(test="runtime_s", statistic=dt, **{"pass": dt <= 30 * 60}))
    _conclude(5, checks)


def test_criterion_06_flat_fluctuations(flat_run):
    _conclude(6, _pick(flat_run.checks, "std_exponent_j0", "ks_j0_tw_diff", "mean_j0_symmetry"))


def test_criterion_07_shock_fluctuations(stationary_run, flat_run):
    res, tilted, _ = stationary_run
    checks = [dict(c, test="stationary:" + c["test"]) for c in _pick(res.checks, "var_b_over_t", "shock_uniq")]
    checks += [dict(c, test="flat:" + c["test"]) for c in _pick(flat_run.checks, "ks_b_tw_diff", "shock_uniq")]
    checks += [dict(c, test="tilted:" + c["test"]) for c in _pick(tilted, "weighted_var_j0", "weighted_var_b")]
    _conclude(7, checks)


def test_criterion_08_shear_velocity():
    cfg = ExperimentConfig(scenario="shear", times=[1, 2, 3, 4, 5, 6, 7, 8], replicas=100, dx=0.05, seed=3,
                           options={"theta1": 0.0, "theta2": 2.0})
    res = run_experiment(cfg, write=False)
    _conclude(8, _pick(res.checks, "shock_velocity", "shear_twin_ks"))


def test_criterion_09_halfline():
    cfg = ExperimentConfig(scenario="halfline-ratio", theta=1.0, times=[1, 4, 16], replicas=100, dx=0.05, seed=4)
    res = run_experiment(cfg, write=False)
    _conclude(9, _pick(res.checks, "zero_noise_ratio_error", "median_ratio_increasing", "cross_side_log_corr"))


def test_criterion_10_gap_growth(stationary_run):
    res, _, _ = stationary_run
    _conclude(10, _pick(res.checks, "iqr_growth"))

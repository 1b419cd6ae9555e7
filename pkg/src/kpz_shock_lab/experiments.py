"""Config-driven ensemble experiments and their pass/fail summaries.

Each scenario samples initial data, evolves an ensemble with common noise
inside every replica, tracks ``J0 = (h_plus - h_minus)(t, 0)`` and the shock
location ``b_t``, and compares the results with the large-time target laws.
Results are written as CSV samples, a JSON summary and SVG plots.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .field import GridSpec, default_half_width, v_map
from .halfline import evolve_halfline_ensemble, halfline_grid, zero_noise_ratio
from .rng import Purpose
from .samplers import a_split, sample_mu_theta_batch, sample_nu_theta_batch
from .shock import ShockRecord, find_shock_profiles, shift_profile, write_shock_trace
from .solver import SchemeConfig, evolve_ensemble, shear_twin_check
from .stats import (fit_scaling, gamma_cdf, gaussian_cdf, ks_distance, ks_two_sample, spread,
                    tw_goe_diff_table, weighted_var)
from .rng import StreamKey

__all__ = [
    "SCENARIOS",
    "ExperimentConfig",
    "EnsembleResult",
    "ConfigError",
    "run_experiment",
    "run_invariance_suite",
    "load_config",
    "stationary_checks",
    "tilted_checks",
]

SCENARIOS = ("stationary", "flat", "tilted", "shock-frame", "shear", "v-mixture", "halfline-ratio")

# what each scenario is checked against; written into every output header
TARGETS = {
    "stationary": "pair data from the jointly stationary law: J0/sqrt(t) -> N(0, 2 theta), b_t/sqrt(t) -> N(0, 1/(2 theta))",
    "flat": "flat data (-theta x, theta x): J0/t^(1/3) -> (X1 - X2)/2, b_t/t^(1/3) -> (X1 - X2)/(4 theta), X_i iid TW-GOE",
    "tilted": "shock-tilted stationary data (weights = gap slope at 0 / (2 theta)): same Gaussian limits as the stationary case",
    "shock-frame": "shift-to-shock map commutes with the dynamics in law (b-increment laws agree)",
    "shear": "shock velocity -(theta1 + theta2)/2 and the shear identity h_theta(t, x - theta t) = h_0(t, x) + theta x - theta^2 t/2 in law",
    "v-mixture": "V-shaped data theta|x|: near the origin h_V follows h_plus or h_minus within log 2; mixture weight 1/2 by symmetry (diagnostic)",
    "halfline-ratio": "half-line / full-line partition function ratio at x = sqrt(t) tends to 1; opposite half-lines are independent",
}

DEFAULT_THRESHOLDS = {
    "var_j0_rel": 0.25,
    "std_exponent_stationary": [0.42, 0.58],
    "ks_j0_normal": 0.12,
    "var_b_rel": 0.3,
    "uniqueness": 0.99,
    "iqr_growth": 1.5,
    "std_exponent_flat": [0.23, 0.45],
    "ks_j0_flat": 0.15,
    "mean_j0_se": 2.0,
    "ks_b_flat": 0.15,
    "weighted_var_rel": 0.3,
    "mean_weight": 0.02,
    "velocity": 0.1,
    "shear_twin_ks": 0.1,
    "idempotence_ks": 0.1,
    "zero_noise_ratio": 1e-6,
    "cross_corr": 0.05,
    "sandwich_violations": 0,
    "stationarity_ks": 0.08,
    "gamma_ks": 0.1,
}

_DEFAULT_TIMES = {
    "stationary": [2.0, 4.0, 8.0],
    "tilted": [2.0, 4.0, 8.0],
    "flat": [4.0, 8.0, 16.0],
    "shock-frame": [1.0, 2.0],
    "shear": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    "v-mixture": [1.0, 2.0, 4.0, 8.0],
    "halfline-ratio": [1.0, 4.0, 16.0],
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved parameters of one experiment.

    Scenario-specific keys live in ``options`` (for example ``theta1`` and
    ``theta2`` for the shear scenario or ``corr_replicas`` for the half-line
    scenario).  ``thresholds`` overrides entries of the default thresholds.
    """

    scenario: str
    theta: float = 1.0
    times: list | None = None
    dx: float = 0.05
    dt_factor: float = 0.4
    replicas: int = 400
    seed: int = 0
    output_dir: str | None = None
    half_width: float | None = None
    scheme: str = "split-exponential"
    n_jobs: int = 1
    plots: bool = True
    thresholds: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.times is None:
            self.times = list(_DEFAULT_TIMES[self.scenario])
        self.times = sorted(float(t) for t in self.times)
        if not self.times or self.times[0] <= 0:
            raise ConfigError("times must be a nonempty list of positive numbers")
        if not self.theta > 0:
            raise ConfigError("theta must be positive")
        if not self.dx > 0 or not 0 < self.dt_factor <= 0.5:
            raise ConfigError("need dx > 0 and 0 < dt_factor <= 0.5")
        if self.replicas < 2:
            raise ConfigError("need at least 2 replicas")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        unknown = set(self.thresholds) - set(DEFAULT_THRESHOLDS)
        if unknown:
            raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
        if self.scenario == "shear":
            t1 = self.options.get("theta1")
            t2 = self.options.get("theta2")
            if t1 is None or t2 is None:
                raise ConfigError("shear scenario needs options.theta1 and options.theta2")
            if not float(t2) > float(t1):
                raise ConfigError("shear scenario needs theta1 < theta2")
            lo = float(self.options.get("fit_from", 1.0))
            hi = float(self.options.get("fit_to", 8.0))
            if sum(lo - 1e-9 <= t <= hi + 1e-9 for t in self.times) < 2:
                raise ConfigError(f"the velocity fit window [{lo:g}, {hi:g}] (options.fit_from, options.fit_to) "
                                  "must contain at least two record times")
        if self.scenario == "shock-frame" and len(self.times) != 2:
            raise ConfigError("shock-frame scenario needs exactly two times [t_shift, t_end]")
        if self.scenario in ("stationary", "flat", "tilted") and len(self.times) < 2:
            raise ConfigError("scaling fits need at least two times")

    def threshold(self, key):
        return self.thresholds.get(key, DEFAULT_THRESHOLDS[key])

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(scheme=self.scheme, n_jobs=self.n_jobs)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a JSON config and apply non-None keyword overrides."""
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(ExperimentConfig)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "scenario" not in data:
        raise ConfigError("config needs a scenario")
    return ExperimentConfig(**data)


@dataclass
class EnsembleResult:
    """Per-replica shock series plus per-time summaries and threshold checks."""

    config: dict
    times: np.ndarray
    j0: np.ndarray | None = None
    b: np.ndarray | None = None
    unique: np.ndarray | None = None
    violations: np.ndarray | None = None
    weights: np.ndarray | None = None
    per_time: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def check(self, name: str) -> dict:
        for c in self.checks:
            if c["test"] == name:
                return c
        raise KeyError(name)

    def shock_records(self) -> list:
        out = []
        if self.b is None:
            return out
        for r in range(self.b.shape[0]):
            for k, t in enumerate(self.times):
                out.append(ShockRecord(t=float(t), b=float(self.b[r, k]), j0=float(self.j0[r, k]),
                                       unique=bool(self.unique[r, k]), violations=int(self.violations[r, k]),
                                       replica=r))
        return out


def _check(test: str, n: int, statistic, threshold, passed: bool, **extra) -> dict:
    d = {"test": test, "n": int(n), "statistic": statistic, "threshold": threshold, "pass": bool(passed)}
    d.update(extra)
    return d


def _rel_check(name, n, value, target, tol, **extra):
    return _check(name, n, float(value), {"target": target, "rel_tol": tol},
                  abs(value / target - 1.0) <= tol, **extra)


# --------------------------------------------------------------------------
# shared machinery


def _grid(cfg: ExperimentConfig, slope: float, t_max: float) -> GridSpec:
    L = cfg.half_width if cfg.half_width is not None else default_half_width(slope, t_max)
    return GridSpec.symmetric(L, cfg.dx, cfg.dt_factor)


def _shock_series(run, grid: GridSpec, minus: int = 0, plus: int = 1):
    R, K = run.h.shape[:2]
    j0 = np.empty((R, K))
    b = np.empty((R, K))
    uniq = np.empty((R, K), dtype=bool)
    viol = np.empty((R, K), dtype=np.int64)
    o = grid.origin_index
    for k in range(K):
        J = run.h[:, k, plus, :] - run.h[:, k, minus, :]
        j0[:, k] = J[:, o]
        b[:, k], uniq[:, k], viol[:, k] = find_shock_profiles(J, grid)
    missing = int(np.count_nonzero(np.isnan(b)))
    if missing:
        warnings.warn(f"{missing} shock searches found no sign change of J; increase the domain half-width L",
                      RuntimeWarning, stacklevel=2)
    return j0, b, uniq, viol


def _summaries(times, j0, b, weights=None) -> list:
    out = []
    for k, t in enumerate(times):
        v = j0[:, k]
        bb = b[:, k]
        ok = np.isfinite(bb)
        d = {"t": float(t), "n": int(len(v)),
             "j0_mean": float(v.mean()), "j0_var": float(v.var(ddof=1)), "j0_iqr": spread(v, "iqr"),
             "b_mean": float(bb[ok].mean()) if ok.any() else float("nan"),
             "b_var": float(bb[ok].var(ddof=1)) if ok.sum() > 1 else float("nan"),
             "b_missing": int((~ok).sum())}
        if weights is not None:
            d["j0_var_weighted"] = weighted_var(v, weights)
            d["b_var_weighted"] = weighted_var(bb[ok], weights[ok]) if ok.any() else float("nan")
        out.append(d)
    return out


def _uniqueness_check(cfg, uniq, b) -> dict:
    rate = float(np.mean(uniq & np.isfinite(b)))
    thr = cfg.threshold("uniqueness")
    return _check("shock_uniqueness", uniq.size, rate, thr, rate >= thr)


def _evolve_pairs(cfg, grid, fm, fp, theta_m, theta_p, ids, with_v=False, seed_offset=0, record_times=None):
    members = [fm, fp]
    slopes = [(theta_m, theta_m), (theta_p, theta_p)]
    if with_v:
        members.append(v_map(fm, fp))
        slopes.append((theta_m, theta_p))
    h0 = np.stack(members, axis=1)
    return evolve_ensemble(h0, grid, slopes, cfg.seed + seed_offset, ids, cfg.times[-1], cfg.scheme_config(),
                           record_times=record_times or cfg.times)


# --------------------------------------------------------------------------
# scenarios


def _run_stationary(cfg: ExperimentConfig, weighted: bool) -> EnsembleResult:
    th = cfg.theta
    grid = _grid(cfg, th, cfg.times[-1])
    ids = np.arange(cfg.replicas)
    ic = sample_nu_theta_batch(th, grid, cfg.seed, ids)
    run = _evolve_pairs(cfg, grid, ic["f_minus"], ic["f_plus"], -th, th, ids)
    j0, b, uniq, viol = _shock_series(run, grid)
    w = ic["weight"] if weighted else None
    res = EnsembleResult(cfg.to_dict(), run.times, j0, b, uniq, viol, w, _summaries(run.times, j0, b, w))
    # kept so tilted checks can reuse an unweighted run of the same ensemble
    res.extra["nu_weights"] = ic["weight"]
    res.extra["tail_converged"] = float(np.mean(ic["converged"]))
    res.extra["grid"] = {"dx": grid.dx, "n": grid.n, "half_width": grid.x_max, "dt": grid.dt}
    res.checks = tilted_checks(res, cfg) if weighted else stationary_checks(res, cfg)
    return res


def stationary_checks(res: EnsembleResult, cfg: ExperimentConfig) -> list:
    """Unweighted Gaussian-limit checks on a run started from the stationary pair law."""
    th = cfg.theta
    j0, b, T = res.j0, res.b, res.times
    n = j0.shape[0]
    checks = []
    tol = cfg.threshold("var_j0_rel")
    for k, t in enumerate(T):
        checks.append(_rel_check(f"var_j0_over_t@t={t:g}", n, j0[:, k].var(ddof=1) / t, 2 * th, tol))
    fit = fit_scaling([(t, spread(j0[:, k], "std")) for k, t in enumerate(T)])
    lo, hi = cfg.threshold("std_exponent_stationary")
    checks.append(_check("std_exponent_j0", n, fit.exponent, [lo, hi], lo <= fit.exponent <= hi, r2=fit.r2))
    ks = ks_distance(j0[:, -1] / math.sqrt(T[-1]), lambda v: gaussian_cdf(v, 0.0, 2 * th))
    checks.append(_check(f"ks_j0_normal@t={T[-1]:g}", n, ks, cfg.threshold("ks_j0_normal"),
                         ks < cfg.threshold("ks_j0_normal")))
    ok = np.isfinite(b[:, -1])
    checks.append(_rel_check(f"var_b_over_t@t={T[-1]:g}", int(ok.sum()), b[ok, -1].var(ddof=1) / T[-1],
                             1 / (2 * th), cfg.threshold("var_b_rel")))
    checks.append(_uniqueness_check(cfg, res.unique, b))
    growth = spread(j0[:, -1], "iqr") / spread(j0[:, 0], "iqr")
    checks.append(_check(f"iqr_growth_t{T[-1]:g}_over_t{T[0]:g}", n, growth, cfg.threshold("iqr_growth"),
                         growth >= cfg.threshold("iqr_growth"), predicted=math.sqrt(T[-1] / T[0])))
    res.extra["std_fit"] = asdict(fit)
    return checks


def tilted_checks(res: EnsembleResult, cfg: ExperimentConfig) -> list:
    """Importance-weighted checks for shock-tilted data.

    ``res`` must come from stationary pair data with ``res.weights`` set to
    the gap slope at the origin over ``2 theta``.  The weight mean is
    validated on the ensemble plus extra initial-data draws (up to
    ``options.weight_check_samples`` in total) from the same streams.
    """
    th = cfg.theta
    j0, b, T = res.j0, res.b, res.times
    w = res.weights if res.weights is not None else res.extra.get("nu_weights")
    if w is None:
        raise ValueError("tilted checks need importance weights")
    n = j0.shape[0]
    checks = []
    n_w = int(cfg.options.get("weight_check_samples", 100_000))
    extra_ids = np.arange(n, max(n, n_w))
    small = GridSpec.from_bounds(-2 * cfg.dx, 2 * cfg.dx, cfg.dx, cfg.dt_factor)
    more = sample_nu_theta_batch(th, small, cfg.seed, extra_ids)["weight"] if len(extra_ids) else np.empty(0)
    all_w = np.concatenate([w, more])
    mw = float(all_w.mean())
    valid = abs(mw - 1.0) <= cfg.threshold("mean_weight")
    checks.append(_check("mean_weight", len(all_w), mw, {"target": 1.0, "abs_tol": cfg.threshold("mean_weight")},
                         valid, ensemble_mean_weight=float(w.mean())))
    tol = cfg.threshold("weighted_var_rel")
    t = T[-1]
    checks.append(_rel_check(f"weighted_var_j0_over_t@t={t:g}", n, weighted_var(j0[:, -1], w) / t, 2 * th, tol,
                             valid_run=valid))
    ok = np.isfinite(b[:, -1])
    checks.append(_rel_check(f"weighted_var_b_over_t@t={t:g}", int(ok.sum()), weighted_var(b[ok, -1], w[ok]) / t,
                             1 / (2 * th), tol, valid_run=valid))
    checks.append(_uniqueness_check(cfg, res.unique, b))
    res.extra["effective_sample_size"] = float(w.sum() ** 2 / (w**2).sum())
    return checks


def _run_flat(cfg: ExperimentConfig) -> EnsembleResult:
    th = cfg.theta
    grid = _grid(cfg, th, cfg.times[-1])
    x = grid.x
    ids = np.arange(cfg.replicas)
    fm = np.broadcast_to(-th * x, (cfg.replicas, grid.n))
    fp = np.broadcast_to(th * x, (cfg.replicas, grid.n))
    run = _evolve_pairs(cfg, grid, fm, fp, -th, th, ids)
    j0, b, uniq, viol = _shock_series(run, grid)
    T = run.times
    res = EnsembleResult(cfg.to_dict(), T, j0, b, uniq, viol, None, _summaries(T, j0, b))
    res.extra["grid"] = {"dx": grid.dx, "n": grid.n, "half_width": grid.x_max, "dt": grid.dt}
    n = cfg.replicas
    fit = fit_scaling([(t, spread(j0[:, k], "std")) for k, t in enumerate(T)])
    lo, hi = cfg.threshold("std_exponent_flat")
    res.checks.append(_check("std_exponent_j0", n, fit.exponent, [lo, hi], lo <= fit.exponent <= hi, r2=fit.r2))
    res.extra["std_fit"] = asdict(fit)
    table = tw_goe_diff_table()
    ks = ks_distance(j0[:, -1] / T[-1] ** (1 / 3), table)
    res.checks.append(_check(f"ks_j0_tw_diff@t={T[-1]:g}", n, ks, cfg.threshold("ks_j0_flat"),
                             ks < cfg.threshold("ks_j0_flat")))
    m = j0[:, -1].mean()
    se = j0[:, -1].std(ddof=1) / math.sqrt(n)
    res.checks.append(_check(f"mean_j0_symmetry@t={T[-1]:g}", n, float(m / se), cfg.threshold("mean_j0_se"),
                             abs(m) <= cfg.threshold("mean_j0_se") * se, mean=float(m), se=float(se)))
    ok = np.isfinite(b[:, -1])
    ksb = ks_distance(b[ok, -1] / T[-1] ** (1 / 3), table.scaled(1.0 / (2.0 * th)))
    res.checks.append(_check(f"ks_b_tw_diff@t={T[-1]:g}", int(ok.sum()), ksb, cfg.threshold("ks_b_flat"),
                             ksb < cfg.threshold("ks_b_flat")))
    res.checks.append(_uniqueness_check(cfg, uniq, b))
    return res


def _shift_rows(h: np.ndarray, grid: GridSpec, bs: np.ndarray, slopes) -> np.ndarray:
    """Apply the shift-to-shock map to every replica row of ``h[replica, member, cell]``."""
    from .field import FieldState

    out = np.empty_like(h)
    for r in range(h.shape[0]):
        for m in range(h.shape[1]):
            f = FieldState(grid, h[r, m], 0.0, *slopes[m])
            out[r, m] = shift_profile(f, bs[r])
    return out


def _idempotence(cfg: ExperimentConfig, t_shift: float, t_end: float, n: int) -> tuple[dict, dict]:
    """Evolve stationary data to ``t_shift``; continue raw and shock-shifted copies to ``t_end``."""
    th = cfg.theta
    grid = _grid(cfg, th, t_end)
    ids = np.arange(n)
    ic = sample_nu_theta_batch(th, grid, cfg.seed, ids)
    sc = cfg.scheme_config()
    slopes = [(-th, -th), (th, th)]
    h0 = np.stack([ic["f_minus"], ic["f_plus"]], axis=1)
    first = evolve_ensemble(h0, grid, slopes, cfg.seed, ids, t_shift, sc)
    mid = first.h[:, -1]
    _, b1, u1, _ = _shock_series(first, grid)
    b1 = b1[:, -1]
    u1 = u1[:, -1]
    if not np.all(np.isfinite(b1)):
        raise ValueError("shock left the domain; increase half_width")
    shifted = _shift_rows(mid, grid, b1, slopes)
    dt = t_end - t_shift
    # the second leg uses a fresh noise seed; both copies see the same noise
    raw2 = evolve_ensemble(mid, grid, slopes, cfg.seed + 1, ids, dt, sc)
    sh2 = evolve_ensemble(shifted, grid, slopes, cfg.seed + 1, ids, dt, sc)
    _, braw, uraw, _ = _shock_series(raw2, grid)
    _, bsh, ush, _ = _shock_series(sh2, grid)
    inc_raw = braw[:, -1] - b1
    inc_sh = bsh[:, -1]
    ok = np.isfinite(inc_raw) & np.isfinite(inc_sh)
    ks = ks_two_sample(inc_raw[ok], inc_sh[ok])
    thr = cfg.threshold("idempotence_ks")
    chk = _check(f"idempotence_b_increment_ks@t={t_shift:g}->{t_end:g}", int(ok.sum()), ks, thr, ks < thr)
    info = {"b_shift": b1, "inc_raw": inc_raw, "inc_shifted": inc_sh,
            "unique_rate": float(np.mean(np.concatenate([u1, uraw[:, -1], ush[:, -1]])))}
    return chk, info


def _run_shock_frame(cfg: ExperimentConfig) -> EnsembleResult:
    t_shift, t_end = cfg.times
    chk, info = _idempotence(cfg, t_shift, t_end, cfg.replicas)
    res = EnsembleResult(cfg.to_dict(), np.array([t_shift, t_end]))
    res.checks.append(chk)
    thr = cfg.threshold("uniqueness")
    res.checks.append(_check("shock_uniqueness", 3 * cfg.replicas, info["unique_rate"], thr,
                             info["unique_rate"] >= thr))
    res.extra.update({k: v for k, v in info.items() if k != "unique_rate"})
    return res


def _run_shear(cfg: ExperimentConfig) -> EnsembleResult:
    t1 = float(cfg.options["theta1"])
    t2 = float(cfg.options["theta2"])
    T = cfg.times
    v_pred = -(t1 + t2) / 2.0
    slope = max(abs(t1), abs(t2))
    if cfg.half_width is None:
        L = abs(v_pred) * T[-1] + 12.0 * max(1.0, math.sqrt(T[-1])) + slope * T[-1]
    else:
        L = cfg.half_width
    grid = GridSpec.symmetric(L, cfg.dx, cfg.dt_factor)
    x = grid.x
    ids = np.arange(cfg.replicas)
    fm = np.broadcast_to(t1 * x, (cfg.replicas, grid.n))
    fp = np.broadcast_to(t2 * x, (cfg.replicas, grid.n))
    run = _evolve_pairs(cfg, grid, fm, fp, t1, t2, ids)
    j0, b, uniq, viol = _shock_series(run, grid)
    res = EnsembleResult(cfg.to_dict(), run.times, j0, b, uniq, viol, None, _summaries(run.times, j0, b))
    lo = float(cfg.options.get("fit_from", 1.0))
    hi = float(cfg.options.get("fit_to", 8.0))
    sel = (run.times >= lo - 1e-9) & (run.times <= hi + 1e-9)
    tt = np.repeat(run.times[sel][None], cfg.replicas, axis=0).ravel()
    bb = b[:, sel].ravel()
    ok = np.isfinite(bb)
    v = float(np.polyfit(tt[ok], bb[ok], 1)[0])
    res.checks.append(_check("shock_velocity", int(ok.sum()), v, {"target": v_pred, "abs_tol": cfg.threshold("velocity")},
                             abs(v - v_pred) <= cfg.threshold("velocity")))
    res.checks.append(_uniqueness_check(cfg, uniq, b))
    tw_theta = float(cfg.options.get("twin_theta", 1.0))
    tw_t = float(cfg.options.get("twin_t", 2.0))
    tw_n = int(cfg.options.get("twin_replicas", 400))
    probes = cfg.options.get("twin_probes", [0.0])
    twin = shear_twin_check(tw_theta, StreamKey(cfg.seed + 7, 0), tw_t, cfg.scheme_config(),
                            grid=GridSpec.symmetric(default_half_width(tw_theta, tw_t) + max(map(abs, probes)),
                                                    cfg.dx, cfg.dt_factor),
                            n_replicas=tw_n, probe_x=probes)
    thr = cfg.threshold("shear_twin_ks")
    res.checks.append(_check(f"shear_twin_ks@theta={tw_theta:g},t={tw_t:g}", tw_n, twin["statistic"], thr,
                             twin["statistic"] < thr, pvalue=twin["pvalue"]))
    res.extra["shear_twin"] = twin
    res.extra["velocity_fit_window"] = [lo, hi]
    return res


def _run_v_mixture(cfg: ExperimentConfig) -> EnsembleResult:
    th = cfg.theta
    grid = _grid(cfg, th, cfg.times[-1])
    x = grid.x
    pair = a_split(th * np.abs(x), th, grid)
    ids = np.arange(cfg.replicas)
    fm = np.broadcast_to(pair.f_minus, (cfg.replicas, grid.n))
    fp = np.broadcast_to(pair.f_plus, (cfg.replicas, grid.n))
    run = _evolve_pairs(cfg, grid, fm, fp, -th, th, ids, with_v=True)
    rng = np.random.default_rng([int(cfg.seed), 0x5EED])
    pick = rng.integers(0, len(run.times), size=cfg.replicas)
    o = grid.origin_index
    plus = np.zeros(cfg.replicas, dtype=bool)
    violations = 0
    dev_max = 0.0
    for r in range(cfg.replicas):
        hm, hp, hv = run.h[r, pick[r]]
        J0 = hp[o] - hm[o]
        plus[r] = J0 >= 0
        side = slice(o, None) if plus[r] else slice(0, o + 1)
        ref = hp if plus[r] else hm
        dev = np.abs((hv[side] - hv[o]) - (ref[side] - ref[o]))
        dev_max = max(dev_max, float(dev.max()))
        violations += int(np.count_nonzero(dev > math.log(2.0) + 1e-9))
    j0, b, uniq, viol = _shock_series(run, grid)
    res = EnsembleResult(cfg.to_dict(), run.times, j0, b, uniq, viol, None, _summaries(run.times, j0, b))
    zeta = float(plus.mean())
    res.extra.update({"diagnostic": True, "zeta_plus_fraction": zeta, "zeta_predicted": 0.5,
                      "zeta_se": math.sqrt(0.25 / cfg.replicas), "picked_times": run.times[pick].tolist(),
                      "sandwich_max_deviation": dev_max,
                      "v_identity_max_error": float(np.max(np.abs(run.h[:, :, 2] - v_map(run.h[:, :, 0], run.h[:, :, 1]))))})
    res.checks.append(_check("log2_sandwich_violations", cfg.replicas, violations,
                             cfg.threshold("sandwich_violations"), violations <= cfg.threshold("sandwich_violations")))
    return res


def _run_halfline(cfg: ExperimentConfig) -> EnsembleResult:
    th = cfg.theta
    T = cfg.times
    sc = cfg.scheme_config()
    res = EnsembleResult(cfg.to_dict(), np.array(T))
    probes = [math.sqrt(t) for t in T]
    xmax = max(probes)
    L = cfg.half_width if cfg.half_width is not None else th * T[-1] + 12.0 * max(1.0, math.sqrt(T[-1])) + xmax
    gh = halfline_grid(1, L, cfg.dx, cfg.dt_factor)
    gf = GridSpec.from_bounds(-float(cfg.options.get("full_left", 6.0 * max(1.0, math.sqrt(T[-1])))), L,
                             cfg.dx, cfg.dt_factor)

    # zero-noise check against the closed form at every record time
    zn = SchemeConfig(scheme=cfg.scheme, noise=False)
    half0 = evolve_halfline_ensemble(th, 1, gh, cfg.seed, [0], T[-1], zn, record_times=T)
    full0 = evolve_ensemble(th * gf.x[None, None], gf, [(th, th)], cfg.seed, [0], T[-1], zn, record_times=T)
    errs = []
    zt = [t for t in T if t >= float(cfg.options.get("zero_noise_min_t", 4.0))] or T
    for k, t in enumerate(half0.times):
        if not any(abs(t - s) < 1e-9 for s in zt):
            continue
        xp = probes[k]
        ratio = math.exp(half0.h[0, k, 0, gh.index_of(xp)] - full0.h[0, k, 0, gf.index_of(xp)])
        errs.append(abs(ratio - zero_noise_ratio(th, t, xp)))
    thr = cfg.threshold("zero_noise_ratio")
    res.checks.append(_check("zero_noise_ratio_error", len(errs), float(max(errs)), thr, max(errs) <= thr,
                             times=zt))

    ids = np.arange(cfg.replicas)
    half = evolve_halfline_ensemble(th, 1, gh, cfg.seed, ids, T[-1], sc, record_times=T)
    full = evolve_ensemble(np.broadcast_to(th * gf.x, (cfg.replicas, 1, gf.n)), gf, [(th, th)], cfg.seed, ids,
                           T[-1], sc, record_times=T)
    ratios = np.empty((cfg.replicas, len(T)))
    for k, xp in enumerate(probes):
        ratios[:, k] = np.exp(half.h[:, k, 0, gh.index_of(xp)] - full.h[:, k, 0, gf.index_of(xp)])
    med = np.median(ratios, axis=0)
    mono = bool(np.all(np.diff(med) > 0))
    res.checks.append(_check("median_ratio_increasing", cfg.replicas, med.tolist(), "strictly increasing", mono))
    res.checks.append(_check("ratio_upper_bound", ratios.size, float(ratios.max()), 1.0 + 1e-6,
                             float(ratios.max()) <= 1.0 + 1e-6))
    res.extra["ratios"] = ratios
    res.extra["probes"] = probes
    res.extra["zero_noise_closed_form"] = [zero_noise_ratio(th, t, xp) for t, xp in zip(T, probes)]

    # opposite half-lines see disjoint noise cells
    tc = float(cfg.options.get("corr_t", 1.0))
    nc = int(cfg.options.get("corr_replicas", 4000))
    xc = math.sqrt(tc)
    Lc = th * tc + 12.0 * max(1.0, math.sqrt(tc)) + xc
    gp = halfline_grid(1, Lc, cfg.dx, cfg.dt_factor)
    gm = halfline_grid(-1, Lc, cfg.dx, cfg.dt_factor)
    cid = np.arange(nc)
    rp = evolve_halfline_ensemble(th, 1, gp, cfg.seed + 3, cid, tc, sc)
    rm = evolve_halfline_ensemble(th, -1, gm, cfg.seed + 3, cid, tc, sc)
    a = rp.h[:, -1, 0, gp.index_of(xc)]
    c = rm.h[:, -1, 0, gm.index_of(-xc)]
    corr = float(np.corrcoef(a, c)[0, 1])
    thr = cfg.threshold("cross_corr")
    res.checks.append(_check(f"cross_side_log_correlation@t={tc:g}", nc, corr, thr, abs(corr) <= thr,
                             se=1.0 / math.sqrt(nc)))
    return res


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> EnsembleResult:
    """Run one scenario; write outputs when ``cfg.output_dir`` is set and ``write`` is True."""
    cfg.validate()
    runner = {
        "stationary": lambda c: _run_stationary(c, False),
        "tilted": lambda c: _run_stationary(c, True),
        "flat": _run_flat,
        "shock-frame": _run_shock_frame,
        "shear": _run_shear,
        "v-mixture": _run_v_mixture,
        "halfline-ratio": _run_halfline,
    }[cfg.scenario]
    res = runner(cfg)
    res.extra["target"] = TARGETS[cfg.scenario]
    if write and cfg.output_dir:
        write_outputs(res, cfg)
    return res


# --------------------------------------------------------------------------
# invariance battery


def _pooled_increments(h: np.ndarray, grid: GridSpec, starts, length: float = 1.0) -> np.ndarray:
    k = int(round(length / grid.dx))
    idx = [grid.index_of(s) for s in starts]
    return np.concatenate([h[:, i + k] - h[:, i] for i in idx])


def _local_slopes(J: np.ndarray, grid: GridSpec, centres, half: int = 2) -> np.ndarray:
    """Least-squares slope of ``J`` over ``2 * half + 1`` cells around each centre."""
    offs = np.arange(-half, half + 1) * grid.dx
    out = []
    for c in centres:
        i = grid.index_of(c)
        seg = J[:, i - half: i + half + 1]
        out.append(seg @ offs / (offs @ offs))
    return np.concatenate(out)


def run_invariance_suite(cfg: ExperimentConfig | None = None, *, t: float = 1.0, n_stationarity: int = 500,
                         n_idempotence: int = 400, starts=(-6.0, -3.0, 0.0, 3.0),
                         slope_centres=(-6.0, -3.0, 0.0, 3.0, 6.0)) -> dict:
    """Fixed-time stationarity checks plus the shift-to-shock idempotence check.

    Increment laws of ``h_minus``, ``h_plus`` (and the gap for stationary pairs)
    over unit intervals starting at ``starts`` are pooled and compared between
    ``t = 0`` and ``t`` by two-sample KS.  The gap slope at ``t``, from a
    5-cell least-squares fit, is compared with Gamma(2 theta, 1).
    """
    cfg = cfg or ExperimentConfig(scenario="stationary", times=[t, 2 * t], replicas=n_stationarity)
    th = cfg.theta
    grid = _grid(cfg, th, t)
    ids = np.arange(n_stationarity)
    sc = cfg.scheme_config()
    slopes = [(-th, -th), (th, th)]
    checks = []
    thr = cfg.threshold("stationarity_ks")
    for law, sampler in (("mu", sample_mu_theta_batch), ("nu", sample_nu_theta_batch)):
        ic = sampler(th, grid, cfg.seed, ids)
        h0 = np.stack([ic["f_minus"], ic["f_plus"]], axis=1)
        run = evolve_ensemble(h0, grid, slopes, cfg.seed, ids, t, sc)
        ht = run.h[:, -1]
        parts = {"h_minus": 0, "h_plus": 1}
        stats = {}
        for name, m in parts.items():
            stats[name] = ks_two_sample(_pooled_increments(h0[:, m], grid, starts),
                                        _pooled_increments(ht[:, m], grid, starts))
        if law == "nu":
            stats["gap"] = ks_two_sample(_pooled_increments(h0[:, 1] - h0[:, 0], grid, starts),
                                         _pooled_increments(ht[:, 1] - ht[:, 0], grid, starts))
            slopes_t = _local_slopes(ht[:, 1] - ht[:, 0], grid, slope_centres)
            ks_g = ks_distance(slopes_t, lambda v: gamma_cdf(v, 2 * th, 1.0))
            checks.append(_check(f"gap_slope_gamma_ks@t={t:g}", len(slopes_t), ks_g, cfg.threshold("gamma_ks"),
                                 ks_g < cfg.threshold("gamma_ks")))
        worst = max(stats.values())
        checks.append(_check(f"{law}_increment_stationarity_ks@t={t:g}", n_stationarity, worst, thr, worst < thr,
                             components=stats, pooled_starts=list(starts)))
    chk, _ = _idempotence(cfg, t, 2 * t, n_idempotence)
    checks.append(chk)
    return {"theta": th, "t": t, "dx": grid.dx, "checks": checks, "pass": all(c["pass"] for c in checks)}


# --------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


_BULK = ("ratios", "b_shift", "inc_raw", "inc_shifted", "nu_weights")


def write_outputs(res: EnsembleResult, cfg: ExperimentConfig) -> list:
    """Write ``manifest.json``, ``summary.json``, ``samples/*.csv`` and ``plots/*.svg``."""
    out = Path(cfg.output_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    files = []
    head = {"scenario": cfg.scenario, "target": TARGETS[cfg.scenario], "theta": cfg.theta, "dx": cfg.dx,
            "dt_factor": cfg.dt_factor, "seed": cfg.seed}
    if res.b is not None:
        p = out / "samples" / "shock_trace.csv"
        write_shock_trace(p, res.shock_records(), head)
        files.append(p)
        if res.weights is not None:
            p = out / "samples" / "weights.csv"
            with p.open("w") as fh:
                for k, v in head.items():
                    fh.write(f"# {k}: {v}\n")
                fh.write("replica,weight\n")
                for r, w in enumerate(res.weights):
                    fh.write(f"{r},{float(w)!r}\n")
            files.append(p)
    if "ratios" in res.extra:
        from .halfline import write_ratio_csv

        rows = [(r, t, xp, res.extra["ratios"][r, k]) for r in range(res.extra["ratios"].shape[0])
                for k, (t, xp) in enumerate(zip(res.times, res.extra["probes"]))]
        p = out / "samples" / "ratios.csv"
        write_ratio_csv(p, rows, head)
        files.append(p)
    summary = {"scenario": cfg.scenario, "target": TARGETS[cfg.scenario], "pass": res.passed,
               "checks": res.checks, "per_time": res.per_time,
               "seed": cfg.seed,
               "extra": {k: v for k, v in res.extra.items() if k not in _BULK}}
    p = out / "summary.json"
    p.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    files.append(p)
    if cfg.plots:
        from .plots import emit_plots

        files.extend(emit_plots(res, out / "plots"))
    manifest = {"package": "kpz_shock_lab", "version": __version__, "config": cfg.to_dict(),
                "target": TARGETS[cfg.scenario], "files": sorted(str(f.relative_to(out)) for f in files)}
    p = out / "manifest.json"
    p.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    res.files = [str(f) for f in files] + [str(p)]
    return res.files

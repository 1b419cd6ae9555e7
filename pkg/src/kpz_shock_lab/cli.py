"""Command line entry point ``kpz-shock-lab``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .field import CoupledState, GridSpec, default_half_width, validate_space, write_snapshot

LAWS = ("mu", "nu", "nu-hat", "flat", "v-abs")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _grid_arg(text: str) -> tuple:
    parts = _floats(text.replace(":", ","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be x_min:x_max:dx")
    return tuple(parts)


def _header(args, extra=None) -> dict:
    meta = {"seed": args.seed, "version": __version__}
    meta.update(extra or {})
    return meta


def _write_json(path: Path, data) -> None:
    from .experiments import _jsonable

    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# sample


def _initial_pairs(law: str, theta: float, grid: GridSpec, seed: int, ids) -> dict:
    from .samplers import a_split, flat_pair, sample_mu_theta_batch, sample_nu_theta_batch, v_abs_profile

    if law in ("nu", "nu-hat"):
        return sample_nu_theta_batch(theta, grid, seed, ids)
    if law == "mu":
        out = sample_mu_theta_batch(theta, grid, seed, ids)
        return {"f_minus": out["f_minus"], "f_plus": out["f_plus"]}
    pair = flat_pair(theta, grid) if law == "flat" else a_split(v_abs_profile(theta, grid).values, theta, grid)
    n = len(ids)
    return {"f_minus": np.repeat(pair.f_minus[None], n, 0), "f_plus": np.repeat(pair.f_plus[None], n, 0)}


_TARGET = {
    "mu": "independent Brownian profiles with drifts -theta and +theta",
    "nu": "jointly stationary pair law; gap slope at 0 is Gamma(2 theta, 1)",
    "nu-hat": "shock-tilted pair law, realised as the stationary law with weights (gap slope at 0)/(2 theta)",
    "flat": "deterministic pair (-theta x, theta x)",
    "v-abs": "split of theta|x| into a pair whose V-combination is theta|x|",
}


def cmd_sample(args) -> int:
    x_min, x_max, dx = args.grid
    grid = GridSpec.from_bounds(x_min, x_max, dx)
    ids = np.arange(args.n_samples)
    data = _initial_pairs(args.law, args.theta, grid, args.seed, ids)
    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    meta = _header(args, {"law": args.law, "theta": args.theta, "target": _TARGET[args.law]})
    reports = []
    for i in range(args.n_samples):
        st = CoupledState.from_arrays(grid, data["f_minus"][i], data["f_plus"][i], args.theta)
        m = dict(meta, sample=i)
        if "weight" in data:
            m.update(weight=float(data["weight"][i]), gap_derivative0=float(data["deriv0"][i]))
        write_snapshot(out / "samples" / f"sample_{i:05d}.csv", st, m)
        if args.law in ("mu", "nu", "nu-hat"):
            reports.append(validate_space(st, "Y" if args.law == "mu" else "Y0", args.theta).as_dict())
    summary = {"law": args.law, "theta": args.theta, "seed": args.seed, "n_samples": args.n_samples,
               "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "dx": grid.dx}, "target": _TARGET[args.law]}
    if "weight" in data:
        summary["weights"] = data["weight"]
        summary["gap_derivative0"] = data["deriv0"]
        summary["mean_weight"] = float(np.mean(data["weight"]))
    if reports:
        summary["validation"] = reports
    _write_json(out / "summary.json", summary)
    print(f"wrote {args.n_samples} samples to {out}")
    return 0


# --------------------------------------------------------------------------
# evolve


def _scheme(args, noise=True):
    from .solver import SchemeConfig

    return SchemeConfig(scheme=args.scheme, noise=noise, n_jobs=args.jobs)


def cmd_evolve(args) -> int:
    from .shock import ShockRecord, find_shock_profiles, write_shock_trace
    from .solver import evolve_ensemble

    th = args.theta
    record = _floats(args.record) if args.record else [args.t_end]
    L = args.half_width or default_half_width(th, args.t_end)
    grid = GridSpec.symmetric(L, args.dx, args.dt_factor)
    ids = np.arange(args.replicas)
    ic = _initial_pairs(args.law, th, grid, args.seed, ids)
    h0 = np.stack([ic["f_minus"], ic["f_plus"]], axis=1)
    slopes = [(-th, -th), (th, th)]
    run = evolve_ensemble(h0, grid, slopes, args.seed, ids, args.t_end, _scheme(args), record_times=record)
    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    meta = _header(args, {"law": args.law, "theta": th, "scheme": args.scheme})
    files = []
    records = []
    for k, t in enumerate(run.times):
        J = run.h[:, k, 1] - run.h[:, k, 0]
        b, uniq, viol = find_shock_profiles(J, grid)
        for r in range(args.replicas):
            st = CoupledState.from_arrays(grid, run.h[r, k, 0], run.h[r, k, 1], th, t=float(t))
            p = out / "samples" / f"snapshot_r{r:04d}_t{t:g}.csv"
            write_snapshot(p, st, dict(meta, replica=r))
            files.append(p.name)
            records.append(ShockRecord(float(t), float(b[r]), float(J[r, grid.origin_index]), bool(uniq[r]),
                                       int(viol[r]), r))
    write_shock_trace(out / "samples" / "shock_trace.csv", records, meta)
    manifest = {"command": "evolve", "version": __version__, "parameters": vars(args) | {"record": record},
                "grid": {"dx": grid.dx, "n": grid.n, "dt": run.meta["dt"], "half_width": L},
                "files": sorted(files) + ["shock_trace.csv"]}
    manifest["parameters"].pop("func", None)
    _write_json(out / "manifest.json", manifest)
    print(f"evolved {args.replicas} replicas to t={args.t_end:g}; outputs in {out}")
    return 0


# --------------------------------------------------------------------------
# halfline


def cmd_halfline(args) -> int:
    from .halfline import evolve_halfline_ensemble, halfline_grid, write_ratio_csv
    from .solver import evolve_ensemble

    th = args.theta
    side = args.side
    record = _floats(args.record) if args.record else [args.t_end]
    probes = _floats(args.probe_x)
    if any(side * x <= 0 for x in probes):
        raise SystemExit("probe positions must lie strictly inside the half-line")
    reach = th * args.t_end + 12.0 * max(1.0, args.t_end**0.5) + max(abs(x) for x in probes)
    L = args.half_width or reach
    gh = halfline_grid(side, L, args.dx, args.dt_factor)
    far = 6.0 * max(1.0, args.t_end**0.5)
    gf = GridSpec.from_bounds(-far, L, args.dx, args.dt_factor) if side > 0 else \
        GridSpec.from_bounds(-L, far, args.dx, args.dt_factor)
    ids = np.arange(args.replicas)
    sc = _scheme(args)
    half = evolve_halfline_ensemble(th, side, gh, args.seed, ids, args.t_end, sc, record_times=record)
    h0 = np.broadcast_to(side * th * gf.x, (args.replicas, 1, gf.n))
    full = evolve_ensemble(h0, gf, [(side * th, side * th)], args.seed, ids, args.t_end, sc, record_times=record)
    rows = []
    for k, t in enumerate(half.times):
        for x in probes:
            lr = half.h[:, k, 0, gh.index_of(x)] - full.h[:, k, 0, gf.index_of(x)]
            rows.extend((r, t, x, float(np.exp(v))) for r, v in enumerate(lr))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = _header(args, {"theta": th, "side": side,
                          "target": "ratio of the half-line (absorbing wall at 0) to the full-line solution"})
    write_ratio_csv(out / "ratios.csv", rows, meta)
    params = vars(args) | {"record": record, "probe_x": probes}
    params.pop("func", None)
    _write_json(out / "manifest.json", {"command": "halfline", "version": __version__, "parameters": params,
                                        "files": ["ratios.csv"]})
    print(f"wrote {len(rows)} ratios to {out / 'ratios.csv'}")
    return 0


# --------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    from .experiments import ConfigError, load_config, run_experiment, run_invariance_suite

    try:
        cfg = load_config(args.config, seed=args.seed, replicas=args.replicas, output_dir=args.output_dir,
                          **({"scenario": "stationary"} if args.action == "invariance" and not args.config else {}))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.action == "invariance":
        report = run_invariance_suite(cfg, t=args.t)
        if cfg.output_dir:
            Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
            _write_json(Path(cfg.output_dir) / "invariance.json", report)
        checks, ok = report["checks"], report["pass"]
    else:
        res = run_experiment(cfg)
        checks, ok = res.checks, res.passed
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['test']}  statistic={c['statistic']}  threshold={c['threshold']}")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# stats


def _read_column(path, column: str) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    names = lines[0].split(",")
    if column not in names:
        raise SystemExit(f"column {column!r} not in {names}")
    j = names.index(column)
    vals = np.array([float(ln.split(",")[j]) for ln in lines[1:]])
    return vals[np.isfinite(vals)]


def cmd_stats(args) -> int:
    from . import stats

    if args.action == "tables":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        base = stats.build_tw_goe_table()
        base.write_csv(out / "tw_goe.csv")
        stats.build_diff_table(base).write_csv(out / "tw_goe_half_diff.csv")
        print(f"wrote tables to {out}")
        return 0
    x = _read_column(args.sample, args.column) * args.scale
    ref = args.ref
    if ref == "normal":
        cdf = lambda v: stats.gaussian_cdf(v, 0.0, args.param)  # noqa: E731
    elif ref == "gamma":
        cdf = lambda v: stats.gamma_cdf(v, args.param, 1.0)  # noqa: E731
    elif ref == "tw-goe":
        cdf = stats.tw_goe_table()
    else:
        cdf = stats.tw_goe_diff_table().scaled(args.param)
    d = stats.ks_distance(x, cdf)
    print(json.dumps({"n": len(x), "ks": d, "reference": ref, "param": args.param}))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpz-shock-lab", description="KPZ shock ensembles via the stochastic heat equation")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample initial pair data")
    s.add_argument("--law", choices=LAWS, required=True)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--grid", type=_grid_arg, default=(-10.0, 10.0, 0.05), help="x_min:x_max:dx")
    s.add_argument("--n-samples", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="samples_out")
    s.set_defaults(func=cmd_sample)

    def evolve_flags(q):
        q.add_argument("--theta", type=float, default=1.0)
        q.add_argument("--t-end", type=float, required=True)
        q.add_argument("--dx", type=float, default=0.05)
        q.add_argument("--dt-factor", type=float, default=0.4)
        q.add_argument("--record", default="", help="comma separated record times")
        q.add_argument("--scheme", choices=("split-exponential", "explicit-euler"), default="split-exponential")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--replicas", type=int, default=1)
        q.add_argument("--half-width", type=float, default=None)
        q.add_argument("--jobs", type=int, default=1)
        q.add_argument("--out", default="evolve_out")

    e = sub.add_parser("evolve", help="evolve pair data with common noise")
    evolve_flags(e)
    e.add_argument("--law", choices=LAWS, default="nu")
    e.set_defaults(func=cmd_evolve)

    h = sub.add_parser("halfline", help="half-line versus full-line ratio")
    evolve_flags(h)
    h.add_argument("--probe-x", default="1.0", help="comma separated probe positions")
    h.add_argument("--side", type=int, choices=(1, -1), default=1)
    h.set_defaults(func=cmd_halfline, out="halfline_out")

    x = sub.add_parser("experiment", help="config-driven experiments")
    x.add_argument("action", choices=("run", "invariance"))
    x.add_argument("--config", default=None)
    x.add_argument("--seed", type=int, default=None)
    x.add_argument("--replicas", type=int, default=None)
    x.add_argument("--output-dir", default=None)
    x.add_argument("--t", type=float, default=1.0, help="time for the invariance battery")
    x.set_defaults(func=cmd_experiment)

    st = sub.add_parser("stats", help="goodness of fit and reference tables")
    st.add_argument("action", choices=("ks", "tables"))
    st.add_argument("--sample", help="CSV file")
    st.add_argument("--column", default="j0")
    st.add_argument("--scale", type=float, default=1.0, help="multiply the sample before testing")
    st.add_argument("--ref", choices=("normal", "gamma", "tw-goe", "tw-diff"), default="normal")
    st.add_argument("--param", type=float, default=1.0, help="variance, Gamma shape, or diff-table scale")
    st.add_argument("--out", default="tables")
    st.set_defaults(func=cmd_stats)
    return p


def _join_negative_values(argv):
    # "--grid -3:3:0.1" would otherwise be read as an option
    out = []
    for a in argv:
        if out and out[-1] == "--grid" and a.startswith("-") and ":" in a:
            out[-1] = f"--grid={a}"
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    if args.command == "experiment" and args.action == "run" and not args.config:
        print("experiment run needs --config", file=sys.stderr)
        return 2
    try:
        return int(args.func(args) or 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

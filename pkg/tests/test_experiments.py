import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from kpz_shock_lab.experiments import (SCENARIOS, TARGETS, ConfigError, ExperimentConfig, load_config,
                                       run_experiment, run_invariance_suite)
from kpz_shock_lab.plots import ecdf_overlay, scaling_plot, spaghetti
from kpz_shock_lab.stats import gaussian_cdf

SMALL = dict(theta=1.0, dx=0.1, replicas=12, seed=5, half_width=10.0)


def small(scenario, **kw):
    args = dict(SMALL, scenario=scenario)
    args.update(kw)
    return ExperimentConfig(**args)


def test_every_scenario_has_a_target():
    assert set(TARGETS) == set(SCENARIOS)


@pytest.mark.parametrize("kw", [
    dict(scenario="nope"),
    dict(scenario="stationary", theta=-1.0),
    dict(scenario="stationary", times=[1.0]),
    dict(scenario="stationary", replicas=1),
    dict(scenario="stationary", dt_factor=0.6),
    dict(scenario="stationary", thresholds={"bogus": 1}),
    dict(scenario="shear"),
    dict(scenario="shear", options={"theta1": 1.0, "theta2": 0.5}),
    dict(scenario="shock-frame", times=[1.0, 2.0, 3.0]),
    dict(scenario="shear", times=[0.2, 0.4], options={"theta1": 0.5, "theta2": 1.5}),
])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_load_config_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scenario": "flat", "replicas": 50, "seed": 1}))
    cfg = load_config(p, seed=9, replicas=None)
    assert (cfg.seed, cfg.replicas, cfg.times) == (9, 50, [4.0, 8.0, 16.0])
    p.write_text(json.dumps({"scenario": "flat", "colour": "red"}))
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(None)


def _tree(root: Path) -> dict:
    return {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.is_file()}


def test_output_tree_is_bit_identical(tmp_path):
    out = tmp_path / "run"
    cfg = small("stationary", times=[0.2, 0.4], output_dir=str(out))
    res = run_experiment(cfg)
    first = _tree(out)
    shutil.rmtree(out)
    run_experiment(small("stationary", times=[0.2, 0.4], output_dir=str(out)))
    assert _tree(out) == first
    assert {"manifest.json", "summary.json", "samples/shock_trace.csv"} <= set(first)
    assert any(k.startswith("plots/") and k.endswith(".svg") for k in first)
    man = json.loads(first["manifest.json"])
    assert man["config"]["seed"] == 5 and man["config"]["replicas"] == 12
    assert man["target"] == TARGETS["stationary"]
    summ = json.loads(first["summary.json"])
    assert summ["pass"] == res.passed
    assert all({"test", "n", "statistic", "threshold", "pass"} <= set(c) for c in summ["checks"])
    # replica count matches the config; no weighted summaries outside the tilted scenario
    assert res.j0.shape == (12, 2) and res.weights is None
    assert all("j0_var_weighted" not in s for s in res.per_time)


def test_tilted_run_has_weights():
    res = run_experiment(small("tilted", times=[0.2, 0.4], options={"weight_check_samples": 2000}), write=False)
    assert res.weights is not None and res.weights.shape == (12,)
    assert all("j0_var_weighted" in s for s in res.per_time)
    assert any("weight" in c["test"] for c in res.checks)


def test_seed_changes_results():
    a = run_experiment(small("stationary", times=[0.2, 0.4]), write=False)
    b = run_experiment(small("stationary", times=[0.2, 0.4], seed=6), write=False)
    assert not np.array_equal(a.j0, b.j0)


@pytest.mark.parametrize("scenario,kw", [
    ("flat", dict(times=[0.2, 0.4])),
    ("shock-frame", dict(times=[0.2, 0.4])),
    ("shear", dict(times=[0.2, 0.4], options={"theta1": 0.5, "theta2": 1.5, "fit_from": 0.2, "twin_replicas": 12, "twin_t": 0.2})),
    ("v-mixture", dict(times=[0.2, 0.4])),
    ("halfline-ratio", dict(times=[0.2, 0.4], options={"corr_replicas": 30, "corr_t": 0.2})),
])
def test_small_runs_complete(tmp_path, scenario, kw):
    res = run_experiment(small(scenario, output_dir=str(tmp_path), **kw))
    assert res.checks
    assert (tmp_path / "manifest.json").exists()
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["scenario"] == scenario


def test_invariance_suite_small():
    cfg = small("stationary", times=[0.2, 0.4], half_width=8.0)
    res = run_invariance_suite(cfg, t=0.2, n_stationarity=30, n_idempotence=20)
    names = {c["test"] for c in res["checks"]}
    assert any("idempotence" in n for n in names)
    assert any("gamma" in n for n in names)


def test_plots_refuse_empty_input(tmp_path):
    with pytest.raises(ValueError):
        ecdf_overlay([], gaussian_cdf, tmp_path / "a.svg")
    with pytest.raises(ValueError):
        spaghetti([], np.empty((0, 0)), tmp_path / "b.svg")
    with pytest.raises(ValueError):
        scaling_plot([], [], tmp_path / "c.svg")


def test_svg_bytes_are_reproducible(tmp_path):
    x = np.linspace(-2, 2, 50)
    a = ecdf_overlay(x, gaussian_cdf, tmp_path / "a.svg", "t")
    b = ecdf_overlay(x, gaussian_cdf, tmp_path / "b.svg", "t")
    assert a.read_bytes() == b.read_bytes()


def test_shipped_configs_load():
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for p in paths:
        cfg = load_config(p)
        assert cfg.output_dir

"""Deterministic SVG figures for experiment outputs.

Figures are written with a fixed SVG hash salt and no date metadata, so the
same data produce byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stats import fit_scaling, gaussian_cdf, spread, tw_goe_diff_table  # noqa: E402

__all__ = ["ecdf_overlay", "scaling_plot", "spaghetti", "emit_plots"]

_RC = {"svg.hashsalt": "kpz-shock-lab", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _nonempty(a, what):
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    if a.size == 0:
        raise ValueError(f"cannot plot an empty {what}")
    return a


def ecdf_overlay(sample, cdf, path, title: str = "", xlabel: str = "") -> Path:
    """Empirical CDF of ``sample`` against a reference CDF callable."""
    xs = np.sort(_nonempty(sample, "sample"))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.step(xs, np.arange(1, len(xs) + 1) / len(xs), where="post", label=f"empirical (n={len(xs)})")
        pad = 0.1 * (xs[-1] - xs[0] + 1e-12)
        grid = np.linspace(xs[0] - pad, xs[-1] + pad, 400)
        ax.plot(grid, cdf(grid), "--", label="reference")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("CDF")
        ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def scaling_plot(times, samples, path, title: str = "", reference_exponent: float | None = None) -> Path:
    """Log-log spread against time with the fitted power law."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("cannot plot an empty ensemble")
    sd = [spread(_nonempty(s, "sample"), "std") for s in samples]
    fit = fit_scaling(zip(times, sd))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.loglog(times, sd, "o", label="std")
        tt = np.geomspace(times.min(), times.max(), 50)
        ax.loglog(tt, fit.prefactor * tt**fit.exponent, "-", label=f"fit exponent {fit.exponent:.3f}")
        if reference_exponent is not None:
            c = sd[0] / times[0] ** reference_exponent
            ax.loglog(tt, c * tt**reference_exponent, ":", label=f"exponent {reference_exponent:g}")
        ax.set_xlabel("t")
        ax.set_ylabel("spread")
        ax.set_title(title)
        ax.legend(loc="upper left")
        fig.tight_layout()
        return _save(fig, path)


def spaghetti(times, paths, path, title: str = "", max_paths: int = 50, guide_velocity: float | None = None) -> Path:
    """Per-replica traces ``paths[replica, time]``."""
    paths = np.asarray(paths, dtype=float)
    if paths.size == 0:
        raise ValueError("cannot plot an empty ensemble")
    times = np.asarray(times, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for p in paths[:max_paths]:
            ax.plot(times, p, lw=0.6, alpha=0.6)
        if guide_velocity is not None:
            ax.plot(times, guide_velocity * times, "k--", lw=1.2, label=f"velocity {guide_velocity:g}")
            ax.legend(loc="best")
        ax.set_xlabel("t")
        ax.set_ylabel("shock location")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def emit_plots(res, outdir) -> list:
    """Standard figures for an :class:`~kpz_shock_lab.experiments.EnsembleResult`."""
    outdir = Path(outdir)
    cfg = res.config
    sc = cfg["scenario"]
    th = cfg["theta"]
    files = []
    if res.j0 is not None and res.j0.size:
        T = res.times
        if res.j0.shape[0] < 2:
            return [spaghetti(T, res.b, outdir / "shock_traces.svg", "shock trace")]
        t = T[-1]
        if sc in ("stationary", "tilted"):
            files.append(ecdf_overlay(res.j0[:, -1] / math.sqrt(t), lambda v: gaussian_cdf(v, 0.0, 2 * th),
                                      outdir / "j0_cdf.svg", f"J0/sqrt(t), t={t:g}", "J0/sqrt(t)"))
            if len(T) > 1:
                files.append(scaling_plot(T, res.j0.T, outdir / "j0_scaling.svg", "J0 spread", 0.5))
        elif sc == "flat":
            files.append(ecdf_overlay(res.j0[:, -1] / t ** (1 / 3), tw_goe_diff_table(), outdir / "j0_cdf.svg",
                                      f"J0/t^(1/3), t={t:g}", "J0/t^(1/3)"))
            files.append(scaling_plot(T, res.j0.T, outdir / "j0_scaling.svg", "J0 spread", 1 / 3))
        if res.b is not None:
            v = None
            if sc == "shear":
                v = -(float(cfg["options"]["theta1"]) + float(cfg["options"]["theta2"])) / 2
            files.append(spaghetti(T, res.b, outdir / "shock_traces.svg", "shock traces", guide_velocity=v))
    if "ratios" in res.extra:
        r = res.extra["ratios"]
        with plt.rc_context(_RC):
            fig, ax = plt.subplots(figsize=(4.5, 3.2))
            ax.semilogx(res.times, np.median(r, axis=0), "o-", label="median ratio")
            ax.semilogx(res.times, res.extra["zero_noise_closed_form"], "s--", label="zero noise")
            ax.set_xlabel("t")
            ax.set_ylabel("half-line / full-line at x = sqrt(t)")
            ax.legend(loc="lower right")
            fig.tight_layout()
            files.append(_save(fig, outdir / "ratio_median.svg"))
    if "inc_raw" in res.extra:
        a = np.sort(_nonempty(res.extra["inc_raw"], "sample"))
        files.append(ecdf_overlay(res.extra["inc_shifted"],
                                  lambda v: np.searchsorted(a, v, side="right") / len(a),
                                  outdir / "shock_increment_cdf.svg", "shifted vs raw shock increments", "increment"))
    return files

"""Reference distributions, goodness-of-fit distances and scaling fits.

The Tracy--Widom GOE distribution function is evaluated as the Fredholm
determinant ``F1(s) = det(I - K)`` on ``L^2(s, inf)`` with kernel
``K(x, y) = Ai((x + y) / 2) / 2``, discretised by Gauss--Legendre
quadrature (Nystrom method).  Tabulated values ship with the package and can
be regenerated with :func:`build_tw_goe_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special, stats as sps

__all__ = [
    "DistTable",
    "ks_distance",
    "ks_two_sample",
    "weighted_var",
    "weighted_quantile",
    "gaussian_cdf",
    "gamma_cdf",
    "tw_goe_cdf",
    "build_tw_goe_table",
    "build_diff_table",
    "tw_goe_table",
    "tw_goe_diff_table",
    "fit_scaling",
    "ScalingFit",
    "spread",
    "TW_GOE_MEAN",
    "TW_GOE_VAR",
]

TW_GOE_MEAN = -1.2065335745820
TW_GOE_VAR = 1.6077810345810


@dataclass
class DistTable:
    """A distribution function tabulated on an increasing grid.

    Values between nodes are linearly interpolated; outside the table the
    CDF is 0 on the left and 1 on the right.
    """

    xs: np.ndarray
    cdf: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.cdf = np.asarray(self.cdf, dtype=float)
        if self.xs.shape != self.cdf.shape or self.xs.ndim != 1:
            raise ValueError("xs and cdf must be 1-d arrays of equal length")
        if len(self.xs) < 2:
            raise ValueError("a table needs at least two nodes")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        if np.any(np.diff(self.cdf) < 0) or self.cdf[0] < 0 or self.cdf[-1] > 1:
            raise ValueError("table CDF must be nondecreasing within [0, 1]")

    def __call__(self, v):
        """Interpolated CDF at ``v``."""
        return np.interp(v, self.xs, self.cdf, left=0.0, right=1.0)

    def scaled(self, c: float) -> "DistTable":
        """Table for ``c * X``."""
        if c == 0:
            raise ValueError("scale must be nonzero")
        prov = dict(self.provenance)
        prov["scale"] = float(c) * float(prov.get("scale", 1.0))
        if c > 0:
            return DistTable(c * self.xs, self.cdf.copy(), prov)
        return DistTable((c * self.xs)[::-1], (1.0 - self.cdf)[::-1], prov)

    def moments(self) -> tuple[float, float]:
        """Mean and variance of the piecewise-linear CDF (uniform mass on each cell)."""
        p = np.diff(np.concatenate([[0.0], self.cdf, [1.0]]))
        mids = np.concatenate([[self.xs[0]], 0.5 * (self.xs[1:] + self.xs[:-1]), [self.xs[-1]]])
        # second moment of a uniform cell adds width^2 / 12
        w2 = np.concatenate([[0.0], np.diff(self.xs) ** 2 / 12.0, [0.0]])
        mean = float(np.dot(p, mids))
        var = float(np.dot(p, mids**2 + w2)) - mean**2
        return mean, var

    def quantile(self, q):
        return np.interp(q, self.cdf, self.xs)

    def write_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            for k, v in self.provenance.items():
                fh.write(f"# {k}: {v}\n")
            fh.write("x,cdf\n")
            for a, b in zip(self.xs, self.cdf):
                fh.write(f"{float(a)!r},{float(b)!r}\n")

    @classmethod
    def read_csv(cls, path) -> "DistTable":
        return cls._parse(Path(path).read_text())

    @classmethod
    def _parse(cls, text: str) -> "DistTable":
        prov, xs, cs = {}, [], []
        header = False
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                prov[k.strip()] = v.strip()
            elif not header:
                header = True
            else:
                a, b = line.split(",")
                xs.append(float(a))
                cs.append(float(b))
        return cls(np.array(xs), np.array(cs), prov)


# --------------------------------------------------------------------------
# distances


def ks_distance(sample, cdf) -> float:
    """One-sample Kolmogorov--Smirnov statistic ``sup |F_n - F|``.

    ``cdf`` is a :class:`DistTable` or any vectorised callable, for example
    ``lambda v: gaussian_cdf(v, 0, 2)``.
    """
    xs = np.sort(np.asarray(sample, dtype=float))
    n = len(xs)
    if n == 0:
        raise ValueError("empty sample")
    if n < 10:
        raise ValueError("need at least 10 samples")
    f = np.asarray(cdf(xs), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    return float(sps.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def weighted_var(x, w) -> float:
    """Variance of ``x`` under the probability weights ``w / sum(w)``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    m = np.dot(w, x)
    return float(np.dot(w, (x - m) ** 2))


def weighted_quantile(x, w, q):
    order = np.argsort(x)
    x = np.asarray(x)[order]
    cw = np.cumsum(np.asarray(w)[order])
    cw = (cw - 0.5 * np.asarray(w)[order]) / cw[-1]
    return np.interp(q, cw, x)


def gaussian_cdf(x, mean: float = 0.0, var: float = 1.0):
    """CDF of N(mean, var) at ``x``."""
    if not var > 0:
        raise ValueError("variance must be positive")
    return special.ndtr((np.asarray(x, dtype=float) - mean) / math.sqrt(var))


def gamma_cdf(x, shape: float, rate: float = 1.0):
    """CDF of Gamma(shape, rate) at ``x`` (regularised lower incomplete gamma)."""
    if not (shape > 0 and rate > 0):
        raise ValueError("shape and rate must be positive")
    return special.gammainc(shape, rate * np.clip(np.asarray(x, dtype=float), 0.0, None))


# --------------------------------------------------------------------------
# Tracy--Widom GOE


def tw_goe_cdf(s: float, m: int = 80, upper: float = 16.0) -> float:
    """``F1(s)`` by an ``m``-point Gauss--Legendre Nystrom discretisation on ``[s, upper]``."""
    hi = max(upper, s + upper)
    if s >= hi:
        return 1.0
    nodes, weights = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (hi - s) * nodes + 0.5 * (hi + s)
    w = 0.5 * (hi - s) * weights
    sw = np.sqrt(w)
    K = 0.5 * special.airy(0.5 * (x[:, None] + x[None, :]))[0]
    return float(np.linalg.det(np.eye(m) - sw[:, None] * K * sw[None, :]))


def build_tw_goe_table(lo: float = -10.0, hi: float = 8.0, step: float = 0.01, m: int = 80,
                       m_check: int = 160) -> DistTable:
    xs = np.round(np.arange(lo, hi + step / 2, step), 12)
    F = np.array([tw_goe_cdf(s, m) for s in xs])
    check = xs[:: max(1, int(round(1.0 / step)))]
    diff = max(abs(tw_goe_cdf(s, m) - tw_goe_cdf(s, m_check)) for s in check)
    F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
    prov = {"distribution": "Tracy-Widom GOE (F1)",
            "method": f"Fredholm determinant, Gauss-Legendre m={m}",
            "check": f"max |F(m={m}) - F(m={m_check})| on unit grid = {diff:.3e}",
            "step": step}
    return DistTable(xs, F, prov)


def build_diff_table(base: DistTable, scale: float = 0.5) -> DistTable:
    """Table for ``scale * (X1 - X2)`` with ``X1, X2`` i.i.d. from ``base``.

    Uses ``P(X1 - X2 <= d) = int f(y) F(y + d) dy`` on the base grid, with
    the density from centred differences.
    """
    x = base.xs
    h = x[1] - x[0]
    if np.max(np.abs(np.diff(x) - h)) > 1e-9:
        raise ValueError("base table must be uniform")
    F = base.cdf
    f = np.gradient(F, h, edge_order=2)
    f = np.clip(f, 0.0, None)
    f /= np.trapezoid(f, x)
    n = len(x)
    shifts = np.arange(-(n - 1), n)
    d = shifts * h
    out = np.empty(len(shifts))
    for k, s in enumerate(shifts):
        # F(y + d) on the grid: index shift by s, 0 below and 1 above the table
        idx = np.arange(n) + s
        Fs = np.where(idx < 0, 0.0, np.where(idx >= n, 1.0, F[np.clip(idx, 0, n - 1)]))
        out[k] = np.trapezoid(f * Fs, x)
    out = np.maximum.accumulate(np.clip(out, 0.0, 1.0))
    prov = dict(base.provenance)
    prov["distribution"] = f"{scale} * (X1 - X2), X1, X2 iid Tracy-Widom GOE"
    prov["method"] = str(prov.get("method", "")) + "; difference law by convolution with the density"
    return DistTable(scale * d, out, prov)


def _load_table(name: str) -> DistTable:
    text = resources.files("kpz_shock_lab").joinpath("data", name).read_text()
    return DistTable._parse(text)


def tw_goe_table() -> DistTable:
    """Tabulated Tracy--Widom GOE distribution function."""
    return _load_table("tw_goe.csv")


def tw_goe_diff_table() -> DistTable:
    """Tabulated law of ``(X1 - X2) / 2`` for independent Tracy--Widom GOE ``X1, X2``."""
    return _load_table("tw_goe_half_diff.csv")


# --------------------------------------------------------------------------
# scaling


@dataclass
class ScalingFit:
    """``log spread = intercept + exponent * log t`` fitted by least squares."""

    exponent: float
    intercept: float
    r2: float
    points: list

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)


def spread(sample, kind: str = "iqr") -> float:
    """Interquartile range or sample standard deviation."""
    v = np.asarray(sample, dtype=float)
    if kind == "iqr":
        q1, q3 = np.percentile(v, [25, 75])
        return float(q3 - q1)
    if kind == "std":
        return float(np.std(v, ddof=1))
    raise ValueError("spread kind must be 'iqr' or 'std'")


def fit_scaling(pairs) -> ScalingFit:
    """Log-log least squares through ``(t, spread)`` pairs.

    With exactly two distinct times this is the two-point slope.
    """
    pts = [(float(t), float(s)) for t, s in pairs]
    if len({t for t, _ in pts}) < 2:
        raise ValueError("need at least two distinct times")
    if any(t <= 0 or s <= 0 for t, s in pts):
        raise ValueError("times and spreads must be positive")
    lt = np.log([t for t, _ in pts])
    ls = np.log([s for _, s in pts])
    X = np.column_stack([np.ones_like(lt), lt])
    coef = np.linalg.lstsq(X, ls, rcond=None)[0]
    resid = ls - X @ coef
    sst = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return ScalingFit(exponent=float(coef[1]), intercept=float(coef[0]), r2=min(max(r2, 0.0), 1.0),
                      points=[(float(a), float(b)) for a, b in zip(lt, ls)])

"""Random and deterministic initial data for coupled height pairs.

Brownian paths are built from per-cell increments addressed by absolute
cell index, so a path sampled on a larger window agrees exactly with the
same path on a smaller one.  Path 0 of a key is ``B1`` and path 1 is ``B2``.

The stationary pair law ``nu_theta`` is

    f_minus = B1 - theta x
    f_plus  = f_minus + log(I(x) / I(0)),   I(x) = int_{-inf}^x exp(D(y)) dy,

with ``D = B2 - B1 + 2 theta y``.  Written with ``S(x) = log I(x) - D(x)``
this is ``f_plus = B2 + theta x + S(x) - S(0)``.  The left tail of the
integral is truncated at ``M`` and ``M`` is doubled until ``log I`` at the
left end of the window moves by less than ``tail_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

from .field import CoupledState, FieldState, GridSpec, v_map
from .rng import Purpose, StreamKey, _fill_normals

__all__ = [
    "PathSample",
    "WeightedPairSample",
    "SValue",
    "brownian_path",
    "sample_bm_with_drift",
    "sample_mu_theta",
    "sample_nu_theta",
    "sample_nu_theta_batch",
    "sample_mu_theta_batch",
    "default_tail_length",
    "s_theta_at",
    "apply_D",
    "pair_derivative_at_zero",
    "hat_nu_weight",
    "v_combine",
    "a_split",
    "flat_pair",
    "v_abs_profile",
]

LOG2 = math.log(2.0)
_U = np.uint64


@dataclass
class PathSample:
    grid: GridSpec
    values: np.ndarray
    theta: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def as_field(self, slope_left: float | None = None, slope_right: float | None = None) -> FieldState:
        sl = self.theta if slope_left is None else slope_left
        sr = self.theta if slope_right is None else slope_right
        return FieldState(self.grid, self.values.copy(), 0.0, sl, sr)


@dataclass
class WeightedPairSample:
    """A pair ``(f_minus, f_plus)`` with its tilt weight.

    ``weight = gap_derivative0 / (2 theta)`` where ``gap_derivative0`` is the
    slope of ``f_plus - f_minus`` at the origin.  When the pair came from the
    stationary sampler, ``b1`` and ``b2`` hold the underlying Brownian paths on
    the extended grid starting at absolute cell ``ext_start``.
    """

    grid: GridSpec
    f_minus: np.ndarray
    f_plus: np.ndarray
    theta: float
    weight: float = 1.0
    gap_derivative0: float = float("nan")
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None
    ext_start: int | None = None
    tail_M: float | None = None
    tail_change: float | None = None

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def as_state(self, with_v: bool = False) -> CoupledState:
        return CoupledState.from_arrays(self.grid, self.f_minus, self.f_plus, self.theta, 0.0, with_v)


# --------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True)
def _bm_points(k0, k1, c2, c3, step, lo, hi, sqrt_dx, out):
    """Brownian path at absolute cells ``lo..hi`` (``lo <= 0 <= hi``), zero at cell 0."""
    n = hi - lo
    z = np.empty(max(n, 1))
    if n > 0:
        _fill_normals(k0, k1, c2, c3, step, lo, z[:n])
    o = -lo
    out[o] = 0.0
    for p in range(o, n):
        out[p + 1] = out[p] + sqrt_dx * z[p]
    for p in range(o - 1, -1, -1):
        out[p] = out[p + 1] - sqrt_dx * z[p]


@nb.njit(inline="always")
def _lae(a, b):
    if a == -np.inf:
        return b
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@nb.njit(cache=True)
def _log_trap(d, p0, p1, log_dx):
    """log of the trapezoid integral of exp(d) over points p0..p1."""
    if p1 <= p0:
        return -np.inf
    mx = -np.inf
    for p in range(p0, p1 + 1):
        if d[p] > mx:
            mx = d[p]
    s = 0.5 * (np.exp(d[p0] - mx) + np.exp(d[p1] - mx))
    for p in range(p0 + 1, p1):
        s += np.exp(d[p] - mx)
    return mx + np.log(s) + log_dx


@nb.njit(cache=True)
def _nu_batch(k0, k1, c2s, c3s, a_lo, a_hi, dx, theta, m0, tail_tol, max_doublings,
              fm_out, fp_out, deriv_out, change_out, m_out):
    R = c2s.shape[0]
    sq = np.sqrt(dx)
    log_dx = np.log(dx)
    log_half_dx = np.log(0.5 * dx)
    for r in range(R):
        m = m0
        for it in range(max_doublings + 1):
            lo = a_lo - 2 * m
            npts = a_hi - lo + 1
            b1 = np.empty(npts)
            b2 = np.empty(npts)
            _bm_points(k0, k1, c2s[r], c3s[r], 0, lo, a_hi, sq, b1)
            _bm_points(k0, k1, c2s[r], c3s[r], 1, lo, a_hi, sq, b2)
            d = np.empty(npts)
            for p in range(npts):
                d[p] = b2[p] - b1[p] + 2.0 * theta * (lo + p) * dx
            pw = a_lo - lo
            l_long = _log_trap(d, 0, pw, log_dx)
            l_short = _log_trap(d, m, pw, log_dx)
            change = abs(l_long - l_short)
            if change < tail_tol or it == max_doublings:
                break
            m *= 2
        change_out[r] = change
        m_out[r] = m
        # cumulative log I over the window, starting from the left end
        o = -lo
        li = l_long
        logi = np.empty(a_hi - a_lo + 1)
        logi[0] = li
        for p in range(pw, npts - 1):
            li = _lae(li, log_half_dx + _lae(d[p], d[p + 1]))
            logi[p - pw + 1] = li
        li0 = logi[-a_lo]
        deriv_out[r] = np.exp(d[o] - li0)
        for k in range(a_hi - a_lo + 1):
            p = pw + k
            x = (a_lo + k) * dx
            fm = b1[p] - theta * x
            fm_out[r, k] = fm
            fp_out[r, k] = fm + logi[k] - li0


# --------------------------------------------------------------------------
# Brownian data


def _key_words(key: StreamKey) -> tuple:
    k0, k1, c2, c3 = key.words
    return _U(k0), _U(k1), _U(c2), _U(c3)


def brownian_path(key: StreamKey, lo: int, hi: int, dx: float, path_index: int = 0) -> np.ndarray:
    """Two-sided Brownian motion at absolute cells ``lo..hi``, pinned at cell 0."""
    if not lo <= 0 <= hi:
        raise ValueError("the cell range must contain the origin")
    k0, k1, c2, c3 = _key_words(key)
    out = np.empty(hi - lo + 1)
    _bm_points(k0, k1, c2, c3, np.int64(path_index), np.int64(lo), np.int64(hi), math.sqrt(dx), out)
    return out


def sample_bm_with_drift(theta: float, grid: GridSpec, key: StreamKey, path_index: int = 0) -> PathSample:
    """``B(x) + theta x`` on the grid, with ``B`` two-sided and ``B(0) = 0``."""
    lo = grid.cell_offset
    b = brownian_path(key, lo, lo + grid.n - 1, grid.dx, path_index)
    return PathSample(grid, b + theta * grid.x, theta)


def sample_mu_theta(theta: float, grid: GridSpec, key: StreamKey) -> WeightedPairSample:
    """Independent pair ``(B1 - theta x, B2 + theta x)``."""
    fm = sample_bm_with_drift(-theta, grid, key, 0)
    fp = sample_bm_with_drift(theta, grid, key, 1)
    return WeightedPairSample(grid, fm.values, fp.values, theta)


def default_tail_length(theta: float) -> float:
    return max(20.0 / (2.0 * theta), 10.0)


def _check_theta(theta: float) -> None:
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")


def sample_nu_theta_batch(theta: float, grid: GridSpec, master_seed: int, replica_ids,
                          purpose=Purpose.INITIAL_DATA, tail_M: float | None = None,
                          tail_tol: float = 1e-6, max_doublings: int = 8) -> dict:
    """Stationary pairs for many replicas at once.

    Returns a dict with ``f_minus`` and ``f_plus`` of shape (R, n), the gap
    derivative at zero ``deriv0``, the tilt ``weight``, and tail diagnostics.
    """
    _check_theta(theta)
    replica_ids = np.atleast_1d(np.asarray(replica_ids, dtype=np.int64))
    keys = [StreamKey(master_seed, int(r), purpose) for r in replica_ids]
    w = np.array([k.words for k in keys], dtype=np.uint64).reshape(-1, 4)
    k0, k1 = _U(w[0, 0]) if len(w) else _U(0), _U(w[0, 1]) if len(w) else _U(0)
    M = default_tail_length(theta) if tail_M is None else tail_M
    m0 = max(2, int(math.ceil(M / grid.dx)))
    R, n = len(replica_ids), grid.n
    fm = np.empty((R, n))
    fp = np.empty((R, n))
    deriv = np.empty(R)
    change = np.empty(R)
    m_used = np.empty(R, dtype=np.int64)
    a_lo = grid.cell_offset
    _nu_batch(k0, k1, np.ascontiguousarray(w[:, 2]), np.ascontiguousarray(w[:, 3]),
              np.int64(a_lo), np.int64(a_lo + n - 1), float(grid.dx), float(theta), np.int64(m0),
              float(tail_tol), np.int64(max_doublings), fm, fp, deriv, change, m_used)
    return {"f_minus": fm, "f_plus": fp, "deriv0": deriv, "weight": deriv / (2.0 * theta),
            "tail_change": change, "tail_M": m_used * grid.dx,
            "converged": change < tail_tol}


def sample_mu_theta_batch(theta: float, grid: GridSpec, master_seed: int, replica_ids,
                          purpose=Purpose.INITIAL_DATA) -> dict:
    replica_ids = np.atleast_1d(np.asarray(replica_ids, dtype=np.int64))
    fm = np.empty((len(replica_ids), grid.n))
    fp = np.empty_like(fm)
    for i, r in enumerate(replica_ids):
        s = sample_mu_theta(theta, grid, StreamKey(master_seed, int(r), purpose))
        fm[i], fp[i] = s.f_minus, s.f_plus
    return {"f_minus": fm, "f_plus": fp, "weight": np.ones(len(replica_ids))}


def sample_nu_theta(theta: float, grid: GridSpec, key: StreamKey, tail_M: float | None = None,
                    tail_tol: float = 1e-6, max_doublings: int = 8) -> WeightedPairSample:
    """One stationary pair, keeping ``B1`` and ``B2`` on the extended grid."""
    out = sample_nu_theta_batch(theta, grid, key.master_seed, [key.replica_id], key.purpose,
                                tail_M, tail_tol, max_doublings)
    m = int(round(out["tail_M"][0] / grid.dx))
    lo = grid.cell_offset - 2 * m
    hi = grid.cell_offset + grid.n - 1
    b1 = brownian_path(key, lo, hi, grid.dx, 0)
    b2 = brownian_path(key, lo, hi, grid.dx, 1)
    return WeightedPairSample(grid, out["f_minus"][0], out["f_plus"][0], theta,
                              weight=float(out["weight"][0]), gap_derivative0=float(out["deriv0"][0]),
                              b1=b1, b2=b2, ext_start=lo, tail_M=2 * m * grid.dx,
                              tail_change=float(out["tail_change"][0]))


# --------------------------------------------------------------------------
# the S functional and the D map


class SValue(NamedTuple):
    value: float
    tail_bound: float


def _trap_log_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, math.log(dx))
    if n > 1:
        w[0] = w[-1] = math.log(0.5 * dx)
    return w


def s_theta_at(b1, b2, theta: float, x: float, dx: float, x_start: float) -> SValue:
    """``log int_{-inf}^x exp{W(y) - W(x) + 2 theta (y - x)} dy`` with ``W = B2 - B1``.

    ``b1`` and ``b2`` are sampled at ``x_start + k dx``; the integral is
    truncated at ``x_start``.  ``tail_bound`` estimates the relative size of
    the omitted piece as ``exp(W(x_start) - W(x) + 2 theta (x_start - x)) / (2 theta I)``.
    """
    _check_theta(theta)
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    k = int(round((x - x_start) / dx))
    if not 0 <= k < len(b1):
        raise ValueError("x lies outside the sampled range")
    if k == 0:
        return SValue(-math.inf, math.inf)
    y = x_start + np.arange(k + 1) * dx
    w = b2[: k + 1] - b1[: k + 1]
    e = w - w[k] + 2.0 * theta * (y - y[k])
    val = float(np.logaddexp.reduce(e + _trap_log_weights(k + 1, dx)))
    tail = math.exp(e[0] - val) / (2.0 * theta)
    return SValue(val, tail)


def apply_D(g_minus, g_plus, theta: float, grid: GridSpec | None = None) -> WeightedPairSample:
    """Map a pair to ``(g_minus, g_minus + log(I(x) / I(0)))`` with ``I = int exp(g_plus - g_minus)``.

    The integral is summed by the trapezoid rule from the left end of the
    grid and continued to minus infinity along ``exp(2 theta y)``, the
    asymptotic gap slope of the target space.  This makes the map exact when
    the gap is linear with slope ``2 theta``.  Raises ``ValueError`` when the
    gap does not increase across the left half of the domain, since the
    integral from minus infinity would then diverge.
    """
    if isinstance(g_minus, PathSample):
        grid = g_minus.grid
        g_minus, g_plus = g_minus.values, g_plus.values
    if grid is None:
        raise ValueError("a grid is needed for raw arrays")
    _check_theta(theta)
    gm = np.asarray(g_minus, dtype=float)
    gp = np.asarray(g_plus, dtype=float)
    g = gp - gm
    x = grid.x
    o = grid.origin_index
    if o < 2:
        raise ValueError("the grid needs points left of the origin")
    if not (g[o] - g[0]) / (x[o] - x[0]) > 0:
        raise ValueError("tail integral does not converge: the gap does not increase on the left")
    a = 2.0 * theta
    q = math.exp(-a * grid.dx)
    pieces = math.log(0.5 * grid.dx) + np.logaddexp(g[:-1], g[1:])
    logi = np.empty_like(g)
    logi[0] = math.log(grid.dx) + g[0] + math.log(0.5 + q / (1.0 - q))
    logi[1:] = np.logaddexp.accumulate(np.concatenate([[logi[0]], pieces]))[1:]
    fp = gm + logi - logi[o]
    deriv = math.exp(g[o] - logi[o])
    return WeightedPairSample(grid, gm.copy(), fp, theta, weight=deriv / (2.0 * theta), gap_derivative0=deriv)


def pair_derivative_at_zero(pair: WeightedPairSample, theta: float | None = None) -> float:
    """Slope of ``f_plus - f_minus`` at the origin, from the underlying Brownian paths.

    Equals ``1 / int_{-inf}^0 exp{(B2 - B1)(y) + 2 theta y} dy`` (trapezoid over
    the extended grid).  Falls back to the stored value when the paths are absent.
    """
    theta = pair.theta if theta is None else theta
    if pair.b1 is None:
        if math.isnan(pair.gap_derivative0):
            raise ValueError("pair carries neither Brownian paths nor a stored derivative")
        return pair.gap_derivative0
    dx = pair.grid.dx
    k0 = -pair.ext_start
    y = (pair.ext_start + np.arange(k0 + 1)) * dx
    d = pair.b2[: k0 + 1] - pair.b1[: k0 + 1] + 2.0 * theta * y
    return math.exp(-float(np.logaddexp.reduce(d + _trap_log_weights(k0 + 1, dx))))


def hat_nu_weight(pair: WeightedPairSample, theta: float | None = None) -> float:
    theta = pair.theta if theta is None else theta
    return pair_derivative_at_zero(pair, theta) / (2.0 * theta)


def v_combine(pair) -> PathSample:
    """``log((e^{f_plus} + e^{f_minus}) / 2)`` as a single path."""
    if isinstance(pair, CoupledState):
        return PathSample(pair.grid, v_map(pair.h_minus.h, pair.h_plus.h))
    return PathSample(pair.grid, v_map(pair.f_minus, pair.f_plus), pair.theta)


def a_split(f_v, theta: float, grid: GridSpec | None = None) -> WeightedPairSample:
    """Split a single profile into a pair whose gap is exactly ``2 theta x``."""
    if isinstance(f_v, PathSample):
        grid, v = f_v.grid, f_v.values
    elif isinstance(f_v, FieldState):
        grid, v = f_v.grid, f_v.h
    else:
        v = np.asarray(f_v, dtype=float)
    if grid is None:
        raise ValueError("a grid is needed for raw arrays")
    u = 2.0 * theta * grid.x
    fm = v - (np.logaddexp(u, 0.0) - LOG2)
    fp = v - (np.logaddexp(-u, 0.0) - LOG2)
    return WeightedPairSample(grid, fm, fp, theta, gap_derivative0=2.0 * theta)


def flat_pair(theta: float, grid: GridSpec) -> WeightedPairSample:
    """Deterministic pair ``(-theta x, theta x)``."""
    x = grid.x
    return WeightedPairSample(grid, -theta * x, theta * x, theta, weight=1.0, gap_derivative0=2.0 * theta)


def v_abs_profile(theta: float, grid: GridSpec) -> PathSample:
    """The V-shaped profile ``theta |x|``."""
    return PathSample(grid, theta * np.abs(grid.x), theta)

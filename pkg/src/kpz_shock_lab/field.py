"""Grids, height profiles and pairs of profiles sharing a clock."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "GridSpec",
    "FieldState",
    "CoupledState",
    "SpaceReport",
    "default_half_width",
    "recenter",
    "eval_at",
    "v_map",
    "validate_space",
    "write_snapshot",
    "read_snapshot",
]

LOG2 = math.log(2.0)


def default_half_width(theta: float, t_end: float) -> float:
    """Domain half-width 2*theta*T + 12*max(1, sqrt(T))."""
    return 2.0 * abs(theta) * t_end + 12.0 * max(1.0, math.sqrt(t_end))


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``x_k = (k - origin_index) * dx`` for ``k = 0 .. n-1``.

    The origin is always a grid point.  ``dt`` is the time step used by the
    solvers and must respect the explicit-heat bound ``dt <= dx**2 / 2``.
    """

    dx: float
    n: int
    origin_index: int
    dt: float

    def __post_init__(self):
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if self.n < 3:
            raise ValueError("a grid needs at least 3 points")
        if not 0 <= self.origin_index < self.n:
            raise ValueError("origin_index must point inside the grid")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt > 0.5 * self.dx**2 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} violates dt <= 0.5*dx^2 = {0.5 * self.dx**2}")

    @classmethod
    def from_bounds(cls, x_min: float, x_max: float, dx: float, dt_factor: float = 0.4) -> "GridSpec":
        """Grid covering [x_min, x_max] (rounded outward to multiples of dx)."""
        if not x_min <= 0 <= x_max:
            raise ValueError("the domain must contain the origin")
        left = int(math.ceil(-x_min / dx - 1e-9))
        right = int(math.ceil(x_max / dx - 1e-9))
        return cls(dx=float(dx), n=left + right + 1, origin_index=left, dt=dt_factor * dx * dx)

    @classmethod
    def symmetric(cls, half_width: float, dx: float, dt_factor: float = 0.4) -> "GridSpec":
        return cls.from_bounds(-half_width, half_width, dx, dt_factor)

    @property
    def x_min(self) -> float:
        return -self.origin_index * self.dx

    @property
    def x_max(self) -> float:
        return (self.n - 1 - self.origin_index) * self.dx

    @property
    def cell_offset(self) -> int:
        """Absolute (noise-address) index of grid point 0."""
        return -self.origin_index

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.origin_index) * self.dx

    def index_of(self, x: float) -> int:
        """Index of the grid point nearest to ``x``."""
        k = int(round(x / self.dx)) + self.origin_index
        if not 0 <= k < self.n:
            raise ValueError(f"x={x} is outside the grid [{self.x_min}, {self.x_max}]")
        return k

    def steps_for(self, t: float) -> int:
        return int(round(t / self.dt))

    def with_dt(self, dt: float) -> "GridSpec":
        return replace(self, dt=dt)


@dataclass
class FieldState:
    """A log-height profile ``h = log(phi)`` on a grid at time ``t``.

    ``wall`` marks an absorbing boundary point ('left' or 'right') where
    ``phi = 0``, stored as ``h = -inf``; every other entry must be finite.
    """

    grid: GridSpec
    h: np.ndarray
    t: float = 0.0
    slope_left: float = 0.0
    slope_right: float = 0.0
    wall: str | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.h.shape != (self.grid.n,):
            raise ValueError(f"h has shape {self.h.shape}, grid expects ({self.grid.n},)")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.wall not in (None, "left", "right"):
            raise ValueError("wall must be None, 'left' or 'right'")
        inner = self.h
        if self.wall == "left":
            inner = self.h[1:]
        elif self.wall == "right":
            inner = self.h[:-1]
        if not np.all(np.isfinite(inner)):
            raise ValueError("height profile contains non-finite values")

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def phi(self) -> np.ndarray:
        return np.exp(self.h)

    def at_origin(self) -> float:
        return float(self.h[self.grid.origin_index])

    def copy(self, **changes) -> "FieldState":
        kw = dict(grid=self.grid, h=self.h.copy(), t=self.t, slope_left=self.slope_left,
                  slope_right=self.slope_right, wall=self.wall)
        kw.update(changes)
        return FieldState(**kw)


def v_map(h_minus: np.ndarray, h_plus: np.ndarray) -> np.ndarray:
    """``log((exp(h_plus) + exp(h_minus)) / 2)`` evaluated without overflow."""
    return np.logaddexp(h_plus, h_minus) - LOG2


@dataclass
class CoupledState:
    h_minus: FieldState
    h_plus: FieldState
    h_v: FieldState | None = None

    def __post_init__(self):
        members = self.members
        g, t = members[0].grid, members[0].t
        for m in members[1:]:
            if m.grid != g:
                raise ValueError("coupled members must share one grid")
            if m.t != t:
                raise ValueError("coupled members must share one time")
        if self.h_v is not None and t == 0:
            err = np.max(np.abs(self.h_v.h - v_map(self.h_minus.h, self.h_plus.h)))
            if err > 1e-12:
                raise ValueError(f"h_v differs from V[h_minus, h_plus] by {err:.3g} at t=0")

    @property
    def members(self) -> list[FieldState]:
        out = [self.h_minus, self.h_plus]
        if self.h_v is not None:
            out.append(self.h_v)
        return out

    @property
    def grid(self) -> GridSpec:
        return self.h_minus.grid

    @property
    def t(self) -> float:
        return self.h_minus.t

    @property
    def gap(self) -> np.ndarray:
        """``h_plus - h_minus`` on the grid."""
        return self.h_plus.h - self.h_minus.h

    @classmethod
    def from_arrays(cls, grid: GridSpec, h_minus, h_plus, theta: float, t: float = 0.0,
                    with_v: bool = False) -> "CoupledState":
        """Pair with the default boundary slopes (-theta, +theta), plus optional h_v."""
        fm = FieldState(grid, h_minus, t, -theta, -theta)
        fp = FieldState(grid, h_plus, t, theta, theta)
        fv = None
        if with_v:
            fv = FieldState(grid, v_map(fm.h, fp.h), t, -theta, theta)
        return cls(fm, fp, fv)


def recenter(f: FieldState) -> FieldState:
    """Subtract the value at the origin; time and slopes are kept."""
    return f.copy(h=f.h - f.h[f.grid.origin_index])


def eval_at(f: FieldState, x: float) -> float:
    """Piecewise-linear interpolation of ``f.h`` at ``x`` (exact at grid points)."""
    g = f.grid
    if not g.x_min - 1e-12 <= x <= g.x_max + 1e-12:
        raise ValueError(f"x={x} outside the domain [{g.x_min}, {g.x_max}]")
    s = (x - g.x_min) / g.dx
    j = int(round(s))
    if abs(s - j) < 1e-9:
        return float(f.h[min(max(j, 0), g.n - 1)])
    k = min(max(int(math.floor(s)), 0), g.n - 2)
    w = s - k
    if w == 0.0:
        return float(f.h[k])
    if w == 1.0:
        return float(f.h[k + 1])
    return float((1.0 - w) * f.h[k] + w * f.h[k + 1])


@dataclass
class SpaceReport:
    """Finite-domain diagnostics for membership in one of the path spaces.

    Slopes are least-squares fits of ``h(x) - h(0) = a * x`` over the outer
    ``window_fraction`` of each side, i.e. estimates of ``h(x)/x`` at the far
    ends of the domain.
    """

    space: str
    theta: float | None
    pin_residual: float
    slopes: dict = field(default_factory=dict)
    slope_targets: dict = field(default_factory=dict)
    slope_tolerance: float = float("nan")
    violations: int = 0
    n_cells: int = 0
    window_fraction: float = 0.1
    notes: list = field(default_factory=list)

    @property
    def slopes_ok(self) -> bool:
        return all(abs(self.slopes[k] - self.slope_targets[k]) <= self.slope_tolerance
                   for k in self.slope_targets)

    @property
    def passed(self) -> bool:
        ok = self.pin_residual <= 1e-12 or self.space in ("Y", "X", "V")
        if self.space in ("X", "X0"):
            ok = ok and self.violations == 0
        if self.space in ("C0", "Y0", "X0"):
            ok = ok and self.pin_residual <= 1e-12
        if self.slope_targets:
            ok = ok and self.slopes_ok
        return ok

    def as_dict(self) -> dict:
        return {
            "space": self.space, "theta": self.theta, "pin_residual": self.pin_residual,
            "slopes": self.slopes, "slope_targets": self.slope_targets,
            "slope_tolerance": self.slope_tolerance, "violations": self.violations,
            "n_cells": self.n_cells, "window_fraction": self.window_fraction,
            "passed": bool(self.passed), "notes": list(self.notes),
        }


def _outer_slopes(x: np.ndarray, h: np.ndarray, origin: int, frac: float) -> tuple[float, float]:
    y = h - h[origin]
    n_left = max(2, int(round(frac * origin)))
    n_right = max(2, int(round(frac * (len(x) - 1 - origin))))
    xl, yl = x[:n_left], y[:n_left]
    xr, yr = x[len(x) - n_right:], y[len(x) - n_right:]
    left = float(np.dot(xl, yl) / np.dot(xl, xl)) if origin > 0 else float("nan")
    right = float(np.dot(xr, yr) / np.dot(xr, xr)) if origin < len(x) - 1 else float("nan")
    return left, right


def _slope_tolerance(grid: GridSpec, theta: float, frac: float) -> float:
    # h(x)/x for Brownian data fluctuates like 1/sqrt(|x|); allow 4 sd plus 25% of theta.
    reach = (1.0 - frac / 2.0) * min(abs(grid.x_min), abs(grid.x_max)) or grid.dx
    return 0.25 * abs(theta) + 4.0 / math.sqrt(max(reach, grid.dx))


def validate_space(obj, which: str, theta: float | None = None, *, window_fraction: float = 0.1,
                   monotone_tol: float = 0.0) -> SpaceReport:
    """Check a profile or a pair against one of the path spaces.

    ``which`` is one of ``'C0'`` (pinned at 0), ``'V'`` (single V-shaped
    profile), ``'Y'``/``'Y0'`` (pair with slopes -theta / +theta) or
    ``'X'``/``'X0'`` (additionally ``h_plus - h_minus`` strictly increasing).
    A monotonicity violation is a grid step where the gap changes by
    ``<= -monotone_tol``.  Never raises for bad data; the report says what failed.
    """
    which = which.replace("(theta)", "").replace("_", "").upper()
    which = {"CKPZ0": "C0", "CKPZ;0": "C0"}.get(which, which)
    if which not in ("C0", "V", "Y", "Y0", "X", "X0"):
        raise ValueError(f"unknown space {which!r}")
    if which != "C0" and theta is None:
        raise ValueError(f"space {which} needs theta")

    if isinstance(obj, CoupledState):
        grid, pair = obj.grid, (obj.h_minus.h, obj.h_plus.h)
    elif isinstance(obj, tuple):
        a, b = obj
        grid = a.grid
        pair = (np.asarray(a.h if hasattr(a, "h") else a.values), np.asarray(b.h if hasattr(b, "h") else b.values))
    else:
        grid = obj.grid
        pair = None
        single = np.asarray(obj.h if hasattr(obj, "h") else obj.values)

    x = grid.x
    o = grid.origin_index
    rep = SpaceReport(space=which, theta=theta, pin_residual=0.0, n_cells=grid.n,
                      window_fraction=window_fraction)
    rep.notes.append("finite-domain proxy: slopes from the outer window only")

    if pair is None:
        if which in ("Y", "Y0", "X", "X0"):
            raise ValueError(f"space {which} needs a pair")
        rep.pin_residual = float(abs(single[o]))
        if which == "V":
            left, right = _outer_slopes(x, single, o, window_fraction)
            rep.slopes = {"left": left, "right": right}
            rep.slope_targets = {"left": -theta, "right": theta}
            rep.slope_tolerance = _slope_tolerance(grid, theta, window_fraction)
        return rep

    fm, fp = pair
    rep.pin_residual = float(max(abs(fm[o]), abs(fp[o])))
    if which == "C0":
        return rep
    if which == "V":
        raise ValueError("space V takes a single profile")
    lm, rm = _outer_slopes(x, fm, o, window_fraction)
    lp, rp = _outer_slopes(x, fp, o, window_fraction)
    rep.slopes = {"minus_left": lm, "minus_right": rm, "plus_left": lp, "plus_right": rp}
    rep.slope_targets = {"minus_left": -theta, "minus_right": -theta,
                         "plus_left": theta, "plus_right": theta}
    rep.slope_tolerance = _slope_tolerance(grid, theta, window_fraction)
    if which in ("X", "X0"):
        rep.violations = int(np.count_nonzero(np.diff(fp - fm) <= -monotone_tol))
    return rep


def write_snapshot(path, state: CoupledState, meta: dict | None = None) -> None:
    """CSV ``x,h_minus,h_plus[,h_v]`` preceded by ``# key: value`` metadata lines."""
    path = Path(path)
    cols = [state.grid.x, state.h_minus.h, state.h_plus.h]
    names = ["x", "h_minus", "h_plus"]
    if state.h_v is not None:
        cols.append(state.h_v.h)
        names.append("h_v")
    info = {"t": state.t, "dx": state.grid.dx, "dt": state.grid.dt,
            "origin_index": state.grid.origin_index,
            "slopes": ",".join(repr(float(s)) for m in state.members for s in (m.slope_left, m.slope_right))}
    info.update(meta or {})
    with path.open("w") as fh:
        for k, v in info.items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(names) + "\n")
        data = np.column_stack(cols)
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_snapshot(path) -> tuple[CoupledState, dict]:
    meta = {}
    rows = []
    header = None
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    dx = float(meta["dx"])
    grid = GridSpec(dx=dx, n=data.shape[0], origin_index=int(meta["origin_index"]), dt=float(meta["dt"]))
    t = float(meta["t"])
    slopes = [float(s) for s in meta["slopes"].split(",")]
    members = []
    for j, name in enumerate(header[1:]):
        members.append(FieldState(grid, data[:, j + 1], t, slopes[2 * j], slopes[2 * j + 1]))
    return CoupledState(*members), meta

"""SHE on a half-line with an absorbing wall at the origin.

The half-line solution started from ``exp(theta y)`` on ``y >= 0`` (or
``exp(-theta y)`` on ``y <= 0``) is compared with the full-line solution
started from the same exponential on all of R, driven by the same noise.
Noise is addressed by absolute cell index, so the two runs see identical
increments wherever their grids overlap.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr

from .field import FieldState, GridSpec, eval_at
from .rng import StreamKey
from .solver import SchemeConfig, Trajectory, evolve_ensemble, evolve_field

__all__ = [
    "heat_kernel",
    "dirichlet_heat_kernel",
    "halfline_grid",
    "halfline_initial",
    "evolve_halfline",
    "evolve_halfline_ensemble",
    "restriction_ratio",
    "zero_noise_ratio",
    "write_ratio_csv",
]


def heat_kernel(t, x):
    """Gaussian kernel ``exp(-x^2 / 2t) / sqrt(2 pi t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def dirichlet_heat_kernel(t, x, y):
    """``[G(t, x - y) - G(t, x + y)] 1{x >= 0, y >= 0}`` for the half-line ``[0, inf)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    val = heat_kernel(t, x - y) - heat_kernel(t, x + y)
    return np.where((x >= 0) & (y >= 0), val, 0.0)


def zero_noise_ratio(theta: float, t: float, x: float) -> float:
    """Half-line over full-line solution without noise, from ``exp(theta y)`` at ``x >= 0``.

    ``Phi((x + theta t)/sqrt t) - exp(-2 theta x) Phi((theta t - x)/sqrt t)``.
    """
    s = math.sqrt(t)
    a = math.exp(log_ndtr((x + theta * t) / s))
    b = math.exp(-2.0 * theta * x + log_ndtr((theta * t - x) / s))
    return a - b


def halfline_grid(side: int, half_width: float, dx: float, dt_factor: float = 0.4) -> GridSpec:
    """Grid on ``[0, L]`` for ``side=+1`` or ``[-L, 0]`` for ``side=-1``."""
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    if side > 0:
        return GridSpec.from_bounds(0.0, half_width, dx, dt_factor)
    return GridSpec.from_bounds(-half_width, 0.0, dx, dt_factor)


def _check_side(grid: GridSpec, side: int) -> str:
    if side == 1:
        if grid.origin_index != 0:
            raise ValueError("a right half-line grid must start at the origin")
        return "left"
    if side == -1:
        if grid.origin_index != grid.n - 1:
            raise ValueError("a left half-line grid must end at the origin")
        return "right"
    raise ValueError("side must be +1 or -1")


def halfline_initial(theta: float, side: int, grid: GridSpec) -> FieldState:
    """``h = side * theta * y`` with ``phi = 0`` on the wall point."""
    wall = _check_side(grid, side)
    h = side * theta * grid.x
    h[grid.origin_index] = -np.inf
    s = side * theta
    return FieldState(grid, h, 0.0, s, s, wall=wall)


def evolve_halfline(theta: float, side: int, grid: GridSpec, key: StreamKey, t_end: float,
                    cfg: SchemeConfig | None = None) -> Trajectory:
    """Half-line SHE from ``exp(side * theta * y)`` with ``phi(t, 0) = 0``."""
    return evolve_field(halfline_initial(theta, side, grid), key, t_end, cfg)


def evolve_halfline_ensemble(theta: float, side: int, grid: GridSpec, master_seed: int, replica_ids,
                             t_end: float, cfg: SchemeConfig | None = None, record_times=None):
    f = halfline_initial(theta, side, grid)
    ids = np.asarray(replica_ids, dtype=np.int64)
    h0 = np.broadcast_to(f.h, (len(ids), 1, grid.n))
    return evolve_ensemble(h0, grid, [(f.slope_left, f.slope_right)], master_seed, ids, t_end, cfg,
                           record_times=record_times, wall=f.wall)


def restriction_ratio(half: FieldState, full: FieldState, x: float) -> float:
    """``phi_half(t, x) / phi_full(t, x)``, both read by linear interpolation of ``h``."""
    if half.t != full.t:
        raise ValueError("profiles are at different times")
    return math.exp(eval_at(half, x) - eval_at(full, x))


def write_ratio_csv(path, rows, meta: dict | None = None) -> None:
    """CSV ``replica,t,x,ratio``; ``rows`` holds tuples in that order."""
    with Path(path).open("w") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write("replica,t,x,ratio\n")
        for rep, t, x, ratio in rows:
            fh.write(f"{int(rep)},{float(t)!r},{float(x)!r},{float(ratio)!r}\n")

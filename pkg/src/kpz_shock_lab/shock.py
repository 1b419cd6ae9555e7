"""Locating the shock (the zero of ``J = h_plus - h_minus``) and the shock frame."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import CoupledState, FieldState, GridSpec

__all__ = [
    "ShockRecord",
    "DomainTooSmallError",
    "find_shock",
    "find_shock_profiles",
    "m_statistic",
    "shift_to_shock",
    "shift_profile",
    "write_shock_trace",
    "read_shock_trace",
]


class DomainTooSmallError(ValueError):
    """``J`` has no sign change on the grid."""


@dataclass
class ShockRecord:
    t: float
    b: float
    j0: float
    unique: bool
    violations: int = 0
    replica: int = 0


def _roots(J: np.ndarray):
    """Candidate brackets: (left index, |J| score, exact) for every sign change or zero."""
    prod = J[:-1] * J[1:]
    cross = np.flatnonzero(prod < 0)
    zeros = np.flatnonzero(J == 0)
    return cross, zeros


def find_shock_profiles(J: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised shock search over rows of ``J``.

    Returns ``(b, unique, violations)``.  Rows with no sign change get
    ``b = nan`` and ``violations = -1``.
    """
    J = np.atleast_2d(J)
    x = grid.x
    b = np.full(J.shape[0], np.nan)
    uniq = np.zeros(J.shape[0], dtype=bool)
    viol = np.full(J.shape[0], -1, dtype=np.int64)
    for k, row in enumerate(J):
        try:
            rb, ru, rv = _locate(row, x)
        except DomainTooSmallError:
            continue
        b[k], uniq[k], viol[k] = rb, ru, rv
    return b, uniq, viol


def _locate(J: np.ndarray, x: np.ndarray) -> tuple[float, bool, int]:
    cross, zeros = _roots(J)
    count = len(cross) + len(zeros)
    if count == 0:
        raise DomainTooSmallError(
            f"J has no sign change on the grid: J(x_min)={J[0]:.6g}, J(x_max)={J[-1]:.6g}; "
            "increase the domain half-width L")
    if len(zeros):
        i = int(zeros[0])
        return float(x[i]), count == 1, count - 1
    # among several brackets keep the one with the smallest |J| at its ends
    score = np.abs(J[cross]) + np.abs(J[cross + 1])
    i = int(cross[np.argmin(score)])
    w = J[i] / (J[i] - J[i + 1])
    return float(x[i] + w * (x[i + 1] - x[i])), count == 1, count - 1


def find_shock(state: CoupledState, replica: int = 0) -> ShockRecord:
    """Shock location ``b`` (linear interpolation of the zero of ``J``) and ``J(0)``.

    With several sign changes the bracket with the smallest ``|J|`` is used,
    ``unique`` is False and ``violations`` counts the extra roots.
    """
    J = state.gap
    b, unique, viol = _locate(J, state.grid.x)
    return ShockRecord(t=state.t, b=b, j0=float(J[state.grid.origin_index]), unique=unique,
                       violations=viol, replica=replica)


def m_statistic(state: CoupledState, theta: float, eps: float) -> float:
    """``sup_x (|J(x) - J(0) - 2 theta x| - eps |x|)`` over the grid."""
    x = state.grid.x
    J = state.gap
    j0 = J[state.grid.origin_index]
    return float(np.max(np.abs(J - j0 - 2.0 * theta * x) - eps * np.abs(x)))


def shift_profile(f: FieldState, b: float) -> np.ndarray:
    """``f(b + x) - f(b)`` on ``f``'s grid, extended linearly by the boundary slopes."""
    g = f.grid
    x = g.x
    y = x + b

    def ext(pts):
        out = np.interp(pts, x, f.h)
        lo = pts < x[0]
        hi = pts > x[-1]
        out[lo] = f.h[0] + f.slope_left * (pts[lo] - x[0])
        out[hi] = f.h[-1] + f.slope_right * (pts[hi] - x[-1])
        return out

    return ext(y) - ext(np.array([b]))[0]


def shift_to_shock(state: CoupledState, strict: bool = True) -> CoupledState:
    """Re-centre every member at the shock: ``f(b + x) - f(b)``.

    ``strict`` raises ``ValueError`` when the shock is not unique.
    """
    rec = find_shock(state)
    if strict and not rec.unique:
        raise ValueError(f"shock is not unique ({rec.violations + 1} roots)")
    members = [m.copy(h=shift_profile(m, rec.b)) for m in state.members]
    return CoupledState(*members)


def write_shock_trace(path, records, meta: dict | None = None) -> None:
    """CSV ``replica,t,b,j0,unique,violations`` with ``#`` metadata lines."""
    with Path(path).open("w") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write("replica,t,b,j0,unique,violations\n")
        for r in records:
            b = "nan" if r.b is None or (isinstance(r.b, float) and math.isnan(r.b)) else repr(float(r.b))
            fh.write(f"{int(r.replica)},{float(r.t)!r},{b},{float(r.j0)!r},{int(bool(r.unique))},{int(r.violations)}\n")


def read_shock_trace(path) -> list[ShockRecord]:
    out = []
    with Path(path).open() as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rep, t, b, j0, u, v = line.split(",")
            out.append(ShockRecord(t=float(t), b=float(b), j0=float(j0), unique=bool(int(u)),
                                   violations=int(v), replica=int(rep)))
    return out

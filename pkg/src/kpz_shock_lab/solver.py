"""Time stepping for the log-height ``h = log(phi)`` of the multiplicative SHE.

One step of the split-exponential scheme is

    phi <- (phi + r * (phi[i+1] - 2 phi[i] + phi[i-1])) * exp(sigma z - sigma^2 / 2)

with ``r = dt / (2 dx^2)`` and ``sigma^2 = dt / dx``, which conserves
``E[phi]`` exactly.  The explicit-Euler variant adds ``sigma z phi`` instead.
The compiled kernel works on ``phi`` rescaled by a per-profile log offset, so
it is equivalent to log-sum-exp arithmetic on ``h`` but much cheaper.  All
profiles of one replica (for example ``h_minus``, ``h_plus`` and ``h_V``)
are driven by the same noise, which is addressed by absolute cell index.

Boundaries are sloped ghost cells, ``h[-1] = h[0] - s_left dx`` and
``h[n] = h[n-1] + s_right dx``, or an absorbing wall where ``phi = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .field import CoupledState, FieldState, GridSpec
from .rng import NoiseSlice, Purpose, StreamKey, _fill_normals

__all__ = [
    "SchemeConfig",
    "Trajectory",
    "EnsembleRun",
    "step",
    "evolve_field",
    "evolve_coupled",
    "evolve_ensemble",
    "shear_twin_check",
    "SolverError",
]

SCHEMES = ("split-exponential", "explicit-euler")
_RENORM_EVERY = 32
_MAX_RANGE = 700.0


class SolverError(RuntimeError):
    pass


@dataclass
class SchemeConfig:
    """Numerical scheme settings.

    ``dt=None`` uses the grid's own step.  ``noise=False`` gives the
    deterministic heat flow, used for checks against exact kernels.
    """

    scheme: str = "split-exponential"
    dt: float | None = None
    boundary: str = "sloped-ghost"
    record_times: tuple = ()
    noise: bool = True
    n_jobs: int = 1
    chunk_size: int = 16

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.boundary != "sloped-ghost":
            raise ValueError("only the sloped-ghost boundary is implemented")
        self.record_times = tuple(float(t) for t in self.record_times)


@dataclass
class Trajectory:
    times: list
    states: list

    def at(self, t: float):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.states[i]


@dataclass
class EnsembleRun:
    """Recorded log-heights ``h[replica, record, member, cell]``."""

    grid: GridSpec
    times: np.ndarray
    h: np.ndarray
    replica_ids: np.ndarray
    meta: dict = field(default_factory=dict)


def _resolve_dt(grid: GridSpec, cfg: SchemeConfig) -> float:
    dt = grid.dt if cfg.dt is None else float(cfg.dt)
    if dt > 0.5 * grid.dx**2 * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates dt <= dx^2/2 for dx={grid.dx}")
    return dt


# --------------------------------------------------------------------------
# log-space reference step


def step(f: FieldState, noise: NoiseSlice | np.ndarray | None, cfg: SchemeConfig | None = None,
         dt: float | None = None) -> FieldState:
    """Advance one profile by one step, working directly on ``h``.

    This is the readable reference implementation; the compiled ensemble
    kernel must agree with it to rounding.
    """
    cfg = cfg or SchemeConfig()
    g = f.grid
    dt = _resolve_dt(g, cfg) if dt is None else dt
    r = dt / (2.0 * g.dx**2)
    sig = math.sqrt(dt / g.dx)
    h = f.h
    hl = np.empty(g.n + 2)
    hl[1:-1] = h
    hl[0] = h[0] - f.slope_left * g.dx
    hl[-1] = h[-1] + f.slope_right * g.dx
    if f.wall == "left":
        hl[0] = -np.inf
    if f.wall == "right":
        hl[-1] = -np.inf
    with np.errstate(invalid="ignore"):
        new = np.logaddexp(np.logaddexp(math.log(r) + hl[:-2], math.log(r) + hl[2:]), math.log1p(-2 * r) + h)
    z = None
    if noise is not None and cfg.noise:
        z = noise.values if isinstance(noise, NoiseSlice) else np.asarray(noise)
    if z is not None:
        if cfg.scheme == "split-exponential":
            new = new + sig * z - 0.5 * sig * sig
        else:
            lin = np.exp(new - h) + sig * z
            if np.any(lin[np.isfinite(h)] <= 0):
                raise SolverError("explicit-Euler step produced a non-positive phi")
            with np.errstate(divide="ignore", invalid="ignore"):
                new = h + np.log(lin)
    if f.wall == "left":
        new[0] = -np.inf
    if f.wall == "right":
        new[-1] = -np.inf
    return f.copy(h=new, t=f.t + dt)


# --------------------------------------------------------------------------
# compiled ensemble kernel


@nb.njit(cache=True)
def _kernel(h0, ghost_lo, ghost_hi, pin_lo, pin_hi, k0, k1, c2s, c3s, cell_start,
            record_steps, n_steps, r, sigma, euler, noise_on, out):
    R, M, n = h0.shape
    K = record_steps.shape[0]
    phi = np.empty((M, n))
    off = np.empty(M)
    z = np.zeros(n)
    fac = np.ones(n)
    half_var = 0.5 * sigma * sigma
    for rep in range(R):
        for m in range(M):
            mx = -np.inf
            for i in range(n):
                if h0[rep, m, i] > mx:
                    mx = h0[rep, m, i]
            off[m] = mx
            for i in range(n):
                phi[m, i] = np.exp(h0[rep, m, i] - mx)
            if pin_lo:
                phi[m, 0] = 0.0
            if pin_hi:
                phi[m, n - 1] = 0.0
        kk = 0
        s = 0
        while True:
            while kk < K and record_steps[kk] == s:
                for m in range(M):
                    for i in range(n):
                        v = phi[m, i]
                        out[rep, kk, m, i] = np.log(v) + off[m] if v > 0.0 else -np.inf
                kk += 1
            if s == n_steps:
                break
            if noise_on:
                _fill_normals(k0, k1, c2s[rep], c3s[rep], s, cell_start, z)
                if not euler:
                    for i in range(n):
                        fac[i] = np.exp(sigma * z[i] - half_var)
            for m in range(M):
                prev = phi[m, 0] * ghost_lo[m]
                if pin_lo:
                    prev = 0.0
                for i in range(n):
                    cur = phi[m, i]
                    if i < n - 1:
                        nxt = phi[m, i + 1]
                    elif pin_hi:
                        nxt = 0.0
                    else:
                        nxt = cur * ghost_hi[m]
                    new = cur + r * (prev - 2.0 * cur + nxt)
                    if euler:
                        new += sigma * z[i] * cur
                    else:
                        new *= fac[i]
                    phi[m, i] = new
                    prev = cur
                if pin_lo:
                    phi[m, 0] = 0.0
                if pin_hi:
                    phi[m, n - 1] = 0.0
            s += 1
            if s % 32 == 0 or s == n_steps or (kk < K and record_steps[kk] == s):
                for m in range(M):
                    mx = 0.0
                    mn = np.inf
                    for i in range(n):
                        v = phi[m, i]
                        if v > mx:
                            mx = v
                        if v < mn and not ((pin_lo and i == 0) or (pin_hi and i == n - 1)):
                            mn = v
                    if not (mn > 0.0) or not (mx < np.inf):
                        return 1, rep, s
                    if np.log(mx) - np.log(mn) > 700.0:
                        return 2, rep, s
                    inv = 1.0 / mx
                    for i in range(n):
                        phi[m, i] *= inv
                    off[m] += np.log(mx)
    return 0, 0, 0


def _run_chunk(h0, ghost_lo, ghost_hi, pin_lo, pin_hi, words, cell_start, record_steps, n_steps,
               r, sigma, euler, noise_on):
    R, M, n = h0.shape
    out = np.empty((R, len(record_steps), M, n))
    status, rep, s = _kernel(h0, ghost_lo, ghost_hi, pin_lo, pin_hi, np.uint64(words[0, 0]),
                             np.uint64(words[0, 1]), np.ascontiguousarray(words[:, 2]),
                             np.ascontiguousarray(words[:, 3]), np.int64(cell_start), record_steps,
                             np.int64(n_steps), r, sigma, euler, noise_on, out)
    if status == 1:
        raise SolverError(f"phi became non-positive or overflowed (replica row {rep}, step {s})")
    if status == 2:
        raise SolverError(f"log-height range exceeds {_MAX_RANGE} (replica row {rep}, step {s}); "
                          "shrink the domain or the slopes")
    return out


def evolve_ensemble(h0: np.ndarray, grid: GridSpec, slopes, master_seed: int, replica_ids, t_end: float,
                    cfg: SchemeConfig | None = None, *, record_times=None, wall: str | None = None,
                    purpose=Purpose.DYNAMICS) -> EnsembleRun:
    """Evolve ``h0[replica, member, cell]`` with common noise per replica.

    ``slopes`` is a sequence of ``(slope_left, slope_right)`` per member.
    Replica ``i`` uses the noise stream ``(master_seed, replica_ids[i], purpose)``
    so results do not depend on ``cfg.n_jobs`` or ``cfg.chunk_size``.
    """
    cfg = cfg or SchemeConfig()
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    if h0.ndim == 2:
        h0 = h0[None]
    R, M, n = h0.shape
    if n != grid.n:
        raise ValueError("h0 does not match the grid")
    replica_ids = np.asarray(replica_ids, dtype=np.int64)
    if len(replica_ids) != R:
        raise ValueError("one replica id per row of h0 is required")
    slopes = np.asarray(slopes, dtype=float).reshape(M, 2)
    dt = _resolve_dt(grid, cfg)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    rt = cfg.record_times if record_times is None else tuple(record_times)
    if not rt:
        rt = (t_end,)
    rt = sorted(set(float(t) for t in rt))
    rec = np.array([int(round(t / dt)) for t in rt], dtype=np.int64)
    if rec.min() < 0 or rec.max() > n_steps:
        raise ValueError("record times must lie in [0, t_end]")
    bad = [t for t, k in zip(rt, rec) if abs(k * dt - t) > 1e-9 * max(1.0, t)]
    if bad:
        raise ValueError(f"record times {bad} are not multiples of dt={dt}; adjust dx, dt_factor or the times")
    if len(set(rec.tolist())) != len(rec):
        raise ValueError("record times must be distinct")
    ghost_lo = np.exp(-slopes[:, 0] * grid.dx)
    ghost_hi = np.exp(slopes[:, 1] * grid.dx)
    words = np.array([StreamKey(master_seed, int(i), purpose).words for i in replica_ids],
                     dtype=np.uint64).reshape(R, 4)
    r = dt / (2.0 * grid.dx**2)
    sigma = math.sqrt(dt / grid.dx)
    args = (ghost_lo, ghost_hi, wall == "left", wall == "right")
    tail = (grid.cell_offset, rec, n_steps, r, sigma, cfg.scheme == "explicit-euler", bool(cfg.noise))
    chunks = [slice(i, min(R, i + cfg.chunk_size)) for i in range(0, R, max(1, cfg.chunk_size))]
    if cfg.n_jobs == 1 or len(chunks) == 1:
        parts = [_run_chunk(h0[c], *args, words[c], *tail) for c in chunks]
    else:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=cfg.n_jobs)(delayed(_run_chunk)(h0[c], *args, words[c], *tail) for c in chunks)
    out = np.concatenate(parts, axis=0)
    return EnsembleRun(grid=grid, times=np.array(rt), h=out, replica_ids=replica_ids,
                       meta={"dt": dt, "n_steps": n_steps, "scheme": cfg.scheme, "noise": cfg.noise,
                             "seed": master_seed, "purpose": Purpose.parse(purpose).name})


def evolve_field(f: FieldState, key: StreamKey, t_end: float, cfg: SchemeConfig | None = None) -> Trajectory:
    """Evolve a single profile from ``f.t`` to ``f.t + t_end``."""
    cfg = cfg or SchemeConfig()
    run = evolve_ensemble(f.h[None, None], f.grid, [(f.slope_left, f.slope_right)], key.master_seed,
                          [key.replica_id], t_end, cfg, wall=f.wall, purpose=key.purpose)
    states = [f.copy(h=run.h[0, k, 0], t=f.t + float(t)) for k, t in enumerate(run.times)]
    return Trajectory(times=[f.t + float(t) for t in run.times], states=states)


def evolve_coupled(state: CoupledState, key: StreamKey, t_end: float,
                   cfg: SchemeConfig | None = None) -> Trajectory:
    """Evolve every member of ``state`` with one shared noise field.

    Records at ``cfg.record_times`` (relative to the start) or only at
    ``t_end``.  Returns a :class:`Trajectory` of :class:`CoupledState`.
    """
    cfg = cfg or SchemeConfig()
    members = state.members
    walls = {m.wall for m in members}
    if len(walls) > 1:
        raise ValueError("coupled members must share the same wall")
    h0 = np.stack([m.h for m in members])[None]
    slopes = [(m.slope_left, m.slope_right) for m in members]
    run = evolve_ensemble(h0, state.grid, slopes, key.master_seed, [key.replica_id], t_end, cfg,
                          wall=walls.pop(), purpose=key.purpose)
    states = []
    for k, t in enumerate(run.times):
        fs = [m.copy(h=run.h[0, k, j], t=state.t + float(t)) for j, m in enumerate(members)]
        states.append(CoupledState(*fs))
    return Trajectory(times=[state.t + float(t) for t in run.times], states=states)


def shear_twin_check(theta: float, key: StreamKey, t_end: float, cfg: SchemeConfig | None = None, *,
                     grid: GridSpec | None = None, n_replicas: int = 400, probe_x=(0.0,)) -> dict:
    """Distributional self-test of shear invariance.

    Run A starts flat (``h = 0``) and run B from ``theta x``, with independent
    noise.  In law ``h_B(t, x - theta t) = h_A(t, x) + theta x - theta^2 t / 2``;
    both sides are sampled at ``probe_x`` (pooled over probes) and compared by
    a two-sample KS statistic.  ``theta * t_end`` must be a multiple of dx.
    """
    from scipy.stats import ks_2samp

    from .field import default_half_width

    cfg = cfg or SchemeConfig()
    if grid is None:
        grid = GridSpec.symmetric(default_half_width(theta, t_end) + max(map(abs, probe_x)), 0.05)
    x = grid.x
    shift = theta * t_end
    k_shift = int(round(shift / grid.dx))
    if abs(shift - k_shift * grid.dx) > 1e-9:
        raise ValueError("theta * t_end must be a multiple of dx")
    ids = key.replica_id + np.arange(n_replicas)
    zero = np.zeros((n_replicas, 1, grid.n))
    a = evolve_ensemble(zero, grid, [(0.0, 0.0)], key.master_seed, ids, t_end, cfg, purpose=key.purpose)
    b = evolve_ensemble(zero + theta * x, grid, [(theta, theta)], key.master_seed, ids + n_replicas,
                        t_end, cfg, purpose=key.purpose)
    lhs, rhs = [], []
    for px in probe_x:
        i = grid.index_of(px)
        lhs.append(b.h[:, -1, 0, i - k_shift])
        rhs.append(a.h[:, -1, 0, i] + theta * x[i] - 0.5 * theta**2 * t_end)
    lhs = np.concatenate(lhs)
    rhs = np.concatenate(rhs)
    res = ks_2samp(lhs, rhs)
    se = math.sqrt(lhs.var(ddof=1) / len(lhs) + rhs.var(ddof=1) / len(rhs))
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue), "n": int(n_replicas),
            "probes": [float(p) for p in probe_x], "mean_lhs": float(lhs.mean()),
            "mean_rhs": float(rhs.mean()), "mean_diff_se": se, "dt": float(a.meta["dt"])}

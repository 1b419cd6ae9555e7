"""Counter-based Gaussian noise addressed by (seed, replica, purpose, step, cell).

Every draw is a pure function of its address, so a simulation replays
bit-identically regardless of scheduling, chunking or worker count, and two
solvers that share a grid spacing see the same noise on overlapping cells.

The bit source is Philox4x32-10.  Each generator call yields 128 bits, which
are turned into two 53-bit uniforms on (0, 1) and mapped to standard normals
through the inverse normal CDF (Wichura's AS241 rational approximation, full
double precision).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba as nb
import numpy as np

__all__ = [
    "Purpose",
    "StreamKey",
    "NoiseSlice",
    "NoiseStream",
    "make_stream",
    "gaussian_slice",
    "normals",
    "philox4x32",
    "inv_normal_cdf",
]

_U = np.uint64
_MASK32 = _U(0xFFFFFFFF)
_S32 = _U(32)
_PHILOX_M0 = _U(0xD2511F53)
_PHILOX_M1 = _U(0xCD9E8D57)
_PHILOX_W0 = _U(0x9E3779B9)
_PHILOX_W1 = _U(0xBB67AE85)
_TWO_M53 = 1.0 / 9007199254740992.0

# AS241 (PPND16) coefficients, lowest order first.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


class Purpose(enum.IntEnum):
    """What a stream is used for; part of the noise address."""

    INITIAL_DATA = 0
    DYNAMICS = 1
    HALFLINE = 2

    @classmethod
    def parse(cls, value: "Purpose | str | int") -> "Purpose":
        if isinstance(value, Purpose):
            return value
        if isinstance(value, str):
            return cls[value.strip().upper().replace("-", "_")]
        return cls(int(value))


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    replica_id: int = 0
    purpose: Purpose = Purpose.DYNAMICS

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        if not 0 <= int(self.replica_id) < 2**56:
            raise ValueError(f"replica_id must be in [0, 2**56), got {self.replica_id}")
        object.__setattr__(self, "purpose", Purpose.parse(self.purpose))

    @property
    def words(self) -> tuple[int, int, int, int]:
        """(key0, key1, counter2, counter3) words fed to Philox."""
        seed = int(self.master_seed)
        rep = int(self.replica_id)
        return (seed & 0xFFFFFFFF, seed >> 32, rep & 0xFFFFFFFF,
                ((rep >> 32) << 8) | int(self.purpose))

    def with_replica(self, replica_id: int) -> "StreamKey":
        return StreamKey(self.master_seed, replica_id, self.purpose)

    def with_purpose(self, purpose) -> "StreamKey":
        return StreamKey(self.master_seed, self.replica_id, purpose)


@dataclass(frozen=True)
class NoiseSlice:
    step_index: int
    values: np.ndarray


@dataclass
class NoiseStream:
    """A key plus a step cursor.  Cheap to copy or rebuild from the key."""

    key: StreamKey
    step: int = 0
    cell_start: int = field(default=0)


@nb.njit(inline="always")
def _poly7(c, x):
    return ((((((c[7] * x + c[6]) * x + c[5]) * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0]


@nb.njit(inline="always")
def _ppnd16(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly7(_A, r) / _poly7(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        v = _poly7(_C, r) / _poly7(_D, r)
    else:
        r -= 5.0
        v = _poly7(_E, r) / _poly7(_F, r)
    return -v if q < 0.0 else v


@nb.njit(inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        c0, c1, c2, c3 = ((p1 >> _S32) ^ c1 ^ k0), p1 & _MASK32, ((p0 >> _S32) ^ c3 ^ k1), p0 & _MASK32
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


@nb.njit(inline="always")
def _block_normals(block, step, k0, k1, c2, c3):
    """Two standard normals for the cell pair ``2*block, 2*block + 1``."""
    w0, w1, w2, w3 = _philox(_U(block) & _MASK32, _U(step) & _MASK32, c2, c3, k0, k1)
    u0 = (float((w0 >> _U(5)) << _U(26)) + float(w1 >> _U(6)) + 0.5) * _TWO_M53
    u1 = (float((w2 >> _U(5)) << _U(26)) + float(w3 >> _U(6)) + 0.5) * _TWO_M53
    return _ppnd16(u0), _ppnd16(u1)


@nb.njit(cache=True)
def _fill_normals(k0, k1, c2, c3, step, cell_start, out):
    n = out.shape[0]
    i = 0
    while i < n:
        cell = cell_start + i
        z0, z1 = _block_normals(cell >> 1, step, k0, k1, c2, c3)
        if cell & 1:
            out[i] = z1
            i += 1
        else:
            out[i] = z0
            if i + 1 < n:
                out[i + 1] = z1
            i += 2


@nb.njit(cache=True)
def _philox_vec(c0, c1, c2, c3, k0, k1):
    return _philox(c0, c1, c2, c3, k0, k1)


@nb.njit(cache=True)
def _ppnd16_vec(p, out):
    for i in range(p.shape[0]):
        out[i] = _ppnd16(p[i])


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 block; exposed for known-answer tests."""
    c = [_U(int(v) & 0xFFFFFFFF) for v in counter]
    k = [_U(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in _philox_vec(c[0], c[1], c[2], c[3], k[0], k[1]))


def inv_normal_cdf(p) -> np.ndarray:
    """Standard normal quantile function (AS241), vectorised over ``p`` in (0, 1)."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    out = np.empty_like(p)
    _ppnd16_vec(p.ravel(), out.ravel())
    return out


def _check_address(step: int, cell_start: int, n: int) -> None:
    if not 0 <= step < 2**32:
        raise ValueError(f"step index {step} outside [0, 2**32)")
    if not (-(2**31) <= cell_start and cell_start + n <= 2**31):
        raise ValueError("cell indices must lie in the signed 32-bit range")


def normals(key: StreamKey, step: int, cell_start: int, n: int) -> np.ndarray:
    """Standard normals for cells ``cell_start .. cell_start + n - 1`` at ``step``."""
    if n < 1:
        raise ValueError("need at least one cell")
    _check_address(step, cell_start, n)
    k0, k1, c2, c3 = key.words
    out = np.empty(n)
    _fill_normals(_U(k0), _U(k1), _U(c2), _U(c3), np.int64(step), np.int64(cell_start), out)
    return out


def make_stream(key: StreamKey, cell_start: int = 0) -> NoiseStream:
    """Fresh stream positioned at step 0.  Same key, same draws."""
    return NoiseStream(key=key, step=0, cell_start=int(cell_start))


def gaussian_slice(stream: NoiseStream, n: int, cell_start: int | None = None) -> NoiseSlice:
    """Draw ``n`` i.i.d. N(0, 1) values for the stream's current step and advance it.

    ``cell_start`` is the absolute index of the first cell; it defaults to the
    stream's own offset.
    """
    if n < 1:
        raise ValueError("slice length must be >= 1")
    start = stream.cell_start if cell_start is None else int(cell_start)
    values = normals(stream.key, stream.step, start, n)
    out = NoiseSlice(step_index=stream.step, values=values)
    stream.step += 1
    return out

"""Counter-based random streams.

Every random number used by the Monte Carlo engine is a pure function of
``(key, path index, step index, coordinate)`` through Philox4x32-10, so a
run is reproducible no matter how paths are split across blocks or threads.
Keys come from a 64-bit master seed plus integer labels via numpy's
``SeedSequence``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["derive_key", "philox4x32", "philox_uniform_pair", "stable_draw", "StreamKey"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_TWO53 = 9007199254740992.0


StreamKey = tuple  # (key0, key1) as python ints


def derive_key(master_seed: int, *labels: int) -> tuple[int, int]:
    """Philox key for the stream identified by ``master_seed`` and ``labels``."""
    if master_seed < 0 or master_seed >= 2**64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(x) for x in labels))
    k = ss.generate_state(2, dtype=np.uint32)
    return int(k[0]), int(k[1])


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint32 values held in uint64."""
    c0 = np.uint64(c0) & _MASK
    c1 = np.uint64(c1) & _MASK
    c2 = np.uint64(c2) & _MASK
    c3 = np.uint64(c3) & _MASK
    k0 = np.uint64(k0) & _MASK
    k1 = np.uint64(k1) & _MASK
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK
        c0 = (hi1 ^ c1 ^ k0) & _MASK
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK
        c3 = lo0
        k0 = (k0 + np.uint64(_W0)) & _MASK
        k1 = (k1 + np.uint64(_W1)) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def philox_uniform_pair(path, step, coord, k0, k1):
    """Two uniforms in the open interval (0, 1) with 53-bit resolution."""
    path = np.uint64(path)
    x0, x1, x2, x3 = philox4x32(
        np.uint64(step) & _MASK,
        np.uint64(coord) & _MASK,
        path & _MASK,
        path >> np.uint64(32),
        k0,
        k1,
    )
    a = (x0 >> np.uint64(5)) * np.uint64(67108864) + (x1 >> np.uint64(6))
    b = (x2 >> np.uint64(5)) * np.uint64(67108864) + (x3 >> np.uint64(6))
    u1 = (float(a) + 0.5) / _TWO53
    u2 = (float(b) + 0.5) / _TWO53
    return u1, u2


@njit(cache=True, nogil=True)
def stable_draw(alpha, path, step, coord, k0, k1):
    """Standard symmetric stable variate (CMS transform, unit scale)."""
    u1, u2 = philox_uniform_pair(path, step, coord, k0, k1)
    v = math.pi * (u1 - 0.5)
    if alpha == 1.0:
        return math.tan(v)
    w = -math.log(u2)
    return (
        math.sin(alpha * v)
        / math.cos(v) ** (1.0 / alpha)
        * (math.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )

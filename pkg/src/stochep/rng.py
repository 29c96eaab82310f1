"""Counter-based Gaussian increments.

Every random number is a pure function of ``(seed, stream, trajectory, step,
index)`` through the Philox4x32-10 block cipher, so ensembles give the same
paths whatever the batching or thread layout. Normals come from the inverse
normal CDF applied to 53-bit uniforms.
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 on a batch of counters ``(..., 4)`` under one key ``(2,)``."""
    c = np.asarray(counter, dtype=np.uint32)
    k = np.asarray(key, dtype=np.uint32)
    c0, c1, c2, c3 = (c[..., i].astype(np.uint64) for i in range(4))
    k0 = np.uint64(k[..., 0])
    k1 = np.uint64(k[..., 1])
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (((p1 >> _SHIFT) ^ c1 ^ k0) & _MASK,
                          p1 & _MASK,
                          ((p0 >> _SHIFT) ^ c3 ^ k1) & _MASK,
                          p0 & _MASK)
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def stream_id(name: str) -> int:
    """Stable 32-bit tag for a named noise stream."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def _key(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint32)


def uniforms(seed, stream, traj, step, n):
    """``n`` uniforms in (0, 1) per (trajectory, step) pair.

    ``traj`` and ``step`` broadcast against each other; the result has shape
    ``broadcast(traj, step).shape + (n,)``.
    """
    traj, step = np.broadcast_arrays(np.asarray(traj, dtype=np.uint64), np.asarray(step, dtype=np.uint64))
    blocks = (n + 1) // 2
    ctr = np.empty(traj.shape + (blocks, 4), dtype=np.uint32)
    ctr[..., 0] = (step & _MASK).astype(np.uint32)[..., None]
    ctr[..., 1] = np.arange(blocks, dtype=np.uint32)
    ctr[..., 2] = (traj & _MASK).astype(np.uint32)[..., None]
    ctr[..., 3] = np.uint32(stream & 0xFFFFFFFF)
    words = philox4x32(ctr, _key(seed)).astype(np.uint64)
    hi = words[..., 0::2] >> np.uint64(5)   # 27 bits
    lo = words[..., 1::2] >> np.uint64(6)   # 26 bits
    u = ((hi << np.uint64(26)) + lo).astype(np.float64)
    u = (u + 0.5) / float(1 << 53)
    return u.reshape(traj.shape + (2 * blocks,))[..., :n]


def normals(seed, stream, traj, step, n):
    """Standard normals with the same addressing as :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, traj, step, n))


def brownian_increments(seed, stream, traj, step, n, dt):
    return np.sqrt(dt) * normals(seed, stream, traj, step, n)

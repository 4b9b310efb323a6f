"""Counter-based random numbers.

Every raw 64-bit word is a pure function of ``(seed, stream_id, channel,
index)``: it is one half of a Philox4x32-10 block whose key is the seed and
whose counter words are ``(block_lo, block_hi, stream_lo, stream_hi)``.
Block ``b`` on channel ``c`` has index ``(c << 56) | b``; rejection samplers
that need extra words read them from an auxiliary counter range flagged by
the top bit.  Normal ``k`` of a stream therefore always starts from primary
word ``k``, which lets many replicas be generated in lock-step.

Both numba-compiled scalar code and vectorized numpy code are built from the
same function bodies below, so the two backends produce identical words.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import njit

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint64(0x9E3779B9)
W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
S32 = np.uint64(32)
S11 = np.uint64(11)
S56 = np.uint64(56)
ONE = np.uint64(1)
LOW7 = np.uint64(0x7F)
AUX_FLAG = np.uint64(1 << 63)
TWO_M53 = 2.0 ** -53
TWO_M52 = 2.0 ** -52
MAX_CHANNEL = 127

# Ziggurat (Marsaglia-Tsang layers, Doornik's ZIGNOR variant), 128 layers.
ZIG_C = 128
ZIG_R = 3.442619855899
ZIG_V = 9.91256303526217e-3


def _zig_tables():
    x = np.zeros(ZIG_C + 1)
    f = math.exp(-0.5 * ZIG_R * ZIG_R)
    x[0] = ZIG_V / f
    x[1] = ZIG_R
    for i in range(2, ZIG_C):
        x[i] = math.sqrt(-2.0 * math.log(ZIG_V / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    x[ZIG_C] = 0.0
    return x, x[1:] / x[:-1]


ZX, ZR = _zig_tables()


def split_key(seed: int):
    """Return the two 32-bit key words of a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def block_base(channel: int, aux: bool = False) -> np.uint64:
    """Counter offset for a channel's primary (or auxiliary) blocks."""
    channel = int(channel)
    if not 0 <= channel <= MAX_CHANNEL:
        raise ValueError(f"channel must lie in [0, {MAX_CHANNEL}]")
    base = np.uint64(channel) << S56
    return base | AUX_FLAG if aux else base


def _philox_impl(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = (k0 + W0) & MASK32
            k1 = (k1 + W1) & MASK32
        p0 = M0 * c0
        p1 = M1 * c2
        c0, c1, c2, c3 = (p1 >> S32) ^ c1 ^ k0, p1 & MASK32, (p0 >> S32) ^ c3 ^ k1, p0 & MASK32
    return c0, c1, c2, c3


def _block_words_impl(blk, sid, k0, k1):
    o0, o1, o2, o3 = philox4x32(blk & MASK32, blk >> S32, sid & MASK32, sid >> S32, k0, k1)
    return (o0 << S32) | o1, (o2 << S32) | o3


philox4x32 = njit(inline="always")(_philox_impl)
block_words = njit(inline="always")(_block_words_impl)


def philox4x32_np(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox4x32-10 on uint64 arrays holding 32-bit words."""
    return _philox_impl(*(np.asarray(v, dtype=np.uint64) for v in (c0, c1, c2, c3, k0, k1)))


def block_words_np(blk, sid, k0, k1):
    blk = np.asarray(blk, dtype=np.uint64)
    sid = np.asarray(sid, dtype=np.uint64)
    o0, o1, o2, o3 = _philox_impl(blk & MASK32, blk >> S32, sid & MASK32, sid >> S32,
                                  np.uint64(k0), np.uint64(k1))
    return (o0 << S32) | o1, (o2 << S32) | o3


@njit(inline="always")
def word_at(k0, k1, sid, base, j):
    """Raw word ``j`` (uint64 index) of the counter range starting at ``base``."""
    r0, r1 = block_words(base | (j >> ONE), sid, k0, k1)
    if j & ONE:
        return r1
    return r0


def words_np(k0, k1, sid, base, j):
    """Vectorized ``word_at`` over arrays of stream ids and/or indices."""
    j = np.asarray(j, dtype=np.uint64)
    r0, r1 = block_words_np(np.uint64(base) | (j >> ONE), sid, k0, k1)
    return np.where((j & ONE).astype(bool), r1, r0)


@njit(inline="always")
def unit(w):
    """Uniform on [0, 1) from the top 53 bits of a word."""
    return np.int64(w >> S11) * TWO_M53


def unit_np(w):
    return (np.asarray(w, dtype=np.uint64) >> S11).astype(np.int64) * TWO_M53


@njit
def zig_slow(w, k0, k1, sid, auxbase, a):
    """Finish a ziggurat draw whose first word ``w`` missed the fast path.

    Extra words come from the auxiliary range at cursor ``a``; returns the
    normal variate and the advanced cursor.
    """
    while True:
        i = np.int64(w & LOW7)
        u = np.int64(w >> S11) * TWO_M52 - 1.0
        if abs(u) < ZR[i]:
            return u * ZX[i], a
        if i == 0:
            while True:
                x = math.log1p(-unit(word_at(k0, k1, sid, auxbase, np.uint64(a)))) / ZIG_R
                y = math.log1p(-unit(word_at(k0, k1, sid, auxbase, np.uint64(a + 1))))
                a += 2
                if -2.0 * y >= x * x:
                    break
            if u < 0.0:
                return x - ZIG_R, a
            return ZIG_R - x, a
        x = u * ZX[i]
        f0 = math.exp(-0.5 * (ZX[i] * ZX[i] - x * x))
        f1 = math.exp(-0.5 * (ZX[i + 1] * ZX[i + 1] - x * x))
        v = unit(word_at(k0, k1, sid, auxbase, np.uint64(a)))
        a += 1
        if f1 + v * (f0 - f1) < 1.0:
            return x, a
        w = word_at(k0, k1, sid, auxbase, np.uint64(a))
        a += 1


@njit(inline="always")
def zig_normal(w, k0, k1, sid, auxbase, a):
    """Ziggurat normal from primary word ``w``; fast path needs no extra words."""
    i = np.int64(w & LOW7)
    u = np.int64(w >> S11) * TWO_M52 - 1.0
    if abs(u) < ZR[i]:
        return u * ZX[i], a
    return zig_slow(w, k0, k1, sid, auxbase, a)


def zig_normal_np(w, k0, k1, sids, auxbase, a):
    """Vectorized ziggurat across replicas.

    ``w[r]`` is the primary word of replica ``r`` (stream ``sids[r]``);
    ``a`` holds per-replica auxiliary cursors and is advanced in place in the
    same order the scalar sampler would consume words.
    """
    w = np.array(w, dtype=np.uint64, copy=True)
    sids = np.broadcast_to(np.asarray(sids, dtype=np.uint64), w.shape)
    z = np.empty(w.shape)
    i = (w & LOW7).astype(np.int64)
    u = (w >> S11).astype(np.int64) * TWO_M52 - 1.0
    fast = np.abs(u) < ZR[i]
    z[fast] = u[fast] * ZX[i[fast]]
    pending = np.flatnonzero(~fast)
    while pending.size:
        ww = w[pending]
        i = (ww & LOW7).astype(np.int64)
        u = (ww >> S11).astype(np.int64) * TWO_M52 - 1.0
        ok = np.abs(u) < ZR[i]
        z[pending[ok]] = u[ok] * ZX[i[ok]]
        tail = ~ok & (i == 0)
        if tail.any():
            idx = pending[tail]
            z[idx] = _zig_tail_np(k0, k1, sids[idx], auxbase, a, idx, u[tail])
        wedge = ~ok & (i != 0)
        idx = pending[wedge]
        if idx.size == 0:
            break
        iw = i[wedge]
        x = u[wedge] * ZX[iw]
        f0 = np.exp(-0.5 * (ZX[iw] * ZX[iw] - x * x))
        f1 = np.exp(-0.5 * (ZX[iw + 1] * ZX[iw + 1] - x * x))
        v = unit_np(words_np(k0, k1, sids[idx], auxbase, a[idx]))
        a[idx] += 1
        acc = f1 + v * (f0 - f1) < 1.0
        z[idx[acc]] = x[acc]
        rej = idx[~acc]
        if rej.size:
            w[rej] = words_np(k0, k1, sids[rej], auxbase, a[rej])
            a[rej] += 1
        pending = rej
    return z


def _zig_tail_np(k0, k1, sids, auxbase, a, idx, u):
    out = np.empty(idx.size)
    todo = np.arange(idx.size)
    while todo.size:
        r = idx[todo]
        x = np.log1p(-unit_np(words_np(k0, k1, sids[todo], auxbase, a[r]))) / ZIG_R
        y = np.log1p(-unit_np(words_np(k0, k1, sids[todo], auxbase, a[r] + 1)))
        a[r] += 2
        acc = -2.0 * y >= x * x
        done = todo[acc]
        xs = x[acc]
        out[done] = np.where(u[done] < 0.0, xs - ZIG_R, ZIG_R - xs)
        todo = todo[~acc]
    return out

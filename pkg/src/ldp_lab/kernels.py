"""Monte Carlo hot loops, each in a numba and a numpy flavour.

Every kernel takes a seed and an array of stream ids (one replica per id)
and returns per-replica path summaries.  Replica ``r`` only reads words of
stream ``sids[r]``, so results do not depend on batching, on worker count or
on which backend ran them (up to last-ulp differences in ``exp``/``log``
inside rare rejection branches).

Word layout per replica (channel 0 unless stated):

* normals: word ``k`` starts normal ``k``; rejections read auxiliary words.
* Markov chains: word ``k`` drives the draw of state ``k`` (state 0 is the
  initial state).
* Poisson clocks: block ``m`` drives atom ``m`` (first word the inter-arrival
  time, second word the cell mark).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from ._jit import njit, resolve_backend
from .rng import ONE, block_words, block_words_np, unit, unit_np, zig_normal, zig_normal_np

LANES = 32


@dataclass
class PathSummary:
    """Per-replica statistics of a scalar path."""

    terminal: np.ndarray
    sup_abs: np.ndarray
    maximum: np.ndarray
    minimum: np.ndarray
    extra: dict | None = None

    def __len__(self):
        return self.terminal.shape[0]


def _prep(seed, sids, channel):
    k0, k1 = rng.split_key(seed)
    sids = np.ascontiguousarray(sids, dtype=np.uint64)
    return k0, k1, sids, rng.block_base(channel), rng.block_base(channel, aux=True)


@njit(inline="always")
def _pick(cdf, u):
    i = 0
    while u >= cdf[i]:
        i += 1
    return i


@njit(inline="always")
def _pick_row(cdf_rows, row, u):
    # branchless count of cdf entries <= u; random states defeat branch prediction
    i = 0
    for j in range(cdf_rows.shape[1] - 1):
        i += u >= cdf_rows[row, j]
    return i


# ---------------------------------------------------------------- normals

@njit(inline="always")
def _fill_words(buf, k0, k1, sids, start, nl, base, nwords):
    # buf[j, l] = primary word j of lane l; word-major so lane writes are contiguous
    for b in range((nwords + 1) // 2):
        blk = base | np.uint64(b)
        for l in range(nl):
            buf[2 * b, l], buf[2 * b + 1, l] = block_words(blk, sids[start + l], k0, k1)


@njit(cache=True, nogil=True)
def _normal_lanes_nb(k0, k1, sids, base, auxbase, count, out):
    R = sids.shape[0]
    buf = np.empty((count + 1, LANES), np.uint64)
    for start in range(0, R, LANES):
        nl = min(LANES, R - start)
        _fill_words(buf, k0, k1, sids, start, nl, base, count)
        for l in range(nl):
            sid = sids[start + l]
            a = 0
            for k in range(count):
                out[start + l, k], a = zig_normal(buf[k, l], k0, k1, sid, auxbase, a)


def _normal_lanes_np(k0, k1, sids, base, auxbase, count, out):
    a = np.zeros(sids.shape[0], np.int64)
    for b in range((count + 1) // 2):
        r0, r1 = block_words_np(base | np.uint64(b), sids, k0, k1)
        out[:, 2 * b] = zig_normal_np(r0, k0, k1, sids, auxbase, a)
        if 2 * b + 1 < count:
            out[:, 2 * b + 1] = zig_normal_np(r1, k0, k1, sids, auxbase, a)


def normal_lanes(seed: int, sids, count: int, channel: int = 0, backend=None) -> np.ndarray:
    """First ``count`` normals of each stream, shape ``(len(sids), count)``."""
    k0, k1, sids, base, auxbase = _prep(seed, sids, channel)
    out = np.empty((sids.shape[0], count))
    if count == 0 or sids.shape[0] == 0:
        return out
    if resolve_backend(backend) == "numba":
        _normal_lanes_nb(k0, k1, sids, base, auxbase, count, out)
    else:
        _normal_lanes_np(k0, k1, sids, base, auxbase, count, out)
    return out


def uniform_lanes(seed: int, sids, count: int, channel: int = 0) -> np.ndarray:
    """First ``count`` uniforms of each stream (pure word arithmetic)."""
    k0, k1, sids, base, _ = _prep(seed, sids, channel)
    j = np.arange(count, dtype=np.uint64)
    w = rng.words_np(k0, k1, sids[:, None], base, j[None, :])
    return unit_np(w)


# ------------------------------------------------------- gaussian random walk

@njit(cache=True, nogil=True)
def _gauss_walk_nb(k0, k1, sids, base, auxbase, steps, sd, term, supa, hi, lo):
    R = sids.shape[0]
    buf = np.empty((steps + 1, LANES), np.uint64)
    for start in range(0, R, LANES):
        nl = min(LANES, R - start)
        _fill_words(buf, k0, k1, sids, start, nl, base, steps)
        for l in range(nl):
            sid = sids[start + l]
            a = 0
            x = 0.0
            mx = 0.0
            mn = 0.0
            for k in range(steps):
                z, a = zig_normal(buf[k, l], k0, k1, sid, auxbase, a)
                x += sd * z
                if x > mx:
                    mx = x
                if x < mn:
                    mn = x
            term[start + l] = x
            hi[start + l] = mx
            lo[start + l] = mn
            supa[start + l] = max(mx, -mn)


def _gauss_walk_np(k0, k1, sids, base, auxbase, steps, sd, term, supa, hi, lo):
    R = sids.shape[0]
    a = np.zeros(R, np.int64)
    x = np.zeros(R)
    mx = np.zeros(R)
    mn = np.zeros(R)
    for b in range((steps + 1) // 2):
        r0, r1 = block_words_np(base | np.uint64(b), sids, k0, k1)
        x = x + sd * zig_normal_np(r0, k0, k1, sids, auxbase, a)
        np.maximum(mx, x, out=mx)
        np.minimum(mn, x, out=mn)
        if 2 * b + 1 < steps:
            x = x + sd * zig_normal_np(r1, k0, k1, sids, auxbase, a)
            np.maximum(mx, x, out=mx)
            np.minimum(mn, x, out=mn)
    term[:] = x
    hi[:] = mx
    lo[:] = mn
    supa[:] = np.maximum(mx, -mn)


def gaussian_walk(seed: int, sids, steps: int, sd: float, channel: int = 0,
                  backend=None) -> PathSummary:
    """Random walk ``S_k = sd * (z_1 + ... + z_k)`` monitored at every step."""
    k0, k1, sids, base, auxbase = _prep(seed, sids, channel)
    R = sids.shape[0]
    term, supa, hi, lo = (np.empty(R) for _ in range(4))
    fn = _gauss_walk_nb if resolve_backend(backend) == "numba" else _gauss_walk_np
    fn(k0, k1, sids, base, auxbase, int(steps), float(sd), term, supa, hi, lo)
    return PathSummary(term, supa, hi, lo)


# ------------------------------------------------------------ markov chains

@njit(cache=True, nogil=True)
def _markov_walk_nb(k0, k1, sids, base, nsteps, inv_n, init_cdf, cdf_rows, b0, b1, x0,
                    term, supa, hi, lo):
    R = sids.shape[0]
    buf = np.empty((nsteps + 2, LANES), np.uint64)
    for start in range(0, R, LANES):
        nl = min(LANES, R - start)
        _fill_words(buf, k0, k1, sids, start, nl, base, nsteps + 1)
        for l in range(nl):
            s = _pick(init_cdf, unit(buf[0, l]))
            x = x0
            mx = x0
            mn = x0
            for k in range(1, nsteps + 1):
                s = _pick_row(cdf_rows, s, unit(buf[k, l]))
                x = x + (b0[s] + b1[s] * x) * inv_n
                mx = max(mx, x)
                mn = min(mn, x)
            term[start + l] = x
            hi[start + l] = mx
            lo[start + l] = mn
            supa[start + l] = max(abs(mx), abs(mn))


def _markov_walk_np(k0, k1, sids, base, nsteps, inv_n, init_cdf, cdf_rows, b0, b1, x0,
                    term, supa, hi, lo):
    R = sids.shape[0]
    nwords = nsteps + 1
    x = np.full(R, x0)
    mx = x.copy()
    mn = x.copy()
    st = np.zeros(R, np.int64)
    for b in range((nwords + 1) // 2):
        r0, r1 = block_words_np(base | np.uint64(b), sids, k0, k1)
        for half, w in enumerate((r0, r1)):
            k = 2 * b + half
            if k >= nwords:
                break
            u = unit_np(w)
            if k == 0:
                st = np.sum(u[:, None] >= init_cdf[None, :], axis=1)
                continue
            st = np.sum(u[:, None] >= cdf_rows[st], axis=1)
            x = x + (b0[st] + b1[st] * x) * inv_n
            np.maximum(mx, x, out=mx)
            np.minimum(mn, x, out=mn)
    term[:] = x
    hi[:] = mx
    lo[:] = mn
    supa[:] = np.maximum(np.abs(mx), np.abs(mn))


def markov_walk(seed: int, sids, nsteps: int, n: int, init_probs, kernel, b0, b1=None,
                x0: float = 0.0, channel: int = 0, backend=None) -> PathSummary:
    """Evolution ``X_{k+1} = X_k + (b0[s] + b1[s] X_k)/n`` along a Markov chain.

    ``s = xi_{k+1}``; the chain starts from ``init_probs`` and moves with the
    row-stochastic ``kernel``.
    """
    from .core import cumulative

    k0, k1, sids, base, _ = _prep(seed, sids, channel)
    E = np.asarray(kernel).shape[0]
    init_cdf = cumulative(init_probs)
    cdf_rows = np.ascontiguousarray(cumulative(kernel))
    b0 = np.ascontiguousarray(b0, dtype=float)
    b1 = np.zeros(E) if b1 is None else np.ascontiguousarray(b1, dtype=float)
    R = sids.shape[0]
    term, supa, hi, lo = (np.empty(R) for _ in range(4))
    fn = _markov_walk_nb if resolve_backend(backend) == "numba" else _markov_walk_np
    fn(k0, k1, sids, base, int(nsteps), 1.0 / n, init_cdf, cdf_rows, b0, b1, float(x0),
       term, supa, hi, lo)
    return PathSummary(term, supa, hi, lo)


# ----------------------------------------------------------- poisson clocks

@njit(cache=True, nogil=True)
def _poisson_walk_nb(k0, k1, sids, base, rate, T, cell_cdf, hvals, inv_n, comp,
                     term, supa, hi, lo, count):
    R = sids.shape[0]
    for r in range(R):
        sid = sids[r]
        t = 0.0
        x = 0.0
        mx = 0.0
        mn = 0.0
        m = 0
        if rate > 0.0:
            while True:
                w0, w1 = block_words(base | np.uint64(m), sid, k0, k1)
                t += -math.log1p(-unit(w0)) / rate
                if t > T:
                    break
                pre = x - comp * t
                mx = max(mx, pre)
                mn = min(mn, pre)
                x += hvals[_pick(cell_cdf, unit(w1))] * inv_n
                post = x - comp * t
                mx = max(mx, post)
                mn = min(mn, post)
                m += 1
        end = x - comp * T
        mx = max(mx, end)
        mn = min(mn, end)
        term[r] = end
        hi[r] = mx
        lo[r] = mn
        supa[r] = max(mx, -mn)
        count[r] = m


def _poisson_walk_np(k0, k1, sids, base, rate, T, cell_cdf, hvals, inv_n, comp,
                     term, supa, hi, lo, count):
    R = sids.shape[0]
    t = np.zeros(R)
    x = np.zeros(R)
    mx = np.zeros(R)
    mn = np.zeros(R)
    cnt = np.zeros(R, np.int64)
    live = np.arange(R) if rate > 0.0 else np.arange(0)
    m = 0
    while live.size:
        w0, w1 = block_words_np(base | np.uint64(m), sids[live], k0, k1)
        tl = t[live] - np.log1p(-unit_np(w0)) / rate
        t[live] = tl
        alive = tl <= T
        live = live[alive]
        tl = tl[alive]
        w1 = w1[alive]
        pre = x[live] - comp * tl
        mx[live] = np.maximum(mx[live], pre)
        mn[live] = np.minimum(mn[live], pre)
        cells = np.sum(unit_np(w1)[:, None] >= cell_cdf[None, :], axis=1)
        x[live] = x[live] + hvals[cells] * inv_n
        post = x[live] - comp * tl
        mx[live] = np.maximum(mx[live], post)
        mn[live] = np.minimum(mn[live], post)
        cnt[live] += 1
        m += 1
    end = x - comp * T
    term[:] = end
    hi[:] = np.maximum(mx, end)
    lo[:] = np.minimum(mn, end)
    supa[:] = np.maximum(hi, -lo)
    count[:] = cnt


def poisson_walk(seed: int, sids, n: int, T: float, masses, h, centered: bool = False,
                 channel: int = 0, backend=None) -> PathSummary:
    """Path ``xi_n(h, [0,t])/n`` (optionally minus ``t * int h dnu``) on [0, T].

    Atoms arrive at total rate ``n * sum(masses)`` with marks proportional to
    mass.  ``extra['atoms']`` holds the atom counts.
    """
    from .core import cumulative

    k0, k1, sids, base, _ = _prep(seed, sids, channel)
    masses = np.asarray(masses, dtype=float)
    hvals = np.ascontiguousarray(h, dtype=float)
    total = float(masses.sum())
    rate = n * total
    cell_cdf = cumulative(masses / total) if total > 0 else np.ones(masses.size)
    comp = float(np.sum(hvals * masses)) if centered else 0.0
    R = sids.shape[0]
    term, supa, hi, lo = (np.empty(R) for _ in range(4))
    count = np.empty(R, np.int64)
    fn = _poisson_walk_nb if resolve_backend(backend) == "numba" else _poisson_walk_np
    fn(k0, k1, sids, base, float(rate), float(T), cell_cdf, hvals, 1.0 / n, comp,
       term, supa, hi, lo, count)
    return PathSummary(term, supa, hi, lo, {"atoms": count})


# ------------------------------------------------- adversarial integrands (UET)

@njit(inline="always")
def _zrow(mode, period, i, state, c_pos, c_neg):
    if mode == 0:
        if (i // period) % 2 == 0:
            return c_pos
        return c_neg
    if state >= 0.0:
        return c_pos
    return c_neg


@njit(cache=True, nogil=True)
def _uet_gauss_nb(k0, k1, sids, base, auxbase, steps, scale, c_pos, c_neg, mode, period,
                  term, supa, qv):
    R = sids.shape[0]
    cells = c_pos.shape[0]
    for r in range(R):
        sid = sids[r]
        a = 0
        x = 0.0
        s = 0.0
        q = 0.0
        w0 = np.uint64(0)
        w1 = np.uint64(0)
        k = 0
        for i in range(steps):
            z = _zrow(mode, period, i, x, c_pos, c_neg)
            dx = 0.0
            for c in range(cells):
                if k % 2 == 0:
                    w0, w1 = block_words(base | np.uint64(k // 2), sid, k0, k1)
                    g, a = zig_normal(w0, k0, k1, sid, auxbase, a)
                else:
                    g, a = zig_normal(w1, k0, k1, sid, auxbase, a)
                k += 1
                dx += z[c] * scale[c] * g
            x += dx
            q += dx * dx
            if abs(x) > s:
                s = abs(x)
        term[r] = x
        supa[r] = s
        qv[r] = q


def _uet_gauss_np(k0, k1, sids, base, auxbase, steps, scale, c_pos, c_neg, mode, period,
                  term, supa, qv):
    R = sids.shape[0]
    cells = c_pos.shape[0]
    a = np.zeros(R, np.int64)
    x = np.zeros(R)
    s = np.zeros(R)
    q = np.zeros(R)
    k = 0
    r1 = None
    for i in range(steps):
        if mode == 0:
            z = np.broadcast_to(c_pos if (i // period) % 2 == 0 else c_neg, (R, cells))
        else:
            z = np.where((x >= 0.0)[:, None], c_pos[None, :], c_neg[None, :])
        dx = np.zeros(R)
        for c in range(cells):
            if k % 2 == 0:
                r0, r1 = block_words_np(base | np.uint64(k // 2), sids, k0, k1)
                g = zig_normal_np(r0, k0, k1, sids, auxbase, a)
            else:
                g = zig_normal_np(r1, k0, k1, sids, auxbase, a)
            k += 1
            dx = dx + z[:, c] * scale[c] * g
        x = x + dx
        q = q + dx * dx
        s = np.maximum(s, np.abs(x))
    term[:] = x
    supa[:] = s
    qv[:] = q


def uet_gaussian(seed: int, sids, n: int, t: float, steps: int, masses, c_pos, c_neg,
                 mode: int = 0, period: int = 1, channel: int = 0,
                 backend=None) -> PathSummary:
    """Integral of a two-valued predictable integrand against ``W_n``.

    At step ``i`` the integrand is ``c_pos`` or ``c_neg``: by the parity of
    ``i // period`` when ``mode == 0``, by the sign of the running integral
    when ``mode == 1``.  ``extra['qv']`` is the discrete quadratic variation.
    """
    k0, k1, sids, base, auxbase = _prep(seed, sids, channel)
    dt = t / steps
    scale = np.sqrt(np.asarray(masses, dtype=float) * dt / n)
    c_pos = np.ascontiguousarray(c_pos, dtype=float)
    c_neg = np.ascontiguousarray(c_neg, dtype=float)
    R = sids.shape[0]
    term, supa, qv = (np.empty(R) for _ in range(3))
    fn = _uet_gauss_nb if resolve_backend(backend) == "numba" else _uet_gauss_np
    fn(k0, k1, sids, base, auxbase, int(steps), scale, c_pos, c_neg, int(mode),
       max(int(period), 1), term, supa, qv)
    return PathSummary(term, supa, np.full(R, np.nan), np.full(R, np.nan), {"qv": qv})


@njit(cache=True, nogil=True)
def _uet_poisson_nb(k0, k1, sids, base, rate, t, dt, cell_cdf, inv_n, c_pos, c_neg, mode,
                    period, term, supa, raw):
    R = sids.shape[0]
    for r in range(R):
        sid = sids[r]
        tt = 0.0
        x = 0.0
        s = 0.0
        acc = 0.0
        m = 0
        if rate > 0.0:
            while True:
                w0, w1 = block_words(base | np.uint64(m), sid, k0, k1)
                tt += -math.log1p(-unit(w0)) / rate
                if tt > t:
                    break
                z = _zrow(mode, period, int(tt / dt), x, c_pos, c_neg)
                zc = z[_pick(cell_cdf, unit(w1))]
                acc += zc
                x += zc * inv_n
                if abs(x) > s:
                    s = abs(x)
                m += 1
        term[r] = x
        supa[r] = s
        raw[r] = acc


def _uet_poisson_np(k0, k1, sids, base, rate, t, dt, cell_cdf, inv_n, c_pos, c_neg, mode,
                    period, term, supa, raw):
    R = sids.shape[0]
    tt = np.zeros(R)
    x = np.zeros(R)
    s = np.zeros(R)
    acc = np.zeros(R)
    live = np.arange(R) if rate > 0.0 else np.arange(0)
    m = 0
    while live.size:
        w0, w1 = block_words_np(base | np.uint64(m), sids[live], k0, k1)
        tl = tt[live] - np.log1p(-unit_np(w0)) / rate
        tt[live] = tl
        alive = tl <= t
        live = live[alive]
        tl = tl[alive]
        cells = np.sum(unit_np(w1[alive])[:, None] >= cell_cdf[None, :], axis=1)
        xl = x[live]
        if mode == 0:
            even = ((tl / dt).astype(np.int64) // period) % 2 == 0
        else:
            even = xl >= 0.0
        zc = np.where(even, c_pos[cells], c_neg[cells])
        acc[live] = acc[live] + zc
        xl = xl + zc * inv_n
        x[live] = xl
        s[live] = np.maximum(s[live], np.abs(xl))
        m += 1
    term[:] = x
    supa[:] = s
    raw[:] = acc


def uet_poisson(seed: int, sids, n: int, t: float, steps: int, masses, c_pos, c_neg,
                mode: int = 0, period: int = 1, channel: int = 0,
                backend=None) -> PathSummary:
    """Integral ``Z_- . xi_n / n`` over [0, t] for a two-valued integrand.

    The integrand is read just before each atom (time parity on a grid of
    ``steps`` cells for ``mode == 0``, sign of the running integral for
    ``mode == 1``).  ``extra['raw']`` is the unscaled integral ``Z_- . xi_n``.
    """
    from .core import cumulative

    k0, k1, sids, base, _ = _prep(seed, sids, channel)
    masses = np.asarray(masses, dtype=float)
    total = float(masses.sum())
    cell_cdf = cumulative(masses / total) if total > 0 else np.ones(masses.size)
    c_pos = np.ascontiguousarray(c_pos, dtype=float)
    c_neg = np.ascontiguousarray(c_neg, dtype=float)
    R = sids.shape[0]
    term, supa, raw = (np.empty(R) for _ in range(3))
    fn = _uet_poisson_nb if resolve_backend(backend) == "numba" else _uet_poisson_np
    fn(k0, k1, sids, base, float(n * total), float(t), float(t / steps), cell_cdf, 1.0 / n,
       c_pos, c_neg, int(mode), max(int(period), 1), term, supa, raw)
    return PathSummary(term, supa, np.full(R, np.nan), np.full(R, np.nan), {"raw": raw})


# ---------------------------------------------------------- raw atom lists

def poisson_atoms(seed: int, sid: int, rate: float, T: float, masses, channel: int = 0):
    """Atom times and cells of one stream, matching the walk kernels' layout."""
    from .core import RandomStream

    stream = RandomStream(seed, sid)
    return _atoms_from_stream(stream, rate, T, masses, channel)


def _atoms_from_stream(stream, rate, T, masses, channel):
    from .core import cumulative

    masses = np.asarray(masses, dtype=float)
    total = float(masses.sum())
    if rate <= 0.0 or total <= 0.0:
        return np.empty(0), np.empty(0, np.int64)
    cdf = cumulative(masses / total)
    times, cells = [], []
    t = 0.0
    chunk = max(16, int(rate * T * 1.2) + 8)
    while True:
        w = stream.raw(2 * chunk, channel)
        gaps = -np.log1p(-unit_np(w[0::2])) / rate
        marks = np.searchsorted(cdf, unit_np(w[1::2]), side="right")
        arrivals = np.cumsum(np.concatenate(([t], gaps)))[1:]
        inside = arrivals <= T
        times.append(arrivals[inside])
        cells.append(marks[inside])
        if not inside.all():
            break
        t = arrivals[-1]
    return np.concatenate(times), np.concatenate(cells)

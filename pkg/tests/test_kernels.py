"""Replica kernels: backend agreement and agreement with the single-path simulators."""
import math

import numpy as np
import pytest

from ldp_lab import kernels
from ldp_lab._jit import NUMBA_ENABLED, resolve_backend
from ldp_lab.core import DiscreteMeasureSpace, RandomStream, TimeGrid
from ldp_lab.drivers import simulate_markov_chain, simulate_poisson

SIDS = np.arange(300, dtype=np.uint64)
FIELDS = ("terminal", "sup_abs", "maximum", "minimum")
needs_numba = pytest.mark.skipif(not NUMBA_ENABLED, reason="numba disabled")


def _close(a, b, atol=1e-12):
    for f in FIELDS:
        assert np.allclose(getattr(a, f), getattr(b, f), rtol=0, atol=atol, equal_nan=True), f


def test_resolve_backend():
    assert resolve_backend(None) in ("numba", "numpy")
    assert resolve_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        resolve_backend("cuda")


def test_normal_lanes_match_stream():
    z = kernels.normal_lanes(21, SIDS[:20], 500, backend="numpy")
    for r in range(20):
        assert np.array_equal(z[r], RandomStream(21, r).normal(500))


def test_gaussian_walk_matches_cumsum():
    sd = 0.1
    out = kernels.gaussian_walk(22, SIDS, 64, sd, backend="numpy")
    for r in (0, 17, 299):
        path = np.concatenate(([0.0], np.cumsum(sd * RandomStream(22, r).normal(64))))
        assert out.terminal[r] == pytest.approx(path[-1], abs=1e-12)
        assert out.sup_abs[r] == pytest.approx(np.abs(path).max(), abs=1e-12)
        assert out.maximum[r] == pytest.approx(path.max(), abs=1e-12)


def test_poisson_walk_matches_driver():
    sp = DiscreteMeasureSpace([0.3, 0.7])
    h = np.array([1.0, -2.0])
    n = 7
    out = kernels.poisson_walk(23, SIDS, n, 2.0, sp.masses, h, backend="numpy")
    for r in (0, 5, 123):
        d = simulate_poisson(sp, TimeGrid(2.0, 1), n, RandomStream(23, r))
        terminal = float(np.sum(h[d.cells])) / n
        assert out.terminal[r] == pytest.approx(terminal, abs=1e-12)
        path = np.concatenate(([0.0], np.cumsum(h[d.cells]) / n))
        assert out.maximum[r] == pytest.approx(path.max(), abs=1e-12)


def test_markov_walk_matches_chain():
    P = np.array([[0.3, 0.7], [0.6, 0.4]])
    init = np.array([0.5, 0.5])
    b0 = np.array([0.0, 1.0])
    n = 12
    out = kernels.markov_walk(24, SIDS, n, n, init, P, b0, backend="numpy")
    for r in (0, 9, 200):
        ch = simulate_markov_chain(P, init, n, 1.0, RandomStream(24, r))
        assert out.terminal[r] == pytest.approx(b0[ch.states].sum() / n, abs=1e-12)


def test_batching_invariance():
    a = kernels.gaussian_walk(25, SIDS, 32, 0.2, backend="numpy")
    b = kernels.gaussian_walk(25, SIDS[150:], 32, 0.2, backend="numpy")
    assert np.array_equal(a.terminal[150:], b.terminal)


@needs_numba
def test_backends_agree():
    sp = DiscreteMeasureSpace([0.3, 0.7])
    P = np.array([[0.3, 0.7], [0.6, 0.4]])
    calls = [
        lambda be: kernels.gaussian_walk(1, SIDS, 128, 0.1, backend=be),
        lambda be: kernels.markov_walk(2, SIDS, 30, 30, [0.5, 0.5], P, [0.0, 1.0],
                                       [0.1, -0.2], 0.5, backend=be),
        lambda be: kernels.poisson_walk(3, SIDS, 9, 1.0, sp.masses, [1.0, 2.0], True,
                                        backend=be),
        lambda be: kernels.uet_gaussian(4, SIDS, 4, 1.0, 64, sp.masses, [1.0, 1.0],
                                        [-1.0, -1.0], 1, 1, backend=be),
        lambda be: kernels.uet_poisson(5, SIDS, 5, 1.0, 64, sp.masses, [0.5, 0.5],
                                       [-0.5, -0.5], 0, 4, backend=be),
    ]
    for call in calls:
        _close(call("numpy"), call("numba"))
    zn = kernels.normal_lanes(6, SIDS, 100, backend="numpy")
    zb = kernels.normal_lanes(6, SIDS, 100, backend="numba")
    assert np.allclose(zn, zb, rtol=0, atol=1e-14)


def test_uet_gaussian_constant_integrand_is_scaled_walk():
    # constant unit-norm integrand on one cell: Z.W_n is a Brownian path of rate 1/n
    sp = DiscreteMeasureSpace([1.0])
    out = kernels.uet_gaussian(7, np.arange(20_000, dtype=np.uint64), 4, 1.0, 16,
                               sp.masses, [1.0], [1.0], 0, 1, backend="numpy")
    assert abs(out.terminal.var() - 0.25) < 5 * 0.25 * math.sqrt(2 / 20_000)

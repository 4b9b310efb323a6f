import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ldp_lab.core import DiscreteMeasureSpace, RandomStream, TimeGrid
from ldp_lab.drivers import (GaussianDriver, PoissonDriver, simulate_gaussian,
                             simulate_markov_chain, simulate_poisson, stationary_distribution,
                             validate_kernel)
from ldp_lab.errors import DimensionError, InvalidKernelError

SPACE = DiscreteMeasureSpace([0.2, 0.0, 0.5, 0.3])
GRID = TimeGrid(1.0, 32)
hvec = arrays(float, 4, elements=st.floats(-10, 10))


def test_gaussian_deterministic_and_zero_mass():
    a = simulate_gaussian(SPACE, GRID, 3, RandomStream(1, 7))
    b = simulate_gaussian(SPACE, GRID, 3, RandomStream(1, 7))
    assert np.array_equal(a.noise, b.noise)
    assert np.all(a.noise[:, 1] == 0)


def test_gaussian_terminal_variance():
    sp = DiscreteMeasureSpace([1.0])
    g = TimeGrid(2.0, 16)
    R = 10_000
    term = np.array([simulate_gaussian(sp, g, 1, RandomStream(3, r)).evaluate([1.0], 2.0)
                     for r in range(R)])
    se = 2.0 * math.sqrt(2 / R)
    assert abs(term.var() - 2.0) < 5 * se


def test_gaussian_covariance_structure():
    # E W(A,t) W(B,s) = mu(A n B) min(t, s)
    sp = DiscreteMeasureSpace([0.5, 0.5])
    g = TimeGrid(1.0, 4)
    A, B = np.array([1.0, 1.0]), np.array([0.0, 1.0])
    R = 10_000
    xs, ys = np.empty(R), np.empty(R)
    for r in range(R):
        d = simulate_gaussian(sp, g, 1, RandomStream(4, r))
        xs[r] = d.evaluate(A, 1.0)
        ys[r] = d.evaluate(B, 0.5)
    prod = xs * ys
    assert abs(prod.mean() - 0.25) < 5 * prod.std() / math.sqrt(R)


@given(hvec, hvec, st.floats(-5, 5), st.floats(-5, 5))
def test_linearity_all_drivers(h1, h2, a, b):
    drivers = [
        simulate_gaussian(SPACE, GRID, 4, RandomStream(5, 1)),
        simulate_poisson(SPACE, GRID, 4, RandomStream(5, 2)),
        simulate_poisson(SPACE, GRID, 4, RandomStream(5, 3), centered=True),
        simulate_markov_chain([[0.1, 0.2, 0.3, 0.4]] * 4, 0, 8, 1.0, RandomStream(5, 4)),
    ]
    for d in drivers:
        lhs = d.increments(a * h1 + b * h2)
        rhs = a * d.increments(h1) + b * d.increments(h2)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))
        assert d.evaluate(np.zeros(4), 0.7) == 0.0


def test_poisson_zero_mass_cell_and_determinism():
    a = simulate_poisson(SPACE, GRID, 50, RandomStream(6, 0))
    b = simulate_poisson(SPACE, GRID, 50, RandomStream(6, 0))
    assert not np.any(a.cells == 1)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.cells, b.cells)


def test_poisson_total_count_mean():
    sp = DiscreteMeasureSpace([1.0])
    R, n = 10_000, 100
    tot = np.array([simulate_poisson(sp, TimeGrid(1.0, 1), n, RandomStream(7, r)).times.size
                    for r in range(R)])
    assert abs(tot.mean() - 100) < 5 * math.sqrt(100 / R)
    assert abs(tot.var() - 100) < 5 * 100 * math.sqrt(2 / R)


def test_poisson_evaluate_counts_atoms():
    sp = DiscreteMeasureSpace([1.0])
    d = simulate_poisson(sp, GRID, 20, RandomStream(8, 0))
    assert d.evaluate([1.0], 1.0) == pytest.approx(d.times.size / 20)
    c = simulate_poisson(sp, GRID, 20, RandomStream(8, 0), centered=True)
    assert c.evaluate([1.0], 1.0) == pytest.approx(d.times.size / 20 - 1.0)


def test_poisson_window_counts():
    # counts of cell 2 on [0.5, 1) should be Poisson(mass * n * 0.5)
    n, R = 10, 10_000
    counts = np.empty(R)
    for r in range(R):
        d = simulate_poisson(SPACE, GRID, n, RandomStream(9, r))
        counts[r] = np.sum((d.cells == 2) & (d.times >= 0.5))
    mean = 0.5 * n * 0.5
    assert abs(counts.mean() - mean) < 5 * math.sqrt(mean / R)


def test_driver_shapes_checked():
    with pytest.raises(DimensionError):
        GaussianDriver(SPACE, GRID, 1, np.zeros((3, 4)))
    d = simulate_gaussian(SPACE, GRID, 1, RandomStream(0))
    with pytest.raises(DimensionError):
        d.increments(np.ones(3))
    with pytest.raises(DimensionError):
        PoissonDriver(SPACE, GRID, 1, [0.1, 0.2], [0])


def test_kernel_validation():
    with pytest.raises(InvalidKernelError):
        validate_kernel([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(InvalidKernelError):
        validate_kernel([[1.0, 0.0]])
    with pytest.raises(InvalidKernelError):
        simulate_markov_chain([[0.9, 0.2], [0.5, 0.5]], 0, 4, 1.0, RandomStream(0))


def test_markov_examples():
    s = RandomStream(10, 0)
    eye = simulate_markov_chain(np.eye(3), 2, 5, 2.0, s)
    assert eye.states.size == 10 and np.all(eye.states == 2)
    flip = simulate_markov_chain([[0, 1], [1, 0]], 0, 3, 2.0, RandomStream(10, 1))
    assert flip.states.tolist() == [1, 0, 1, 0, 1, 0]


def test_markov_occupation_matches_stationary():
    P = np.array([[0.9, 0.1], [0.3, 0.7]])
    pi = stationary_distribution(P)
    assert np.allclose(pi, [0.75, 0.25])
    d = simulate_markov_chain(P, [0.5, 0.5], 100_000, 1.0, RandomStream(11, 0))
    # asymptotic variance of the occupation of state 0 for a 2-state chain
    lam = 1 - 0.1 - 0.3
    avar = pi[0] * pi[1] * (1 + lam) / (1 - lam)
    assert abs(d.occupation()[0] - 0.75) < 5 * math.sqrt(avar / d.states.size)


def test_markov_transitions_match_kernel():
    P = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
    d = simulate_markov_chain(P, 0, 10_000, 1.0, RandomStream(12, 0))
    s = np.concatenate(([d.initial_state], d.states))
    C = np.zeros((3, 3))
    np.add.at(C, (s[:-1], s[1:]), 1)
    expected = C.sum(axis=1, keepdims=True) * P
    chi2 = float(np.sum((C - expected) ** 2 / expected))
    # 6 degrees of freedom; 99.9% quantile is 22.46
    assert chi2 < 22.46


def test_markov_counting_evaluate():
    d = simulate_markov_chain([[0.5, 0.5], [0.5, 0.5]], 0, 10, 1.0, RandomStream(13, 0))
    h = np.array([0.0, 1.0])
    assert d.evaluate(h, 1.0) == pytest.approx(np.sum(d.states == 1) / 10)
    assert d.evaluate(h, 0.55) == pytest.approx(np.sum(d.states[:5] == 1) / 10)

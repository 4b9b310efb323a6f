import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ldp_lab.core import CadlagPath, DiscreteMeasureSpace, TimeGrid
from ldp_lab.drivers import stationary_distribution
from ldp_lab.errors import InvalidInputError, InvalidKernelError, UnboundedError
from ldp_lab.integrate import FiniteVariationPath
from ldp_lab.rate import (FixedEndpoint, GramFactor, LegendreTransform, LevelCrossing,
                          LevyAction, LogMGF, SchilderAction, cramer_log_mgf, donsker_varadhan,
                          legendre, levy_path_action, minimize_action, poisson_log_mgf,
                          quadratic_log_mgf, schilder_action, solve_controlled_equation,
                          uniform_ergodicity_check, verify_controlled_equation)

ONE = DiscreteMeasureSpace([1.0])
EXP = poisson_log_mgf([[1.0]], ONE)


def _grid_sup(f, y, lo=-10.0, hi=10.0, rounds=6):
    # independent oracle: repeatedly refined grid search for sup_x [x y - f(x)]
    for _ in range(rounds):
        xs = np.linspace(lo, hi, 2001)
        vals = xs * y - f(xs)
        k = int(np.argmax(vals))
        span = (hi - lo) / 2000
        lo, hi = xs[max(k - 2, 0)], xs[min(k + 2, 2000)]
    return float(vals.max()), span


def test_legendre_examples():
    assert legendre(EXP, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert legendre(EXP, 2.0) == pytest.approx(2 * math.log(2) - 1, abs=1e-10)
    oracle, _ = _grid_sup(np.expm1, 2.0)
    assert legendre(EXP, 2.0) == pytest.approx(oracle, abs=1e-8)
    q = quadratic_log_mgf([[1.0]])
    for y in (-3.0, 0.4, 2.5):
        assert legendre(q, y) == pytest.approx(y * y / 2, abs=1e-9)


def test_legendre_unbounded_below_mean_support():
    # e^x - 1 has no finite conjugate at negative slopes
    assert legendre(EXP, -0.5) == math.inf


def test_legendre_multidimensional_quadratic():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    y = np.array([0.3, -1.2])
    assert legendre(quadratic_log_mgf(S), y) == pytest.approx(0.5 * y @ np.linalg.solve(S, y),
                                                             abs=1e-9)


def test_nonconvex_rejected():
    bad = LogMGF(lambda x: float(np.sin(x[0])), 1, name="sine")
    with pytest.raises(InvalidInputError):
        legendre(bad, 0.5)


def test_poisson_log_mgf():
    sp = DiscreteMeasureSpace([0.3, 0.7])
    mu = poisson_log_mgf([[1.0, 2.0], [0.5, -1.0]], sp)
    assert mu(np.zeros(2)) == 0.0
    assert EXP(1.3) == pytest.approx(math.expm1(1.3))
    gen = np.random.default_rng(0)
    for x in gen.normal(size=(10, 2)):
        fd = LogMGF(mu._f, 2).grad(x)
        assert np.allclose(mu.grad(x), fd, atol=1e-6)
    with pytest.raises(UnboundedError):
        mu(np.array([400.0, 0.0]))


def test_cramer_log_mgf():
    mu = cramer_log_mgf([0.0, 1.0], [0.5, 0.5])
    assert mu(0.0) == 0.0
    for p in (-2.0, 0.3, 4.0):
        assert mu(p) == pytest.approx(math.log((1 + math.exp(p)) / 2), rel=1e-14)
        fd = LogMGF(mu._f, 1).grad(p)
        assert mu.grad(p)[0] == pytest.approx(fd[0], abs=1e-6)
    # Cramer rate of a fair coin at 0.8
    assert legendre(mu, 0.8) == pytest.approx(0.8 * math.log(1.6) + 0.2 * math.log(0.4),
                                              abs=1e-10)


MGFS = [EXP, cramer_log_mgf([0.0, 1.0, 3.0], [0.2, 0.5, 0.3]),
        poisson_log_mgf([[1.0, 2.0]], DiscreteMeasureSpace([0.4, 0.6])),
        quadratic_log_mgf([[1.5]])]


@pytest.mark.parametrize("mu", MGFS, ids=lambda m: m.name)
@given(x=st.floats(-2, 2))
def test_envelope_identity(mu, x):
    x = np.array([x])
    g = mu.grad(x)
    assert legendre(mu, g) == pytest.approx(float(x @ g) - mu(x), abs=1e-7)


@pytest.mark.parametrize("mu", MGFS, ids=lambda m: m.name)
def test_conjugate_nonnegative_and_zero_at_mean(mu):
    assert legendre(mu, mu.grad(np.zeros(1))) == pytest.approx(0.0, abs=1e-10)
    for y in np.linspace(0.1, 2.5, 7):
        assert legendre(mu, y) >= 0.0


def test_gram_factor():
    gen = np.random.default_rng(1)
    sp = DiscreteMeasureSpace(gen.uniform(0.1, 1, 5))
    hs = gen.normal(size=(3, 5))
    G = GramFactor.from_functions(list(hs), sp)
    assert G.reconstruction_error() <= 1e-10
    assert G.full_rank
    rankdef = GramFactor.from_functions([hs[0], 2 * hs[0]], sp)
    assert rankdef.rank == 1


def test_schilder_action_examples():
    g = TimeGrid(1.0, 20)
    assert schilder_action(CadlagPath(g, np.zeros(21)), [[1.0]]) == 0.0
    line = CadlagPath.from_function(g, lambda t: [1.7 * t], "linear")
    assert schilder_action(line, [[1.0]]) == pytest.approx(1.7 ** 2 / 2)
    with pytest.raises(InvalidInputError):
        schilder_action(CadlagPath.constant(g, 1.0), [[1.0]])


def test_schilder_whitening_oracle():
    # psi = C phi with phi a random path: action of psi under C equals 1/2 int |phi'|^2
    gen = np.random.default_rng(2)
    g = TimeGrid(1.0, 30)
    C = gen.normal(size=(2, 2))
    phi = np.vstack([np.zeros(2), np.cumsum(gen.normal(size=(30, 2)), axis=0)])
    psi = CadlagPath(g, phi @ C.T, "linear")
    direct = 0.5 * float(np.sum(np.diff(phi, axis=0) ** 2)) / g.dt
    assert schilder_action(psi, C) == pytest.approx(direct, rel=1e-9)


def test_schilder_rank_deficient():
    g = TimeGrid(1.0, 4)
    C = np.array([[1.0], [1.0]])
    inside = CadlagPath(g, np.outer(np.linspace(0, 1, 5), [1.0, 1.0]), "linear")
    outside = CadlagPath(g, np.outer(np.linspace(0, 1, 5), [1.0, -1.0]), "linear")
    with pytest.warns(UserWarning):
        assert schilder_action(inside, C) == pytest.approx(0.5)
    with pytest.warns(UserWarning):
        assert schilder_action(outside, C) == math.inf


def test_levy_path_action_examples():
    g = TimeGrid(1.0, 10)
    mean_line = CadlagPath.from_function(g, lambda t: [t], "linear")
    assert levy_path_action(mean_line, EXP) == pytest.approx(0.0, abs=1e-12)
    two = CadlagPath.from_function(g, lambda t: [2 * t], "linear")
    assert levy_path_action(two, EXP) == pytest.approx(2 * math.log(2) - 1, abs=1e-9)
    vals = np.concatenate(([0.0], np.cumsum([0.3] * 5 + [0.05] * 5)))
    piece = CadlagPath(g, vals, "linear")
    lam = LegendreTransform(EXP)
    expected = 0.5 * lam(3.0) + 0.5 * lam(0.5)
    assert levy_path_action(piece, lam) == pytest.approx(expected, rel=1e-12)
    down = CadlagPath.from_function(g, lambda t: [-t], "linear")
    assert levy_path_action(down, EXP) == math.inf


def test_minimize_action_examples():
    g = TimeGrid(1.0, 32)
    r = minimize_action(SchilderAction([[1.0]]), FixedEndpoint(1.3), g)
    assert r.value == pytest.approx(1.3 ** 2 / 2, abs=1e-9)
    assert np.allclose(r.argmin.scalar(), 1.3 * g.nodes, atol=1e-6)
    r = minimize_action(SchilderAction([[1.0]]), LevelCrossing(1.0), g, restarts=1)
    assert r.value == pytest.approx(0.5, abs=1e-9)
    assert r.diagnostics["hit_node"] == 32
    lev = minimize_action(LevyAction(EXP), FixedEndpoint(2.0), TimeGrid(1.0, 8))
    line = CadlagPath.from_function(TimeGrid(1.0, 8), lambda t: [2 * t], "linear")
    assert lev.value == pytest.approx(levy_path_action(line, EXP), abs=1e-9)
    assert lev.value == pytest.approx(2 * math.log(2) - 1, abs=1e-9)
    assert not lev.upper_bound_only


def test_rate_family_consistency():
    # marginalizing the joint Gaussian rate over the second coordinate gives the
    # rate of the first coordinate alone
    gen = np.random.default_rng(3)
    sp = DiscreteMeasureSpace(gen.uniform(0.2, 1.0, 4))
    g = TimeGrid(1.0, 16)
    for _ in range(3):
        h1, h2 = gen.normal(size=(2, 4))
        y1 = gen.uniform(0.5, 2.0)
        joint = GramFactor.from_functions([h1, h2], sp)
        marg = minimize_action(SchilderAction(joint), FixedEndpoint([y1, np.nan]), g)
        single = minimize_action(SchilderAction(GramFactor.from_functions([h1], sp)),
                                 FixedEndpoint(y1), g)
        assert marg.value == pytest.approx(single.value, abs=1e-4)
        assert single.value == pytest.approx(y1 ** 2 / (2 * sp.inner(h1, h1)), rel=1e-9)


KERNELS = [np.array([[0.3, 0.7], [0.6, 0.4]]), np.array([[0.9, 0.1], [0.2, 0.8]]),
           np.array([[0.5, 0.5], [0.05, 0.95]])]


@pytest.mark.parametrize("P", KERNELS)
def test_dv_zero_at_stationary(P):
    rep = donsker_varadhan(P, stationary_distribution(P))
    assert rep.value <= 1e-8
    assert rep.converged


def _dv_brute(P, mu, step=0.01):
    # gauge g1 = 0; minimize over g2 on [-10, 10]
    g2 = np.arange(-10, 10 + step / 2, step)
    f1 = np.log(P[0, 0] + P[0, 1] * np.exp(g2))
    f2 = np.log(P[1, 0] * np.exp(-g2) + P[1, 1])
    return -float(np.min(mu[0] * f1 + mu[1] * f2))


def test_dv_brute_force_and_closed_form():
    P = KERNELS[0]
    for mu in ([0.2, 0.8], [0.9, 0.1], [0.5, 0.5]):
        mu = np.array(mu)
        assert donsker_varadhan(P, mu).value == pytest.approx(_dv_brute(P, mu), abs=1e-4)
    assert donsker_varadhan(P, [1.0, 0.0]).value == pytest.approx(-math.log(0.3), abs=1e-10)


def test_dv_permutation_kernel_unbounded():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = donsker_varadhan([[0.0, 1.0], [1.0, 0.0]], [1.0, 0.0])
    assert rep.value == math.inf


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3))
def test_dv_nonnegative_and_relabeling(m):
    P = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
    mu = np.array(m) / sum(m)
    v = donsker_varadhan(P, mu).value
    assert v >= 0.0
    perm = np.array([2, 0, 1])
    Pp = P[np.ix_(perm, perm)]
    assert donsker_varadhan(Pp, mu[perm]).value == pytest.approx(v, abs=1e-9)


def test_dv_ergodicity_argument():
    P = KERNELS[0]
    assert uniform_ergodicity_check(P, 1, 2, 5.0)
    with pytest.raises(InvalidKernelError):
        donsker_varadhan(P, [0.5, 0.5], ergodicity=(1, 1, 0.1))
    with pytest.warns(UserWarning):
        donsker_varadhan(np.eye(2), [0.5, 0.5])


def _affine(x):
    return np.array([[0.5 * x[0] + 1.0]])


def test_controlled_equation():
    g = TimeGrid(1.0, 200)
    ystar = FiniteVariationPath(CadlagPath.from_function(g, lambda t: [math.sin(3 * t)]))
    u = CadlagPath.from_function(g, lambda t: [0.2 + t])
    x = solve_controlled_equation(u, _affine, ystar)
    assert verify_controlled_equation(x, u, _affine, ystar).passed
    bad = x.values.copy()
    bad[-1] += 1.0
    rep = verify_controlled_equation(x.with_values(bad), u, _affine, ystar)
    assert not rep.passed and rep.residual >= 1 - 1e-9
    zero = lambda v: np.zeros((1, 1))
    assert verify_controlled_equation(u, u, zero, ystar).passed
    assert not verify_controlled_equation(x, u, zero, ystar).passed


def test_dv_newton_converges_on_measure_grid():
    # interior measures must converge quickly rather than crawl near roundoff
    P = KERNELS[0]
    for a in np.linspace(0.05, 1, 20):
        for b in np.linspace(0.05, 1, 20):
            rep = donsker_varadhan(P, [a, b])
            assert rep.converged and rep.iterations <= 50

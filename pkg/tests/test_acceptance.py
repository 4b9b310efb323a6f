"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The Monte Carlo criteria (2, 3, 4) are long-running by design; together they
take a few minutes on one core.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ldp_lab import mc
from ldp_lab.basis import build_partition, lattice_centers
from ldp_lab.core import CadlagPath, DiscreteMeasureSpace, TimeGrid
from ldp_lab.drivers import stationary_distribution
from ldp_lab.integrate import FiniteVariationPath, fv_pathwise_integral, pou_integral, total_variation
from ldp_lab.rate import (LevelCrossing, SchilderAction, cramer_log_mgf, donsker_varadhan,
                          legendre, minimize_action, poisson_log_mgf, quadratic_log_mgf)

TESTS = Path(__file__).parent
COIN = np.array([[0.5, 0.5], [0.5, 0.5]])
CRAMER_08 = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)


def _report(capsys, number, title, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title}: {detail} "
              f"({elapsed:.1f} s, limit {limit:.0f} s)")
    return ok


def test_criterion_1_poisson_level2(capsys):
    t0 = time.perf_counter()
    n = 5000
    oracle = -mc.poisson_log_tail_exact(n, 2 * n) / n
    rate = legendre(poisson_log_mgf([[1.0]], DiscreteMeasureSpace([1.0])), 2.0)
    rel = abs(oracle - rate) / rate
    ok = rel <= 0.01 and abs(rate - (2 * math.log(2) - 1)) <= 1e-9
    dt = time.perf_counter() - t0
    assert _report(capsys, 1, "Poisson level-2 exact tail vs Legendre rate", ok,
                   f"oracle {oracle:.6f}, rate {rate:.6f}, rel err {rel:.2%} (tol 1%)", dt, 1)


def test_criterion_2_cramer_markov(capsys):
    t0 = time.perf_counter()
    rate = legendre(cramer_log_mgf([0.0, 1.0], [0.5, 0.5]), 0.8)
    n = 2000
    exact = -mc.binomial_log_tail_exact(n, 0.5, int(0.8 * n)) / n
    rel_exact = abs(exact - rate) / rate
    sim = mc.markov_simulator(COIN, [0.5, 0.5], [0.0, 1.0])
    event = mc.terminal_at_least(0.8)
    ests = [mc.estimate_tail(event, sim, m, 10_000_000, 2000 + m) for m in (20, 40, 60, 80)]
    fit = mc.fit_decay(ests)
    rel_mc = abs(fit.slope - rate) / rate
    ok = (abs(rate - CRAMER_08) <= 1e-8 and rel_exact <= 0.02 and rel_mc <= 0.15)
    dt = time.perf_counter() - t0
    assert _report(capsys, 2, "Cramer coin SDE", ok,
                   f"rate {rate:.6f}; binomial n=2000 {exact:.6f} ({rel_exact:.2%}, tol 2%); "
                   f"MC slope {fit.slope:.6f} ({rel_mc:.1%}, tol 15%, excluded n "
                   f"{fit.excluded_ns})", dt, 600)


def test_criterion_3_schilder_crossing(capsys):
    t0 = time.perf_counter()
    rep = minimize_action(SchilderAction([[1.0]]), LevelCrossing(1.0), TimeGrid(1.0, 64),
                          restarts=1)
    sim = mc.schilder_simulator(512, 1.0, 1.0)
    event = mc.sup_abs_at_least(1.0)
    ests = [mc.estimate_tail(event, sim, m, 10_000_000, 3000 + m) for m in (4, 8, 12, 16)]
    fit = mc.fit_decay(ests)
    rel = abs(fit.slope - rep.value) / rep.value
    ok = abs(rep.value - 0.5) <= 1e-6 and rel <= 0.15
    dt = time.perf_counter() - t0
    assert _report(capsys, 3, "Schilder boundary crossing", ok,
                   f"action {rep.value:.6f}; MC slope {fit.slope:.6f} ({rel:.1%}, tol 15%)",
                   dt, 900)


def test_criterion_4_uet_certificates(capsys):
    t0 = time.perf_counter()
    space = DiscreteMeasureSpace([0.1, 0.2, 0.3, 0.4])
    g = mc.uet_certificate(mc.GaussianFamily(space), mc.gaussian_adversaries(space),
                           1.0, 1.0, [4, 8], 100_000, seed=41)
    p = mc.uet_certificate(mc.PoissonFamily(space), mc.poisson_adversaries(space),
                           1.0, 1.0, [5], 100_000, seed=42)
    gw, pw = g.worst, p.worst
    ok = g.passed and p.passed
    dt = time.perf_counter() - t0
    assert _report(capsys, 4, "UET certificates", ok,
                   f"gaussian {len(g.rows)} rows, worst {gw.adversary} n={gw.n} "
                   f"p={gw.p_hat:.3g} vs {gw.envelope:.3g}; poisson {len(p.rows)} rows, worst "
                   f"{pw.adversary} p={pw.p_hat:.3g} vs {pw.envelope:.3g}", dt, 300)


def test_criterion_5_legendre_accuracy(capsys):
    t0 = time.perf_counter()
    mu = poisson_log_mgf([[1.0]], DiscreteMeasureSpace([1.0]))
    ys = np.linspace(0.1, 5.0, 50)
    err = max(abs(legendre(mu, y) - (y * math.log(y) - y + 1)) for y in ys)
    q = quadratic_log_mgf([[1.0]])
    qerr = max(abs(legendre(q, y) - 0.5 * y * y) for y in np.linspace(-5, 5, 41))
    ok = err <= 1e-6 and qerr <= 1e-9
    dt = time.perf_counter() - t0
    assert _report(capsys, 5, "Legendre transform accuracy", ok,
                   f"exp max err {err:.2e} (tol 1e-6), quadratic max err {qerr:.2e} (tol 1e-9)",
                   dt, 1)


def _dv_brute(P, mu, step=0.01):
    # gauge g = (0, u), u on a 0.01 grid over [-10, 10]
    u = np.arange(-10, 10 + step / 2, step)
    f1 = np.log(P[0, 0] + P[0, 1] * np.exp(u))
    f2 = np.log(P[1, 0] * np.exp(-u) + P[1, 1])
    return -float(np.min(mu[0] * f1 + mu[1] * f2))


def test_criterion_6_donsker_varadhan(capsys):
    t0 = time.perf_counter()
    gen = np.random.default_rng(6)
    grid = np.linspace(0.0, 1.0, 21)
    worst_stat, worst_gap = 0.0, 0.0
    for _ in range(3):
        a, b = gen.uniform(0.1, 0.9, 2)
        P = np.array([[1 - a, a], [b, 1 - b]])
        worst_stat = max(worst_stat, donsker_varadhan(P, stationary_distribution(P)).value)
        for m0 in grid:
            for m1 in grid:
                mu = np.array([m0, m1])
                gap = abs(donsker_varadhan(P, mu).value - _dv_brute(P, mu))
                worst_gap = max(worst_gap, gap)
    ok = worst_stat <= 1e-8 and worst_gap <= 1e-3
    dt = time.perf_counter() - t0
    assert _report(capsys, 6, "Donsker-Varadhan", ok,
                   f"max value at stationary {worst_stat:.2e} (tol 1e-8), max gap to brute "
                   f"force on 21x21 grid {worst_gap:.2e} (tol 1e-3)", dt, 60)


def test_criterion_7_integral_identification(capsys):
    t0 = time.perf_counter()
    g = TimeGrid(1.0, 400)
    ystar = FiniteVariationPath(CadlagPath.from_function(g, lambda t: [math.sin(4 * t)]))
    x = CadlagPath.from_function(g, lambda t: [0.8 * math.cos(3 * t)])
    lip = 2.4
    exact = fv_pathwise_integral(x, ystar).values[:, 0]
    tv = total_variation(ystar)
    margins = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        pou = build_partition(lattice_centers([-1.0], [1.0], eps), eps)
        got = pou_integral(x, ystar, pou).values[:, 0]
        bound = eps * tv + g.dt * lip * tv
        margins.append(float(np.max(np.abs(got - exact))) / bound)
    ramp = CadlagPath.from_function(g, lambda t: [t])
    tt = fv_pathwise_integral(ramp, FiniteVariationPath(ramp)).values[:, 0]
    ramp_err = float(np.max(np.abs(tt - g.nodes ** 2 / 2)))
    ok = max(margins) <= 1.0 and ramp_err <= g.dt
    dt = time.perf_counter() - t0
    assert _report(capsys, 7, "integral identification", ok,
                   f"worst error/bound over eps sweep {max(margins):.3f} (<= 1), "
                   f"int t dt error {ramp_err:.2e} (mesh {g.dt:.2e})", dt, 10)


STRUCTURAL = [
    "test_basis.py::test_partition_invariants",
    "test_basis.py::test_weighted_partition_lipschitz",
    "test_orlicz.py::test_homogeneity",
    "test_orlicz.py::test_triangle",
    "test_orlicz.py::test_power_p_reproduces_lp",
    "test_drivers.py::test_linearity_all_drivers",
    "test_basis.py::test_projection_error_monotone_on_compact_family",
    "test_integrate.py::test_delta_skeleton_band",
    "test_sde.py::test_gronwall_stability",
    "test_sde.py::test_exp_tightness_constant_paths",
    "test_sde.py::test_exp_tightness_white_noise_scenario",
    "test_sde.py::test_exp_tightness_detects_understated_drift",
]


def test_criterion_8_structural_invariants(capsys):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *STRUCTURAL], cwd=TESTS, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0
    dt = time.perf_counter() - t0
    assert _report(capsys, 8, "structural invariant suites", ok,
                   f"{len(STRUCTURAL)} suites: {tail}", dt, 120), proc.stdout[-3000:]

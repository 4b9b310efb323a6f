"""Rare-event estimation, decay-rate fits, exact tail oracles and UET certificates."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import DiscreteMeasureSpace, GridFunction, _values
from .errors import InsufficientDataError, InvalidAdversaryError, InvalidInputError
from .kernels import PathSummary
from .orlicz import exp_minus_one, orlicz_norm, unit_ball_check

Z95 = 1.959963984540054
EVENT_ATOL = 1e-9
DEFAULT_BATCH = 1 << 16
WORKERS_ENV = "LDP_LAB_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    if w < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return w


# ---------------------------------------------------------------- estimates

def wilson_interval(hits: int, samples: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if samples <= 0:
        raise InvalidInputError("samples must be positive")
    p = hits / samples
    z2 = z * z
    denom = 1.0 + z2 / samples
    centre = (p + z2 / (2 * samples)) / denom
    half = z * math.sqrt(p * (1 - p) / samples + z2 / (4 * samples * samples)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class TailEstimate:
    n: int
    hits: int
    samples: int

    @property
    def p_hat(self) -> float:
        return self.hits / self.samples

    @property
    def ci(self) -> tuple[float, float]:
        lo, hi = wilson_interval(self.hits, self.samples)
        # keep p_hat inside the interval despite round-off at the edges
        return min(lo, self.p_hat), max(hi, self.p_hat)

    @property
    def ci_low(self) -> float:
        return self.ci[0]

    @property
    def ci_high(self) -> float:
        return self.ci[1]

    @property
    def zero_hits(self) -> bool:
        return self.hits == 0

    @property
    def neglog_over_n(self) -> float:
        return math.inf if self.hits == 0 else -math.log(self.p_hat) / self.n

    @property
    def std_error(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.samples)


class Event:
    """Named predicate on PathSummary batches."""

    def __init__(self, name: str, fn: Callable[[PathSummary], np.ndarray], **params):
        self.name = name
        self.fn = fn
        self.params = params

    def __call__(self, summary: PathSummary) -> np.ndarray:
        return np.asarray(self.fn(summary), dtype=bool)

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"Event({self.name}: {args})"


def sup_abs_at_least(level: float) -> Event:
    return Event("sup_abs_at_least", lambda s: s.sup_abs >= level - EVENT_ATOL, level=level)


def sup_abs_above(level: float) -> Event:
    return Event("sup_abs_above", lambda s: s.sup_abs > level, level=level)


def terminal_at_least(level: float) -> Event:
    return Event("terminal_at_least", lambda s: s.terminal >= level - EVENT_ATOL, level=level)


def maximum_at_least(level: float) -> Event:
    return Event("maximum_at_least", lambda s: s.maximum >= level - EVENT_ATOL, level=level)


def always(value: bool) -> Event:
    return Event("always", lambda s: np.full(len(s), value), value=value)


def estimate_tail(event: Callable, simulator: Callable, n: int, samples: int, seed: int,
                  batch: int = DEFAULT_BATCH, workers: int | None = None,
                  min_samples: int = 1000) -> TailEstimate:
    """Plain Monte Carlo estimate of P(event) with replicas on stream ids 0..samples-1.

    ``simulator(n, seed, sids)`` returns a PathSummary for the given stream
    ids.  Batches may run on several threads; hit counts are summed as
    integers, so the result does not depend on batching or worker count.
    """
    if samples < min_samples:
        raise InvalidInputError(f"need at least {min_samples} samples, got {samples}")
    if batch < 1:
        raise InvalidInputError("batch must be positive")
    workers = default_workers() if workers is None else int(workers)
    starts = range(0, samples, batch)

    def run(start: int) -> int:
        sids = np.arange(start, min(start + batch, samples), dtype=np.uint64)
        return int(np.count_nonzero(event(simulator(n, seed, sids))))

    if workers <= 1 or len(starts) == 1:
        hits = sum(run(s) for s in starts)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(run, starts))
    return TailEstimate(int(n), int(hits), int(samples))


# ---------------------------------------------------------------- simulators

def schilder_simulator(steps: int, horizon: float = 1.0, h_norm: float = 1.0,
                       channel: int = 0, backend=None) -> Callable:
    """W_n(h, .) monitored on a grid: a Gaussian walk with step sd |h| sqrt(dt / n).

    For fixed h the process W(h, .) is a Brownian motion with variance rate
    |h|^2, so the scalar walk has exactly the law of the grid-sampled path.
    """
    dt = horizon / steps

    def sim(n, seed, sids):
        return kernels.gaussian_walk(seed, sids, steps, h_norm * math.sqrt(dt / n), channel,
                                     backend)
    return sim


def poisson_simulator(masses, h, horizon: float = 1.0, centered: bool = False,
                      channel: int = 0, backend=None) -> Callable:
    """xi_n(h, [0, t]) / n on [0, horizon]."""
    masses = np.asarray(masses, dtype=float)
    h = np.asarray(h, dtype=float)

    def sim(n, seed, sids):
        return kernels.poisson_walk(seed, sids, n, horizon, masses, h, centered, channel,
                                    backend)
    return sim


def markov_simulator(kernel, init_probs, b0, b1=None, x0: float = 0.0, horizon: float = 1.0,
                     channel: int = 0, backend=None) -> Callable:
    """X^n_{k+1} = X^n_k + b(X^n_k, xi_{k+1}) / n for b(x, s) = b0[s] + b1[s] x, to time horizon."""
    def sim(n, seed, sids):
        steps = int(math.ceil(n * horizon - 1e-9))
        return kernels.markov_walk(seed, sids, steps, n, init_probs, kernel, b0, b1, x0,
                                   channel, backend)
    return sim


# ---------------------------------------------------------------- decay fits

@dataclass
class DecayFit:
    points: list
    slope: float
    intercept: float
    r_squared: float
    slope_ci: tuple
    per_n_estimate: float
    excluded_ns: list = field(default_factory=list)


def fit_decay(estimates: Sequence[TailEstimate], min_hits: int = 10) -> DecayFit:
    """Affine least squares -log p_hat = a + I n over scales with at least ``min_hits`` hits.

    The 95% interval on I uses delta-method variances (1 - p)/hits of log p_hat.
    """
    usable = [e for e in estimates if e.hits >= min_hits]
    excluded = [e.n for e in estimates if e.hits < min_hits]
    if len(usable) < 3:
        raise InsufficientDataError(
            f"only {len(usable)} scales have >= {min_hits} hits; need 3 (excluded n = {excluded})")
    ns = np.array([e.n for e in usable], dtype=float)
    if len(set(ns)) < 2:
        raise InsufficientDataError("need at least two distinct scales")
    y = np.array([-math.log(e.p_hat) for e in usable])
    nbar = ns.mean()
    sxx = float(np.sum((ns - nbar) ** 2))
    w = (ns - nbar) / sxx
    slope = float(w @ y)
    intercept = float(y.mean() - slope * nbar)
    resid = y - (intercept + slope * ns)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst == 0 else min(1.0, max(0.0, 1.0 - float(np.sum(resid ** 2)) / sst))
    var = np.array([(1.0 - e.p_hat) / e.hits for e in usable])
    half = Z95 * math.sqrt(float(np.sum(w * w * var)))
    points = [(e.n, e.neglog_over_n) for e in estimates]
    return DecayFit(points, slope, intercept, r2, (slope - half, slope + half),
                    usable[-1].neglog_over_n, excluded)


# ---------------------------------------------------------------- exact tails

def _log_series(log_first: float, log_ratios: Callable[[np.ndarray], np.ndarray],
                start: int, stop: int | None, step: int) -> float:
    """log sum_j t_j with t_start = exp(log_first), t_{j+step}/t_j = exp(log_ratios(j)).

    Terms are walked in chunks until they fall below 1e-20 of the partial sum
    or the index leaves [0, stop].
    """
    total = 0.0          # sum of exp(log t_j - log_first)
    offset = 0.0
    j = start
    chunk = 256
    hi = math.inf if stop is None else stop
    with np.errstate(divide="ignore"):
        while True:
            idx = j + step * np.arange(chunk)
            idx = idx[(idx >= 0) & (idx <= hi)]
            if idx.size == 0:
                break
            logs = offset + np.concatenate(([0.0], np.cumsum(log_ratios(idx[:-1]))))
            total += float(np.sum(np.exp(logs)))
            if logs[-1] < math.log(total) - 46.0 or idx.size < chunk:
                break
            offset = logs[-1] + float(log_ratios(idx[-1:])[0])
            j = int(idx[-1]) + step
    return log_first + math.log(total)


def poisson_log_tail_exact(mean: float, k: int) -> float:
    """log P(N >= k) for N ~ Poisson(mean), summed in log space."""
    if not mean > 0:
        raise InvalidInputError("mean must be positive")
    k = int(math.ceil(k))
    if k <= 0:
        return 0.0
    lm = math.log(mean)

    def log_pmf(j):
        return -mean + j * lm - math.lgamma(j + 1)

    if k > mean:
        return _log_series(log_pmf(k), lambda j: lm - np.log(j + 1.0), k, None, 1)
    low = _log_series(log_pmf(k - 1), lambda j: np.log(j.astype(float)) - lm, k - 1, None, -1)
    return math.log1p(-math.exp(low))


def poisson_tail_exact(mean: float, k: int) -> float:
    return math.exp(poisson_log_tail_exact(mean, k))


def binomial_log_tail_exact(n: int, p: float, k: int) -> float:
    """log P(B >= k) for B ~ Binomial(n, p), summed in log space."""
    n = int(n)
    if n < 0 or not 0.0 <= p <= 1.0:
        raise InvalidInputError("need n >= 0 and p in [0, 1]")
    k = int(math.ceil(k))
    if k <= 0:
        return 0.0
    if k > n:
        return -math.inf
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return 0.0
    lp, lq = math.log(p), math.log1p(-p)

    def log_pmf(j):
        return (math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
                + j * lp + (n - j) * lq)

    if k > n * p:
        return _log_series(log_pmf(k), lambda j: np.log((n - j) / (j + 1.0)) + lp - lq,
                           k, n, 1)
    low = _log_series(log_pmf(k - 1), lambda j: np.log(j / (n - j + 1.0)) + lq - lp,
                      k - 1, n, -1)
    return math.log1p(-math.exp(low))


def binomial_tail_exact(n: int, p: float, k: int) -> float:
    return math.exp(binomial_log_tail_exact(n, p, k))


# ---------------------------------------------------------------- UET

@dataclass(frozen=True)
class Adversary:
    """Two-valued predictable integrand: c_pos / c_neg chosen by time parity
    (mode 0, blocks of ``period`` steps) or by the sign of the running integral (mode 1)."""

    name: str
    c_pos: tuple
    c_neg: tuple
    mode: int = 0
    period: int = 1

    @classmethod
    def constant(cls, name, h) -> "Adversary":
        h = tuple(float(v) for v in np.asarray(h, dtype=float))
        return cls(name, h, h, 0, 1)


@dataclass(frozen=True)
class GaussianFamily:
    """W_n = n^{-1/2} W on a discrete space; threshold K = sqrt(2at), envelope 4 exp(-na)."""

    space: DiscreteMeasureSpace
    steps: int = 256
    name: str = "gaussian"

    def threshold(self, t, a):
        return math.sqrt(2.0 * a * t)

    def envelope(self, n, t, a):
        return min(1.0, 4.0 * math.exp(-n * a))

    def certify(self, adv: Adversary) -> None:
        for c in (adv.c_pos, adv.c_neg):
            nrm = self.space.norm(np.asarray(c))
            if nrm > 1.0 + 1e-12:
                raise InvalidAdversaryError(
                    f"adversary {adv.name!r} has L2 norm {nrm:.6g} > 1")

    def simulate(self, adv, n, t, seed, sids, backend=None):
        return kernels.uet_gaussian(seed, sids, n, t, self.steps, self.space.masses,
                                    adv.c_pos, adv.c_neg, adv.mode, adv.period, 0, backend)


@dataclass(frozen=True)
class PoissonFamily:
    """xi_n / n with integrands in the exp(|x|) - 1 Orlicz ball; K = t + a, envelope exp(nt - nK)."""

    space: DiscreteMeasureSpace
    steps: int = 256
    name: str = "poisson"

    def threshold(self, t, a):
        return t + a

    def envelope(self, n, t, a):
        return min(1.0, math.exp(n * t - n * (t + a)))

    def certify(self, adv: Adversary) -> None:
        for c in (adv.c_pos, adv.c_neg):
            if not unit_ball_check(np.asarray(c), exp_minus_one(), self.space):
                raise InvalidAdversaryError(
                    f"adversary {adv.name!r} lies outside the Orlicz unit ball")

    def simulate(self, adv, n, t, seed, sids, backend=None):
        return kernels.uet_poisson(seed, sids, n, t, self.steps, self.space.masses,
                                   adv.c_pos, adv.c_neg, adv.mode, adv.period, 0, backend)


@dataclass
class UETRow:
    adversary: str
    n: int
    hits: int
    samples: int
    p_hat: float
    envelope: float
    slack: float
    passed: bool


@dataclass
class UETReport:
    family: str
    t: float
    a: float
    threshold: float
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst(self) -> UETRow:
        return max(self.rows, key=lambda r: r.p_hat / r.envelope)


def uet_certificate(family, adversaries: Sequence[Adversary], t: float, a: float,
                    n_list: Sequence[int], samples: int, seed: int = 0, se_slack: float = 5.0,
                    batch: int = DEFAULT_BATCH, workers: int | None = None,
                    backend=None) -> UETReport:
    """Estimate P(sup_{s <= t} |Z_- . Y_n(s)| > K) per adversary and scale and compare
    it with the family's envelope plus ``se_slack`` binomial standard errors taken
    at the envelope."""
    if not (t > 0 and a > 0):
        raise InvalidInputError("t and a must be positive")
    advs = list(adversaries)
    for adv in advs:
        family.certify(adv)
    K = family.threshold(t, a)
    event = sup_abs_above(K)
    rows = []
    for adv in advs:
        for n in n_list:
            def sim(n_, seed_, sids, adv=adv):
                return family.simulate(adv, n_, t, seed_, sids, backend)
            est = estimate_tail(event, sim, n, samples, seed, batch, workers)
            env = family.envelope(n, t, a)
            slack = se_slack * math.sqrt(env * (1.0 - env) / samples)
            rows.append(UETRow(adv.name, int(n), est.hits, samples, est.p_hat, env, slack,
                               est.p_hat <= env + slack))
    return UETReport(family.name, t, a, K, rows)


def _unit_l2(space, v):
    v = np.asarray(v, dtype=float)
    nrm = space.norm(v)
    return v / nrm


def _unit_orlicz(space, v):
    v = np.asarray(v, dtype=float)
    return v / orlicz_norm(v, exp_minus_one(), space=space)


def _shapes(space: DiscreteMeasureSpace, seed: int = 7) -> list:
    """Named direction vectors used by the shipped adversary families."""
    from .basis import haar_basis

    pos = space.masses > 0
    out = [("constant", pos.astype(float))]
    heavy = int(np.argmax(space.masses))
    light = int(np.flatnonzero(pos)[np.argmin(space.masses[pos])])
    out.append((f"cell{heavy}", np.eye(space.size)[heavy]))
    if light != heavy:
        out.append((f"cell{light}", np.eye(space.size)[light]))
    hb = haar_basis(space)
    for k in range(1, min(len(hb), 4)):
        out.append((f"haar{k}", hb.elements[k]))
    # proof-style witness: normalized combination sum y_k phi_k of basis elements
    y = np.random.default_rng(seed).normal(size=len(hb))
    out.append(("witness", y @ hb.elements))
    return out


def _family(space, unit, steps) -> list:
    advs = []
    for name, v in _shapes(space):
        h = unit(space, v)
        hp = tuple(h)
        hn = tuple(-h)
        advs.append(Adversary(f"const_{name}", hp, hp))
        advs.append(Adversary(f"bangbang1_{name}", hp, hn, 0, 1))
        advs.append(Adversary(f"bangbang{max(steps // 8, 1)}_{name}", hp, hn, 0,
                              max(steps // 8, 1)))
        advs.append(Adversary(f"follow_{name}", hp, hn, 1))
        advs.append(Adversary(f"revert_{name}", hn, hp, 1))
    return advs


def gaussian_adversaries(space: DiscreteMeasureSpace, steps: int = 256) -> list:
    """Unit-L2 constants, time switchers, state switchers and a proof-style witness."""
    return _family(space, _unit_l2, steps)


def poisson_adversaries(space: DiscreteMeasureSpace, steps: int = 256) -> list:
    """The same shapes scaled to Orlicz (exp(|x|) - 1) norm one."""
    return _family(space, _unit_orlicz, steps)


__all__ = [
    "TailEstimate", "DecayFit", "Event", "estimate_tail", "fit_decay", "wilson_interval",
    "sup_abs_at_least", "sup_abs_above", "terminal_at_least", "maximum_at_least", "always",
    "schilder_simulator", "poisson_simulator", "markov_simulator",
    "poisson_tail_exact", "poisson_log_tail_exact", "binomial_tail_exact",
    "binomial_log_tail_exact", "Adversary", "GaussianFamily", "PoissonFamily", "UETReport",
    "UETRow", "uet_certificate", "gaussian_adversaries", "poisson_adversaries",
    "default_workers",
]

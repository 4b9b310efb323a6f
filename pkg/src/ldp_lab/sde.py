"""Driven equations: Markov-chain evolutions, jump diffusions, and exponential-moment
diagnostics for their increments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import CadlagPath, DiscreteMeasureSpace, RandomStream, TimeGrid
from .drivers import GaussianDriver, MarkovCountingDriver, PoissonDriver
from .errors import DimensionError, InvalidInputError, ScenarioError

OVERFLOW_GUARD = 30.0


class CoefficientMap:
    """Vectorized coefficient x -> F(x).

    ``fn`` receives states of shape (R, d) and returns (R, d, cells) for
    noise coefficients or (R, d) for drifts.  ``bound`` and ``lipschitz``
    are declared metadata; ``validate`` probes the bound.
    """

    def __init__(self, fn: Callable, dim: int = 1, cells: int | None = None,
                 bound: float | None = None, lipschitz: float | None = None,
                 norm: Callable | None = None, name: str = "coefficient"):
        self.fn = fn
        self.dim = int(dim)
        self.cells = cells
        self.bound = bound
        self.lipschitz = lipschitz
        self.norm = norm
        self.name = name

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.dim)
        out = np.asarray(self.fn(x), dtype=float)
        want = (x.shape[0], self.dim) if self.cells is None else (x.shape[0], self.dim, self.cells)
        if out.shape != want:
            try:
                out = np.broadcast_to(out, want).copy()
            except ValueError:
                raise DimensionError(f"{self.name}: expected output shape {want}, got {out.shape}")
        return out

    def sup_norm(self, x) -> np.ndarray:
        """Norm of F(x) per probe: the declared norm on each row if given, else Euclidean."""
        out = self(x)
        if self.cells is None:
            return np.sqrt(np.sum(out * out, axis=1))
        if self.norm is None:
            return np.sqrt(np.sum(out * out, axis=(1, 2)))
        return np.array([max(self.norm(row) for row in block) for block in out])

    def validate(self, lower, upper, probes: int = 10_000, seed: int = 0) -> float:
        """Largest observed norm on uniform probes of the box; raise if above the bound."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dim,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.dim,))
        x = np.random.default_rng(seed).uniform(lower, upper, (probes, self.dim))
        worst = float(np.max(self.sup_norm(x)))
        if self.bound is not None and worst > self.bound * (1 + 1e-12):
            raise InvalidInputError(
                f"{self.name}: observed norm {worst:.6g} exceeds declared bound {self.bound:.6g}")
        return worst


def constant_map(value, dim: int = 1, cells: int | None = None, name: str = "constant",
                 norm: Callable | None = None) -> CoefficientMap:
    v = np.asarray(value, dtype=float)
    shape = (dim,) if cells is None else (dim, cells)
    v = np.broadcast_to(v, shape)
    probe = CoefficientMap(lambda x: v, dim, cells, None, 0.0, norm, name)
    bound = float(probe.sup_norm(np.zeros((1, dim)))[0])
    return CoefficientMap(lambda x: np.broadcast_to(v, (x.shape[0],) + shape), dim, cells,
                          bound, 0.0, norm, name)


def _x0(x0, dim=None) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if dim is not None and x0.shape != (dim,):
        raise DimensionError(f"initial state must have {dim} entries")
    return x0


# ---------------------------------------------------------------- Markov evolution

def solve_markov_evolution(b: Callable, chain: MarkovCountingDriver, x0,
                           n: int | None = None) -> CadlagPath:
    """X_{k+1} = X_k + b(X_k, xi_{k+1}) / n along the sampled chain.

    ``b(x, s)`` takes states (R, d) and chain states (R,) and returns (R, d).
    Node k of the output grid (dt = 1/n) holds X_k.
    """
    n = chain.n if n is None else int(n)
    if n != chain.n:
        raise InvalidInputError("n differs from the chain's scale")
    x = _x0(x0)
    d = x.size
    out = np.empty((chain.states.size + 1, d))
    out[0] = x
    cur = x[None, :].copy()
    for k, s in enumerate(chain.states):
        step = np.asarray(b(cur, np.array([s])), dtype=float).reshape(1, d)
        cur = cur + step / n
        out[k + 1] = cur[0]
    return CadlagPath(chain.grid, out)


# ---------------------------------------------------------------- jump diffusion

def solve_jump_diffusion(sigma1: CoefficientMap | None, sigma2: CoefficientMap | None,
                         b: CoefficientMap | None, W: GaussianDriver | None,
                         xi: PoissonDriver | None, x0, n: int | None = None) -> CadlagPath:
    """Left-point Euler scheme for
    X = x0 + n^{-1/2} int sigma1(X, u) W(ds du) + int b(X) ds + n^{-1} int sigma2(X, u) xi(n ds du).

    Per step the diffusion and drift use the state at the step's left end;
    atoms inside the step then jump in time order, each from its pre-jump
    state.
    """
    drivers = [d for d in (W, xi) if d is not None]
    if not drivers:
        raise InvalidInputError("need at least one driver")
    grid = drivers[0].grid
    if any(d.grid != grid for d in drivers):
        raise DimensionError("drivers live on different grids")
    scales = {d.n for d in drivers}
    if len(scales) != 1 or (n is not None and int(n) not in scales):
        raise InvalidInputError("drivers and n disagree on the scale")
    n = scales.pop()
    x = _x0(x0)
    d = x.size
    steps, dt = grid.steps, grid.dt
    out = np.empty((steps + 1, d))
    out[0] = x
    root_n = math.sqrt(n)
    if xi is not None and sigma2 is not None:
        atom_step = xi.atom_steps
        order = np.argsort(atom_step, kind="stable")
        bounds = np.searchsorted(atom_step[order], np.arange(steps + 1))
    cur = x[None, :].copy()
    for i in range(steps):
        incr = np.zeros((1, d))
        if W is not None and sigma1 is not None:
            incr += np.einsum("rdc,c->rd", sigma1(cur), W.noise[i]) / root_n
        if b is not None:
            incr += b(cur) * dt
        if xi is not None and sigma2 is not None:
            for a in order[bounds[i]:bounds[i + 1]]:
                cur = cur + sigma2(cur)[:, :, xi.cells[a]] / n
        cur = cur + incr
        out[i + 1] = cur[0]
    return CadlagPath(grid, out)


def simulate_jump_diffusion(sigma1: CoefficientMap | None, sigma2: CoefficientMap | None,
                            b: CoefficientMap | None, w_space: DiscreteMeasureSpace | None,
                            nu_space: DiscreteMeasureSpace | None, grid: TimeGrid, n: int, x0,
                            seed: int, sids, backend=None) -> np.ndarray:
    """Ensemble version of ``solve_jump_diffusion``: node values, shape (R, nodes, d).

    Replica r uses stream ``sids[r]``: white noise on channel 0, Poisson atoms
    on channel 1, so each replica equals the single-path solve on drivers
    simulated from ``RandomStream(seed, sids[r])``.
    """
    sids = np.asarray(sids, dtype=np.uint64)
    R = sids.size
    x = _x0(x0)
    d = x.size
    steps, dt = grid.steps, grid.dt
    cur = np.tile(x, (R, 1))
    out = np.empty((R, steps + 1, d))
    out[:, 0] = cur
    noise = None
    if w_space is not None and sigma1 is not None:
        z = kernels.normal_lanes(seed, sids, steps * w_space.size, 0, backend)
        noise = z.reshape(R, steps, w_space.size) * np.sqrt(w_space.masses * dt)
    per = None
    maxj = None
    if nu_space is not None and sigma2 is not None:
        per = []
        maxj = np.zeros(steps, np.int64)
        for sid in sids:
            times, cells = kernels._atoms_from_stream(RandomStream(seed, int(sid)),
                                                      n * nu_space.total_mass, grid.horizon,
                                                      nu_space.masses, 1)
            st = np.clip(np.searchsorted(grid.nodes, times, side="left") - 1, 0, steps - 1)
            cnt = np.bincount(st, minlength=steps)
            maxj = np.maximum(maxj, cnt)
            per.append((np.concatenate(([0], np.cumsum(cnt))), cells))
    root_n = math.sqrt(n)
    for i in range(steps):
        incr = np.zeros((R, d))
        if noise is not None:
            incr += np.einsum("rdc,rc->rd", sigma1(cur), noise[:, i]) / root_n
        if b is not None:
            incr += b(cur) * dt
        if per is not None:
            for j in range(int(maxj[i])):
                rows, cells = [], []
                for r, (offs, cl) in enumerate(per):
                    if offs[i] + j < offs[i + 1]:
                        rows.append(r)
                        cells.append(cl[offs[i] + j])
                rows = np.array(rows)
                s2 = sigma2(cur[rows])
                cur[rows] += s2[np.arange(rows.size), :, np.array(cells)] / n
        cur = cur + incr
        out[:, i + 1] = cur
    return out


# ---------------------------------------------------------------- exp tightness

@dataclass
class TightnessRow:
    t: float
    h: float
    sign: int
    mean: float
    std_error: float
    envelope: float
    passed: bool


@dataclass
class TightnessReport:
    n: int
    constant: float
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst(self) -> TightnessRow:
        return max(self.rows, key=lambda r: (r.mean - r.envelope) / max(r.std_error, 1e-300))


def exp_tightness_diagnostic(paths, grid: TimeGrid, n: int, h_window: float, C_declared: float,
                             starts: Sequence[float] | None = None, prefactor: float = 1.0,
                             se_slack: float = 5.0, min_paths: int = 1000) -> TightnessReport:
    """Compare mean exp(+-n (X(t+h) - X(t))) over an ensemble with prefactor * exp(n C h).

    ``paths`` is an array (R, nodes) of scalar node values (or a list of
    scalar CadlagPaths on ``grid``).  Each (t, h, sign) passes when the
    empirical mean is at most the envelope plus ``se_slack`` standard errors.
    """
    if isinstance(paths, (list, tuple)):
        X = np.stack([p.scalar() for p in paths])
    else:
        X = np.asarray(paths, dtype=float)
        if X.ndim == 3:
            if X.shape[2] != 1:
                raise DimensionError("diagnostic handles scalar paths")
            X = X[:, :, 0]
    if X.shape[0] < min_paths:
        raise InvalidInputError(f"need at least {min_paths} paths, got {X.shape[0]}")
    if X.shape[1] != grid.steps + 1:
        raise DimensionError("paths do not match the grid")
    if n * C_declared * h_window > OVERFLOW_GUARD:
        raise ScenarioError(
            f"n * C * h = {n * C_declared * h_window:.3g} exceeds {OVERFLOW_GUARD:g}; "
            "use a smaller n or window")
    k = int(round(h_window / grid.dt))
    if k < 1 or abs(k * grid.dt - h_window) > 1e-9 * max(1.0, h_window):
        raise InvalidInputError("window must be a positive multiple of the grid step")
    if starts is None:
        stride = max(1, (grid.steps - k) // 4)
        starts = grid.nodes[: grid.steps - k + 1: stride]
    env = prefactor * math.exp(n * C_declared * h_window)
    report = TightnessReport(int(n), float(C_declared))
    R = X.shape[0]
    for t in starts:
        i = grid.node_index(t)
        if i + k > grid.steps:
            raise InvalidInputError(f"window starting at {t} leaves the grid")
        D = X[:, i + k] - X[:, i]
        for sign in (1, -1):
            with np.errstate(over="ignore"):
                e = np.exp(sign * n * D)
            m = float(e.mean())
            se = float(e.std(ddof=1) / math.sqrt(R))
            ok = math.isfinite(m) and m <= env + se_slack * se
            report.rows.append(TightnessRow(float(grid.nodes[i]), h_window, sign, m, se, env, ok))
    return report


__all__ = [
    "CoefficientMap", "constant_map", "solve_markov_evolution", "solve_jump_diffusion",
    "simulate_jump_diffusion", "exp_tightness_diagnostic", "TightnessReport", "TightnessRow",
]

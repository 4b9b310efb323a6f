"""Rate functions: Legendre transforms, Schilder and Levy path actions,
Donsker-Varadhan occupation rates and controlled-equation checks."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._optim import descend
from .core import CadlagPath, DiscreteMeasureSpace, GridFunction, TimeGrid, _values
from .drivers import validate_kernel
from .errors import DimensionError, InvalidInputError, InvalidKernelError, UnboundedError
from .integrate import FiniteVariationPath, fv_pathwise_integral, total_variation

EXP_LIMIT = 709.0


# ---------------------------------------------------------------- log-MGFs

class LogMGF:
    """Convex function mu on R^m with mu(0) = 0.

    Without an analytic gradient, central differences with step
    1e-6 * (1 + |x|) are used.
    """

    def __init__(self, evaluator: Callable, dim: int, gradient: Callable | None = None,
                 name: str = "custom"):
        if dim < 1:
            raise InvalidInputError("dimension must be at least 1")
        self._f = evaluator
        self._g = gradient
        self.dim = int(dim)
        self.name = name
        self._validated = False

    def _x(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise DimensionError(f"{self.name}: expected a point in R^{self.dim}")
        return x

    def __call__(self, x) -> float:
        return float(self._f(self._x(x)))

    def grad(self, x) -> np.ndarray:
        x = self._x(x)
        if self._g is not None:
            return np.asarray(self._g(x), dtype=float).reshape(self.dim)
        out = np.empty(self.dim)
        for j in range(self.dim):
            h = 1e-6 * (1.0 + abs(x[j]))
            e = np.zeros(self.dim)
            e[j] = h
            out[j] = (self(x + e) - self(x - e)) / (2.0 * h)
        return out

    def validate(self, trials: int = 64, radius: float = 3.0, seed: int = 0) -> None:
        """mu(0) = 0 and midpoint convexity on random segments (tolerance 1e-9)."""
        if self._validated:
            return
        if abs(self(np.zeros(self.dim))) > 1e-12:
            raise InvalidInputError(f"{self.name}: mu(0) != 0")
        gen = np.random.default_rng(seed)
        for _ in range(trials):
            a, b = gen.uniform(-radius, radius, (2, self.dim))
            try:
                fa, fb, fm = self(a), self(b), self(0.5 * (a + b))
            except UnboundedError:
                continue
            if fm > 0.5 * (fa + fb) + 1e-9 * (1.0 + abs(fa) + abs(fb)):
                raise InvalidInputError(f"{self.name}: midpoint convexity fails between {a} and {b}")
        self._validated = True


def poisson_log_mgf(h_list: Sequence, space: DiscreteMeasureSpace) -> LogMGF:
    """mu(x) = sum_cells nu(c) (exp(sum_i x_i h_i(c)) - 1)."""
    if len(h_list) == 0:
        raise InvalidInputError("need at least one index function")
    H = np.stack([_values(h, space) for h in h_list])
    keep = space.masses > 0
    H, nu = H[:, keep], space.masses[keep]

    def expo(x):
        e = x @ H
        if e.size and e.max() > EXP_LIMIT:
            raise UnboundedError(f"exponential moment overflows at x = {x}")
        return e

    def f(x):
        return float(np.sum(nu * np.expm1(expo(x))))

    def g(x):
        return H @ (nu * np.exp(expo(x)))

    return LogMGF(f, H.shape[0], g, "poisson")


def cramer_log_mgf(h, pi) -> LogMGF:
    """H(p) = log sum_z pi(z) exp(p . h(z)) for a finite-support distribution pi.

    ``h`` is (states,) for scalar or (states, d) for vector-valued state functions.
    """
    pi = np.asarray(pi, dtype=float)
    hv = np.asarray(h, dtype=float)
    if hv.ndim == 1:
        hv = hv[:, None]
    if pi.ndim != 1 or hv.shape[0] != pi.size:
        raise DimensionError("h and pi must have one entry per state")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise InvalidInputError("pi must be a probability vector")
    keep = pi > 0
    logpi, hv = np.log(pi[keep]), hv[keep]

    def weights(p):
        a = logpi + hv @ p
        m = a.max()
        w = np.exp(a - m)
        s = w.sum()
        return m + math.log(s), w / s

    def f(p):
        return weights(p)[0]

    def g(p):
        return weights(p)[1] @ hv

    return LogMGF(f, hv.shape[1], g, "cramer")


def quadratic_log_mgf(cov) -> LogMGF:
    """mu(x) = x' S x / 2, the Gaussian case."""
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    return LogMGF(lambda x: 0.5 * float(x @ S @ x), S.shape[0], lambda x: S @ x, "gaussian")


# ---------------------------------------------------------------- Legendre

@dataclass
class LegendreResult:
    value: float
    argmax: np.ndarray
    iterations: int
    bounded: bool
    converged: bool


def legendre_solve(mu: LogMGF, y, box0: float = 4.0, tol: float = 1e-10,
                   max_doublings: int = 40) -> LegendreResult:
    """sup_x [x.y - mu(x)] by projected ascent on a box that doubles while the
    maximizer is pinned to its boundary."""
    mu.validate()
    y = mu._x(y)

    def neg(x):
        try:
            return mu(x) - float(x @ y)
        except UnboundedError:
            return math.inf

    def neg_grad(x):
        return mu.grad(x) - y

    x = np.zeros(mu.dim)
    B = float(box0)
    iters = 0
    for _ in range(max_doublings + 1):
        res = descend(neg, neg_grad, x, tol=tol, lower=-B, upper=B)
        iters += res.iterations
        x = res.x
        g = neg_grad(x)
        outward = ((x >= B) & (g < -tol)) | ((x <= -B) & (g > tol))
        if not outward.any():
            return LegendreResult(max(0.0, -res.value), x, iters, True, res.converged)
        B *= 2.0
    value = -neg(x)
    if value > 1.0 / tol or not math.isfinite(value):
        return LegendreResult(math.inf, x, iters, False, False)
    return LegendreResult(value, x, iters, True, False)


def legendre(mu: LogMGF, y, box0: float = 4.0, tol: float = 1e-10) -> float:
    """lambda(y) = sup_x [x.y - mu(x)]; math.inf when the supremum is unbounded."""
    return legendre_solve(mu, y, box0, tol).value


class LegendreTransform:
    """Callable lambda = mu* with a cache keyed on the exact argument."""

    def __init__(self, mu: LogMGF, box0: float = 4.0, tol: float = 1e-10):
        self.mu = mu
        self.box0 = box0
        self.tol = tol
        self._cache: dict[bytes, LegendreResult] = {}

    def solve(self, y) -> LegendreResult:
        y = self.mu._x(y)
        key = y.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = legendre_solve(self.mu, y, self.box0, self.tol)
            self._cache[key] = hit
        return hit

    def __call__(self, y) -> float:
        return self.solve(y).value

    def argmax(self, y) -> np.ndarray:
        """Maximizer x*(y), which is also the gradient of lambda at y."""
        return self.solve(y).argmax


# ---------------------------------------------------------------- Gaussian family

class GramFactor:
    """C with C C' = Sigma, Sigma = [<h_i, h_j>], by clamped symmetric eigendecomposition."""

    def __init__(self, sigma):
        S = np.atleast_2d(np.asarray(sigma, dtype=float))
        if S.shape[0] != S.shape[1]:
            raise DimensionError("Gram matrix must be square")
        if not np.allclose(S, S.T, atol=1e-10, rtol=0):
            raise InvalidInputError("Gram matrix is not symmetric")
        S = 0.5 * (S + S.T)
        w, V = np.linalg.eigh(S)
        if w.min() < -1e-10 * max(1.0, np.trace(S)):
            raise InvalidInputError("Gram matrix is not positive semidefinite")
        cut = 1e-12 * max(np.trace(S), 0.0)
        w = np.where(w > cut, w, 0.0)
        self.sigma = S
        self.C = V * np.sqrt(w)
        self.rank = int(np.count_nonzero(w))
        inv = np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 0.0)
        self._pinv_sigma = (V * inv) @ V.T
        self._range = V[:, w > 0]

    @classmethod
    def from_functions(cls, h_list: Sequence, space: DiscreteMeasureSpace) -> "GramFactor":
        H = np.stack([_values(h, space) for h in h_list])
        return cls((H * space.masses) @ H.T)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def full_rank(self) -> bool:
        return self.rank == self.dim

    def reconstruction_error(self) -> float:
        return float(np.max(np.abs(self.C @ self.C.T - self.sigma)))

    def in_range(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        resid = v - self._range @ (self._range.T @ v)
        return bool(np.all(np.abs(resid) <= tol * (1.0 + np.abs(v).max(initial=0.0))))


def _as_gram(C) -> GramFactor:
    if isinstance(C, GramFactor):
        return C
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return GramFactor(C @ C.T)


def _check_start(phi: CadlagPath):
    if np.any(np.abs(phi.values[0]) > 1e-12):
        raise InvalidInputError("path must start at 0")


def schilder_action(psi: CadlagPath, C) -> float:
    """1/2 int |phi'|^2 dt over the minimum-norm preimage phi of psi = C phi."""
    G = _as_gram(C)
    if psi.dim != G.dim:
        raise DimensionError("path dimension differs from the Gram factor")
    _check_start(psi)
    if not G.full_rank:
        warnings.warn(f"Gram factor has rank {G.rank} < {G.dim}; using the pseudo-inverse",
                      stacklevel=2)
    d = np.diff(psi.values, axis=0)
    if not G.full_rank and not all(G.in_range(row) for row in d):
        return math.inf
    dt = psi.grid.dt
    return float(0.5 * np.einsum("ij,jk,ik->", d, G._pinv_sigma, d) / dt)


class PathAction:
    """Functional of piecewise-linear node values, shape (nodes, dim)."""

    dim: int

    def value(self, nodes: np.ndarray, dt: float) -> float:
        raise NotImplementedError

    def gradient(self, nodes: np.ndarray, dt: float) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, path: CadlagPath) -> float:
        return self.value(path.values, path.grid.dt)


class SchilderAction(PathAction):
    """1/2 sum d' Sigma^+ d / dt with d the node increments."""

    def __init__(self, C):
        self.gram = _as_gram(C)
        self.dim = self.gram.dim
        self._Q = self.gram._pinv_sigma

    def value(self, nodes, dt):
        d = np.diff(nodes, axis=0)
        return float(0.5 * np.einsum("ij,jk,ik->", d, self._Q, d) / dt)

    def gradient(self, nodes, dt):
        q = np.diff(nodes, axis=0) @ self._Q / dt
        g = np.zeros_like(nodes)
        g[1:] += q
        g[:-1] -= q
        return g


class LevyAction(PathAction):
    """sum lambda(slope) dt, lambda the Legendre transform of a log-MGF."""

    def __init__(self, lam):
        if isinstance(lam, LogMGF):
            lam = LegendreTransform(lam)
        self.lam = lam
        self.dim = lam.mu.dim

    def value(self, nodes, dt):
        total = 0.0
        for s in np.diff(nodes, axis=0) / dt:
            v = self.lam(s)
            if not math.isfinite(v):
                return math.inf
            total += v * dt
        return total

    def gradient(self, nodes, dt):
        q = np.array([self.lam.argmax(s) for s in np.diff(nodes, axis=0) / dt])
        g = np.zeros_like(nodes)
        g[1:] += q
        g[:-1] -= q
        return g


def levy_path_action(phi: CadlagPath, lam) -> float:
    """int lambda(phi'(s)) ds for a piecewise-linear path; inf if some slope is infeasible."""
    _check_start(phi)
    act = LevyAction(lam)
    if phi.dim != act.dim:
        raise DimensionError("path dimension differs from the log-MGF")
    return act(phi)


# ---------------------------------------------------------------- reports

@dataclass
class RateReport:
    value: float
    argmin: object = None
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def upper_bound_only(self) -> bool:
        return not self.converged


# ---------------------------------------------------------------- Donsker-Varadhan

def uniform_ergodicity_check(P, l: int, N: int, M: float) -> bool:
    """P^l(x, .) <= (M/N) sum_{m=1}^N P^m(y, .) for every pair of states x, y."""
    P = validate_kernel(P)
    if l < 1 or N < 1 or not M > 0:
        raise InvalidInputError("need l >= 1, N >= 1, M > 0")
    Pl = np.linalg.matrix_power(P, l)
    acc = np.zeros_like(P)
    Pm = np.eye(P.shape[0])
    for _ in range(N):
        Pm = Pm @ P
        acc += Pm
    lhs = Pl.max(axis=0)               # worst x for each target state
    rhs = (M / N) * acc.min(axis=0)    # worst y for each target state
    return bool(np.all(lhs <= rhs * (1.0 + 1e-12) + 1e-300))


def ergodicity_constant(P, l: int = 1, N: int | None = None) -> float:
    """Smallest M making the uniform ergodicity bound hold (inf if none does)."""
    P = validate_kernel(P)
    N = P.shape[0] if N is None else N
    Pl = np.linalg.matrix_power(P, l)
    acc = np.zeros_like(P)
    Pm = np.eye(P.shape[0])
    for _ in range(N):
        Pm = Pm @ P
        acc += Pm
    lhs, rhs = Pl.max(axis=0), acc.min(axis=0) / N
    if np.any((lhs > 0) & (rhs <= 0)):
        return math.inf
    ok = lhs > 0
    return float(np.max(lhs[ok] / rhs[ok])) if ok.any() else 0.0


def _dv_parts(logP, mu, g):
    """Objective sum_i mu_i [log (P e^g)_i - g_i], its gradient and Hessian."""
    a = logP + g[None, :]
    m = a.max(axis=1)
    w = np.exp(a - m[:, None])
    s = w.sum(axis=1)
    w /= s[:, None]
    val = float(mu @ (m + np.log(s) - g))
    grad = mu @ w - mu
    hess = np.diag(mu @ w) - (w.T * mu) @ w
    return val, grad, hess


def donsker_varadhan(P, mu, ergodicity=None, tol: float = 1e-12, maxiter: int = 500,
                     unbounded_at: float = 1e6) -> RateReport:
    """I_P(mu) = -inf_g sum_i mu_i log((P e^g)_i / e^{g_i}) by damped Newton.

    ``mu`` is any nonnegative vector (finite measure on the states).
    ``ergodicity`` = (l, N, M) is checked when given; otherwise the smallest M
    for l = 1, N = |E| is computed and a warning is issued if none exists.
    The value is inf when the objective decreases past -``unbounded_at``.
    """
    P = validate_kernel(P)
    mu = np.asarray(mu, dtype=float)
    E = P.shape[0]
    if mu.shape != (E,) or np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise InvalidInputError("mu must be a nonnegative vector with one entry per state")
    diag = {}
    if ergodicity is not None:
        l, N, M = ergodicity
        if not uniform_ergodicity_check(P, l, N, M):
            raise InvalidKernelError(f"uniform ergodicity bound fails for (l, N, M) = {ergodicity}")
        diag["ergodicity"] = tuple(ergodicity)
    else:
        M = ergodicity_constant(P)
        diag["ergodicity_M"] = M
        if not math.isfinite(M):
            warnings.warn("kernel fails the uniform ergodicity bound; check waived", stacklevel=2)
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    g = np.zeros(E)
    val, grad, hess = _dv_parts(logP, mu, g)
    radius = 10.0
    it = 0
    converged = False
    for it in range(1, maxiter + 1):
        gn = float(np.abs(grad).max())
        if gn < tol * max(1.0, mu.sum()):
            converged = True
            break
        # Newton step in the mean-zero gauge; pinv handles the constant null direction
        step = -np.linalg.pinv(hess, rcond=1e-12) @ grad
        step -= step.mean()
        if float(grad @ step) >= 0:
            # flat curvature along the gradient: steepest descent out to the trust radius
            step = -grad * (radius / float(np.linalg.norm(grad)))
        nrm = float(np.linalg.norm(step))
        if nrm > radius:
            step *= radius / nrm
        t = 1.0
        while True:
            cand = g + t * step
            cv, cg, ch = _dv_parts(logP, mu, cand)
            # allowance for roundoff once the predicted decrease drops below machine precision
            if cv <= val + 1e-4 * t * float(grad @ step) + 4e-16 * (1.0 + abs(val)):
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            converged = gn < 1e-8
            diag["stalled"] = True
            break
        radius = radius * 2.0 if t == 1.0 else max(radius * 0.5, 1e-3)
        g, val, grad, hess = cand, cv, cg, ch
        if val < -unbounded_at:
            return RateReport(math.inf, g, it, float(np.abs(grad).max()), True,
                              dict(diag, unbounded=True))
    return RateReport(max(0.0, -val), g - g.mean(), it, float(np.abs(grad).max()),
                      converged, diag)


# ---------------------------------------------------------------- controlled equation

@dataclass
class ControlledReport:
    residual: float
    threshold: float
    passed: bool


def _apply_map(F, x: CadlagPath) -> np.ndarray:
    """F at every node, shape (nodes, d, cells)."""
    return np.stack([_map_one(F, v) for v in x.values])


def _integral_of(F, x: CadlagPath, ystar: FiniteVariationPath, basis=None) -> np.ndarray:
    Fx = _apply_map(F, x)
    d = Fx.shape[1]
    cols = []
    for j in range(d):
        comp = CadlagPath(x.grid, Fx[:, j, :])
        cols.append(fv_pathwise_integral(comp, ystar, basis).scalar())
    return np.stack(cols, axis=1)


def verify_controlled_equation(x: CadlagPath, u: CadlagPath, F, ystar: FiniteVariationPath,
                               tol: float = 1e-9, basis=None) -> ControlledReport:
    """Residual sup_t |x - u - F(x).y*| against tol * (1 + total variation of y*)."""
    if x.grid != u.grid or x.grid != ystar.grid:
        raise DimensionError("paths live on different grids")
    if x.dim != u.dim:
        raise DimensionError("x and u differ in dimension")
    r = x.values - u.values - _integral_of(F, x, ystar, basis)
    resid = float(np.max(np.sqrt(np.sum(r * r, axis=1))))
    thr = tol * (1.0 + total_variation(ystar))
    return ControlledReport(resid, thr, resid <= thr)


def solve_controlled_equation(u: CadlagPath, F, ystar: FiniteVariationPath,
                              basis=None) -> CadlagPath:
    """Forward solve of x = u + F(x).y* (left-point sums make it explicit)."""
    if u.grid != ystar.grid:
        raise DimensionError("paths live on different grids")
    basis = basis if basis is not None else ystar.basis
    dy = np.diff(ystar.coefficients.values, axis=0)
    x = np.empty_like(u.values)
    x[0] = u.values[0]
    acc = np.zeros(u.dim)
    for i in range(u.grid.steps):
        Fi = _map_one(F, x[i])
        p = basis.coefficients(Fi)[:, : ystar.dim] if basis is not None else Fi[:, : ystar.dim]
        acc = acc + p @ dy[i]
        x[i + 1] = u.values[i + 1] + acc
    return u.with_values(x)


def _map_one(F, v) -> np.ndarray:
    out = F(v)
    out = out.values if isinstance(out, GridFunction) else np.asarray(out, dtype=float)
    return np.atleast_2d(out)


# ---------------------------------------------------------------- constrained minimization

class FixedEndpoint:
    """phi(0) = start and phi(T)[coords] = value[coords]; NaN entries of value are free."""

    def __init__(self, value, start=0.0):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.start = start

    def problems(self, grid: TimeGrid, dim: int):
        start = np.broadcast_to(np.asarray(self.start, dtype=float), (dim,))
        end = np.broadcast_to(self.value, (dim,))
        fixed = np.zeros((grid.steps + 1, dim), bool)
        vals = np.zeros((grid.steps + 1, dim))
        fixed[0] = True
        vals[0] = start
        known = ~np.isnan(end)
        fixed[-1, known] = True
        vals[-1, known] = end[known]
        yield {"terminal": end.tolist()}, fixed, vals


class LevelCrossing:
    """sup_t |phi(t)[coord]| >= level, handled by enumerating the hitting node and sign."""

    def __init__(self, level: float, coord: int = 0, nodes=None, start=0.0):
        if not level > 0:
            raise InvalidInputError("level must be positive")
        self.level = float(level)
        self.coord = int(coord)
        self.nodes = nodes
        self.start = start

    def problems(self, grid: TimeGrid, dim: int):
        nodes = range(1, grid.steps + 1) if self.nodes is None else self.nodes
        start = np.broadcast_to(np.asarray(self.start, dtype=float), (dim,))
        for k in nodes:
            for sign in (1.0, -1.0):
                fixed = np.zeros((grid.steps + 1, dim), bool)
                vals = np.zeros((grid.steps + 1, dim))
                fixed[0] = True
                vals[0] = start
                fixed[k, self.coord] = True
                vals[k, self.coord] = sign * self.level
                yield {"hit_node": int(k), "sign": sign}, fixed, vals


def _initial(fixed, vals, gen, jitter):
    """Linear interpolation between fixed values per coordinate, plus jitter on free nodes."""
    x = vals.copy()
    t = np.arange(x.shape[0], dtype=float)
    for j in range(x.shape[1]):
        idx = np.flatnonzero(fixed[:, j])
        x[:, j] = np.interp(t, idx, vals[idx, j])
    if jitter:
        x[~fixed] += gen.normal(0.0, jitter, np.count_nonzero(~fixed))
    return x


def minimize_action(action: PathAction, constraint, grid: TimeGrid, restarts: int = 3,
                    seed: int = 0, tol: float = 1e-9, maxiter: int = 100_000) -> RateReport:
    """Minimize a convex path action over node values subject to a constraint.

    Each constraint yields one or more subproblems (fixed node masks); every
    subproblem is solved from ``restarts`` starting points and the best value
    over all of them is reported with its argmin path.
    """
    if restarts < 1:
        raise InvalidInputError("restarts must be at least 1")
    gen = np.random.default_rng(seed)
    dt = grid.dt
    best = None
    for info, fixed, vals in constraint.problems(grid, action.dim):
        free = ~fixed
        for r in range(restarts):
            x0 = _initial(fixed, vals, gen, 0.0 if r == 0 else 0.1)
            if not free.any():
                v = action.value(x0, dt)
                res = (v, x0, 0, 0.0, True)
            else:
                def fun(z, x0=x0, free=free):
                    x = x0.copy()
                    x[free] = z
                    return action.value(x, dt)

                def grad(z, x0=x0, free=free):
                    x = x0.copy()
                    x[free] = z
                    return action.gradient(x, dt)[free]

                out = descend(fun, grad, x0[free], tol=tol, maxiter=maxiter)
                x = x0.copy()
                x[free] = out.x
                res = (out.value, x, out.iterations, out.grad_norm, out.converged)
            if best is None or res[0] < best[0]:
                best = res + (info,)
    value, x, iters, gn, conv, info = best
    return RateReport(float(value), CadlagPath(grid, x, "linear"), iters, gn, conv,
                      dict(info))


__all__ = [
    "LogMGF", "poisson_log_mgf", "cramer_log_mgf", "quadratic_log_mgf", "legendre",
    "legendre_solve", "LegendreTransform", "LegendreResult", "GramFactor", "schilder_action",
    "SchilderAction", "LevyAction", "PathAction", "levy_path_action", "RateReport",
    "donsker_varadhan", "uniform_ergodicity_check", "ergodicity_constant",
    "verify_controlled_equation", "solve_controlled_equation", "ControlledReport",
    "minimize_action", "FixedEndpoint", "LevelCrossing",
]

"""Small deterministic first-order minimizer shared by the rate routines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    converged: bool
    stalled: bool = False


def descend(fun, grad, x0, tol: float = 1e-9, maxiter: int = 100_000,
            lower=None, upper=None) -> DescentResult:
    """Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    ``fun`` may return inf (treated as infeasible).  Convergence is declared
    when the projected-gradient norm drops below ``tol``; if the line search
    stalls at round-off level the run stops and reports ``stalled``.
    """
    x = np.array(x0, dtype=float, copy=True)
    box = lower is not None or upper is not None
    lo = -np.inf if lower is None else lower
    hi = np.inf if upper is None else upper

    def proj(z):
        return np.clip(z, lo, hi) if box else z

    x = proj(x)
    f = fun(x)
    if not math.isfinite(f):
        raise ValueError("starting point is infeasible")
    g = grad(x)

    def pg_norm(x, g):
        return float(np.linalg.norm(x - proj(x - g))) if box else float(np.linalg.norm(g))

    gn = pg_norm(x, g)
    alpha = 1.0 / max(1.0, float(np.linalg.norm(g)))
    for it in range(maxiter):
        if gn < tol:
            return DescentResult(x, f, it, gn, True)
        while True:
            xn = proj(x - alpha * g)
            step = xn - x
            if alpha < 1e-30 or not np.any(step):
                # no representable move left: round-off floor reached
                return DescentResult(x, f, it, gn, gn < 1e-6, stalled=True)
            fn = fun(xn)
            if math.isfinite(fn) and fn <= f + 1e-4 * float(g @ step):
                break
            alpha *= 0.5
        gnew = grad(xn)
        s, y = xn - x, gnew - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 2.0 * alpha
        x, f, g = xn, fn, gnew
        gn = pg_norm(x, g)
    return DescentResult(x, f, maxiter, gn, gn < tol)

"""Young functions, Luxemburg norms and Morse-Transue membership on discrete spaces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteMeasureSpace, GridFunction, _values
from .errors import InvalidInputError, UnboundedError

MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class YoungFunction:
    """Even, convex, nondecreasing Phi on [0, inf) with Phi(0) = 0."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    parameters: tuple = field(default_factory=tuple)

    def __call__(self, x):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.evaluator(np.asarray(x, dtype=float))

    def validate(self, upper: float = 50.0, points: int = 401) -> None:
        """Check the Young-function axioms on a sample grid; raise on failure."""
        xs = np.linspace(0.0, upper, points)
        ys = self(xs)
        if not np.isfinite(ys).all():
            raise InvalidInputError(f"{self.name}: not finite on [0, {upper}]")
        if abs(float(self(0.0))) > 1e-14:
            raise InvalidInputError(f"{self.name}: Phi(0) != 0")
        if not np.allclose(self(-xs), ys, rtol=1e-12, atol=1e-14):
            raise InvalidInputError(f"{self.name}: not even")
        scale = 1e-12 * (1.0 + np.abs(ys))
        if np.any(np.diff(ys) < -scale[1:]):
            raise InvalidInputError(f"{self.name}: not nondecreasing")
        second = ys[:-2] - 2.0 * ys[1:-1] + ys[2:]
        if np.any(second < -1e-9 * (1.0 + np.abs(ys[1:-1]))):
            raise InvalidInputError(f"{self.name}: not convex")
        big = float(self(1e6))
        if not big > 1.0:
            raise InvalidInputError(f"{self.name}: does not grow without bound")


def exp_minus_one() -> YoungFunction:
    """Phi(x) = exp(|x|) - 1."""
    return YoungFunction(lambda x: np.expm1(np.abs(x)), "exp_minus_one")


def power_p(p: float) -> YoungFunction:
    """Phi(x) = |x|^p for p >= 1."""
    if p < 1:
        raise InvalidInputError("power_p needs p >= 1")
    return YoungFunction(lambda x: np.abs(x) ** p, "power_p", (float(p),))


def _modular(vals: np.ndarray, masses: np.ndarray, phi: YoungFunction) -> float:
    """Integral of Phi(|f|) against the cell masses, inf on overflow."""
    keep = masses > 0
    with np.errstate(over="ignore", invalid="ignore"):
        terms = phi(np.abs(vals[keep])) * masses[keep]
        total = float(np.sum(terms))
    return total if math.isfinite(total) else math.inf


def _split(f, space):
    if isinstance(f, GridFunction):
        space = f.space if space is None else space
        return _values(f, space), space
    if space is None:
        raise InvalidInputError("raw arrays need an explicit space")
    return _values(f, space), space


def modular(f, phi: YoungFunction, space: DiscreteMeasureSpace | None = None) -> float:
    """Integral of Phi(|f|) over the space."""
    vals, space = _split(f, space)
    return _modular(vals, space.masses, phi)


def orlicz_norm(f, phi: YoungFunction, tol: float = 1e-12,
                space: DiscreteMeasureSpace | None = None, validate: bool = True) -> float:
    """Luxemburg norm inf{A > 0 : int Phi(|f|/A) dmu <= 1}.

    Bisection on A (the modular is decreasing in A) until the bracket is
    narrower than ``tol * A``.  The returned A is the upper end of the final
    bracket, so it always satisfies the defining inequality.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    if validate:
        phi.validate()
    vals, space = _split(f, space)
    masses = space.masses
    support = (vals != 0) & (masses > 0)
    if not support.any():
        return 0.0
    vals = np.abs(vals[support])
    masses = masses[support]
    peak = float(vals.max())

    def g(A):
        return _modular(vals / A, masses, phi)

    lo, hi = peak * 1e-6, peak * 1e6
    for _ in range(MAX_DOUBLINGS):
        if g(lo) > 1.0:
            break
        lo *= 0.5
    else:
        raise InvalidInputError("modular stays below 1 for every probed A; masses too small")
    for _ in range(MAX_DOUBLINGS):
        if g(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise UnboundedError("modular exceeds 1 at every A in the search bracket")
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def unit_ball_check(f, phi: YoungFunction, space: DiscreteMeasureSpace | None = None) -> bool:
    """True iff int Phi(|f|) dmu <= 1, i.e. the Luxemburg norm is at most one."""
    vals, space = _split(f, space)
    return _modular(vals, space.masses, phi) <= 1.0


def morse_transue_member(f, phi: YoungFunction, a_probe: Sequence[float] = (1.0, 10.0, 100.0),
                         space: DiscreteMeasureSpace | None = None) -> bool:
    """Overflow probe: is int Phi(a|f|) dmu representable at every probe a?

    On a finite space every such integral is a finite sum, so this only
    detects floating-point overflow; it is a diagnostic, not a tail test.
    """
    probes = np.asarray(a_probe, dtype=float)
    if probes.size == 0 or np.any(probes <= 0) or np.any(np.diff(probes) <= 0):
        raise InvalidInputError("a_probe must be nonempty, positive and increasing")
    vals, space = _split(f, space)
    return all(math.isfinite(_modular(a * vals, space.masses, phi)) for a in probes)

"""Simulated drivers: Gaussian white noise, Poisson random measures, Markov counting measures.

Every realization exposes ``increments(h)``, the per-step increments of the
real process Y(h, .) on its time grid, and is linear in h by construction.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .core import CadlagPath, DiscreteMeasureSpace, GridFunction, RandomStream, TimeGrid, \
    _values, cumulative
from .errors import DimensionError, InvalidInputError, InvalidKernelError
from .kernels import _atoms_from_stream


class DriverRealization(ABC):
    """One sample path of an index-linear driver on a time grid."""

    grid: TimeGrid
    n: int

    @abstractmethod
    def increments_many(self, H) -> np.ndarray:
        """Increments of Y(h_j, .) for the rows h_j of H, shape (steps, rows)."""

    def _rows(self, h, size: int) -> np.ndarray:
        if isinstance(h, GridFunction):
            h = h.values
        H = np.atleast_2d(np.asarray(h, dtype=float))
        if H.shape[-1] != size:
            raise DimensionError(f"index function needs {size} values, got {H.shape[-1]}")
        return H

    def increments(self, h) -> np.ndarray:
        return self.increments_many(h)[:, 0]

    def path(self, h) -> CadlagPath:
        inc = self.increments(h)
        return CadlagPath(self.grid, np.concatenate(([0.0], np.cumsum(inc))))

    def evaluate(self, h, t: float) -> float:
        """Y(h, t) at the last grid node not after t."""
        k = self.grid.node_index(t)
        return float(np.sum(self.increments(h)[:k]))


def validate_kernel(P, tol: float = 1e-12) -> np.ndarray:
    """Return P as an array after checking it is square and row-stochastic."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise InvalidKernelError("transition matrix must be square and nonempty")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise InvalidKernelError("transition probabilities must be finite and nonnegative")
    bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise InvalidKernelError(f"row {bad[0]} sums to {P[bad[0]].sum()!r}, not 1")
    return P


def stationary_distribution(P) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 (unique for irreducible P)."""
    P = validate_kernel(P)
    E = P.shape[0]
    A = np.vstack([P.T - np.eye(E), np.ones((1, E))])
    b = np.zeros(E + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


class GaussianDriver(DriverRealization):
    """Space-time white noise on cells, scaled by n^{-1/2}.

    ``noise[i, c]`` is the unscaled increment of W(1_c, .) over step i, with
    variance mass(c) * dt.
    """

    def __init__(self, space: DiscreteMeasureSpace, grid: TimeGrid, n: int, noise):
        noise = np.array(noise, dtype=float, copy=True)
        if noise.shape != (grid.steps, space.size):
            raise DimensionError("noise must have shape (steps, cells)")
        noise.setflags(write=False)
        self.space = space
        self.grid = grid
        self.n = int(n)
        self.noise = noise

    def increments_many(self, H) -> np.ndarray:
        H = self._rows(H, self.space.size)
        return (self.noise @ H.T) / math.sqrt(self.n)


def simulate_gaussian(space: DiscreteMeasureSpace, grid: TimeGrid, n: int,
                      stream: RandomStream, channel: int = 0) -> GaussianDriver:
    """Independent N(0, mass * dt) increments per step and cell (step-major draws)."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    z = stream.normal(grid.steps * space.size, channel).reshape(grid.steps, space.size)
    return GaussianDriver(space, grid, n, z * np.sqrt(space.masses * grid.dt))


class PoissonDriver(DriverRealization):
    """Poisson random measure with mean nu (x) n Lebesgue, read as xi_n / n.

    With ``centered=True`` the compensator t * int h dnu is subtracted.
    """

    def __init__(self, space: DiscreteMeasureSpace, grid: TimeGrid, n: int, times, cells,
                 centered: bool = False):
        times = np.array(times, dtype=float, copy=True)
        cells = np.array(cells, dtype=np.int64, copy=True)
        if times.shape != cells.shape:
            raise DimensionError("atom times and cells differ in length")
        if times.size and (np.any(np.diff(times) < 0) or times[-1] > grid.horizon):
            raise InvalidInputError("atom times must be sorted and inside the horizon")
        times.setflags(write=False)
        cells.setflags(write=False)
        self.space = space
        self.grid = grid
        self.n = int(n)
        self.times = times
        self.cells = cells
        self.centered = bool(centered)

    @property
    def atom_steps(self) -> np.ndarray:
        """Grid step containing each atom (atoms at t_{i+1} belong to step i)."""
        k = np.searchsorted(self.grid.nodes, self.times, side="left") - 1
        return np.clip(k, 0, self.grid.steps - 1)

    def counts(self) -> np.ndarray:
        """Atom counts per step and cell, shape (steps, cells)."""
        C = np.zeros((self.grid.steps, self.space.size))
        np.add.at(C, (self.atom_steps, self.cells), 1.0)
        return C

    def increments_many(self, H) -> np.ndarray:
        H = self._rows(H, self.space.size)
        inc = (self.counts() @ H.T) / self.n
        if self.centered:
            inc = inc - self.grid.dt * (H @ self.space.masses)[None, :]
        return inc


def simulate_poisson(space: DiscreteMeasureSpace, grid: TimeGrid, n: int, stream: RandomStream,
                     centered: bool = False, channel: int = 0) -> PoissonDriver:
    """Atoms from total-rate exponential clocks with marks proportional to mass."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    times, cells = _atoms_from_stream(stream, n * space.total_mass, grid.horizon,
                                      space.masses, channel)
    return PoissonDriver(space, grid, n, times, cells, centered)


class MarkovCountingDriver(DriverRealization):
    """Counting measure of a Markov chain read at speed n: Y(h, t) = sum_{k <= nt} h(xi_k) / n.

    The grid has one step per chain transition (dt = 1/n).
    """

    def __init__(self, kernel, states, n: int, initial_state: int):
        self.kernel = validate_kernel(kernel)
        states = np.array(states, dtype=np.int64, copy=True)
        states.setflags(write=False)
        if states.size == 0:
            raise InvalidInputError("chain needs at least one state")
        self.states = states
        self.n = int(n)
        self.initial_state = int(initial_state)
        self.grid = TimeGrid(states.size / self.n, states.size)

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    def increments_many(self, H) -> np.ndarray:
        H = self._rows(H, self.n_states)
        return H[:, self.states].T / self.n

    def occupation(self) -> np.ndarray:
        return np.bincount(self.states, minlength=self.n_states) / self.states.size


def simulate_markov_chain(P, initial, n: int, T: float, stream: RandomStream,
                          channel: int = 0) -> MarkovCountingDriver:
    """Sample xi_0 from ``initial`` (a distribution or a state index), then ceil(nT) moves."""
    P = validate_kernel(P)
    E = P.shape[0]
    if np.ndim(initial) == 0:
        start = int(initial)
        if not 0 <= start < E:
            raise InvalidInputError("initial state out of range")
        init = np.zeros(E)
        init[start] = 1.0
    else:
        init = np.asarray(initial, dtype=float)
        if init.shape != (E,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
            raise InvalidInputError("initial distribution must be a probability vector")
    N = int(math.ceil(n * T - 1e-9))
    if N < 1:
        raise InvalidInputError("n * T must be positive")
    u = stream.uniform(N + 1, channel)
    rows = cumulative(P)
    s0 = int(np.searchsorted(cumulative(init), u[0], side="right"))
    s = s0
    states = np.empty(N, np.int64)
    for k in range(N):
        s = int(np.searchsorted(rows[s], u[k + 1], side="right"))
        states[k] = s
    return MarkovCountingDriver(P, states, n, s0)


__all__ = [
    "DriverRealization", "GaussianDriver", "PoissonDriver", "MarkovCountingDriver",
    "simulate_gaussian", "simulate_poisson", "simulate_markov_chain", "validate_kernel",
    "stationary_distribution",
]

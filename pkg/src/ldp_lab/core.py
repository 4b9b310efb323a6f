"""Shared substrate: measure spaces, grids, cadlag paths, metrics, random streams."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from ._jit import NUMBA_ENABLED
from .errors import DimensionError, InvalidInputError


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


class DiscreteMeasureSpace:
    """Finite partition of a mark space with one nonnegative mass per cell."""

    def __init__(self, masses: Sequence[float], cells: Sequence | None = None):
        masses = _frozen(np.atleast_1d(masses))
        if masses.ndim != 1 or masses.size == 0:
            raise InvalidInputError("a measure space needs at least one cell")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise InvalidInputError("cell masses must be finite and nonnegative")
        if cells is None:
            cells = list(range(masses.size))
        cells = list(cells)
        if len(cells) != masses.size:
            raise DimensionError("cells and masses differ in length")
        self.cells = tuple(cells)
        self.masses = masses
        self.total_mass = float(np.sum(masses))

    @classmethod
    def uniform(cls, n_cells: int, total_mass: float = 1.0) -> "DiscreteMeasureSpace":
        return cls(np.full(n_cells, total_mass / n_cells))

    @property
    def size(self) -> int:
        return self.masses.size

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasureSpace):
            return NotImplemented
        return self.cells == other.cells and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.cells, self.masses.tobytes()))

    def __repr__(self):
        return f"DiscreteMeasureSpace(cells={self.size}, total_mass={self.total_mass:g})"

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.size, float(c)))

    def indicator(self, cell_index: int) -> "GridFunction":
        v = np.zeros(self.size)
        v[cell_index] = 1.0
        return GridFunction(self, v)

    def inner(self, f, g) -> float:
        """Weighted inner product sum(f * g * mass)."""
        return float(np.sum(_values(f, self) * _values(g, self) * self.masses))

    def norm(self, f) -> float:
        """L2(mass) norm."""
        return math.sqrt(self.inner(f, f))


class GridFunction:
    """Element h of the index space, one value per cell."""

    __array_priority__ = 100

    def __init__(self, space: DiscreteMeasureSpace, values):
        values = _frozen(np.atleast_1d(values))
        if values.shape != (space.size,):
            raise DimensionError(f"expected {space.size} cell values, got shape {values.shape}")
        self.space = space
        self.values = values

    def _check(self, other: "GridFunction"):
        if other.space != self.space:
            raise DimensionError("grid functions live on different spaces")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.space, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.space, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.space, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.space, -self.values)

    def norm(self) -> float:
        return self.space.norm(self)

    def __repr__(self):
        return f"GridFunction({np.array2string(self.values, precision=4)})"


def _values(f, space: DiscreteMeasureSpace | None = None) -> np.ndarray:
    """Cell values of a GridFunction or a raw array."""
    if isinstance(f, GridFunction):
        if space is not None and f.space != space:
            raise DimensionError("grid function belongs to a different space")
        return f.values
    v = np.asarray(f, dtype=float)
    if space is not None and v.shape[-1:] != (space.size,):
        raise DimensionError(f"expected {space.size} cell values, got shape {v.shape}")
    return v


def integrate_measure(f, space: DiscreteMeasureSpace | None = None) -> float:
    """Sum over cells of f(cell) * mass(cell)."""
    if space is None:
        if not isinstance(f, GridFunction):
            raise InvalidInputError("a raw array needs an explicit space")
        space = f.space
    return float(np.sum(_values(f, space) * space.masses))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with ``steps`` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidInputError("horizon must be positive and finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidInputError("steps must be a positive integer")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def node_index(self, t: float) -> int:
        """Index of the last node at or before ``t`` (clamped to the grid)."""
        k = math.floor(t / self.dt + 1e-9)
        return min(max(k, 0), self.steps)


class CadlagPath:
    """Vector-valued path sampled at the nodes of a TimeGrid.

    ``interpolation='step'`` is right-continuous piecewise constant,
    ``'linear'`` interpolates between nodes.
    """

    def __init__(self, grid: TimeGrid, values, interpolation: str = "step"):
        values = np.array(values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != grid.steps + 1:
            raise DimensionError(
                f"path needs {grid.steps + 1} nodes, got array of shape {values.shape}")
        if interpolation not in ("step", "linear"):
            raise InvalidInputError("interpolation must be 'step' or 'linear'")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.interpolation = interpolation

    @classmethod
    def from_function(cls, grid: TimeGrid, f: Callable, interpolation="step") -> "CadlagPath":
        vals = np.array([np.atleast_1d(f(t)) for t in grid.nodes], dtype=float)
        return cls(grid, vals, interpolation)

    @classmethod
    def constant(cls, grid: TimeGrid, value, interpolation="step") -> "CadlagPath":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.steps + 1, 1)), interpolation)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise DimensionError("path is not scalar")
        return self.values[:, 0]

    def __call__(self, t: float) -> np.ndarray:
        g = self.grid
        if self.interpolation == "step":
            return self.values[g.node_index(t)]
        s = min(max(t / g.dt, 0.0), float(g.steps))
        k = min(int(math.floor(s)), g.steps - 1)
        w = s - k
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def with_values(self, values) -> "CadlagPath":
        return CadlagPath(self.grid, values, self.interpolation)

    def __repr__(self):
        return f"CadlagPath(steps={self.grid.steps}, dim={self.dim}, {self.interpolation})"


def uniform_metric(a: CadlagPath, b: CadlagPath, T: float | None = None) -> float:
    """Sup over grid nodes in [0, T] of the Euclidean distance between paths."""
    if a.grid != b.grid or a.dim != b.dim:
        raise DimensionError("paths live on different grids or dimensions")
    last = a.grid.steps if T is None else a.grid.node_index(T)
    diff = np.abs(a.values[: last + 1] - b.values[: last + 1])
    # rescale per node so tiny differences do not underflow when squared
    m = diff.max(axis=1)
    safe = np.where(m > 0, m, 1.0)
    return float(np.max(m * np.sqrt(np.sum((diff / safe[:, None]) ** 2, axis=1))))


class RandomStream:
    """Deterministic stream of draws addressed by ``(seed, stream_id)``.

    Each channel (0..127) is an independent sub-sequence with its own cursor;
    the stream is the only stateful object in the package.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if not 0 <= self.stream_id < 2 ** 64:
            raise InvalidInputError("stream_id must be a 64-bit unsigned integer")
        self._k0, self._k1 = rng.split_key(self.seed)
        self._sid = np.uint64(self.stream_id)
        self._next: dict[int, int] = {}
        self._aux: dict[int, int] = {}

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def position(self, channel: int = 0):
        """(primary cursor, auxiliary cursor) of a channel."""
        return self._next.get(channel, 0), self._aux.get(channel, 0)

    def raw(self, count: int, channel: int = 0) -> np.ndarray:
        start = self._next.get(channel, 0)
        j = np.arange(start, start + count, dtype=np.uint64)
        self._next[channel] = start + count
        return rng.words_np(self._k0, self._k1, self._sid, rng.block_base(channel), j)

    def uniform(self, count: int, channel: int = 0) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return rng.unit_np(self.raw(count, channel))

    def exponential(self, count: int, rate: float = 1.0, channel: int = 0) -> np.ndarray:
        return -np.log1p(-self.uniform(count, channel)) / rate

    def categorical(self, probs, count: int, channel: int = 0) -> np.ndarray:
        """Indices drawn with probabilities ``probs`` (inverse-CDF on uniforms)."""
        cdf = cumulative(probs)
        return np.searchsorted(cdf, self.uniform(count, channel), side="right")

    def normal(self, count: int, channel: int = 0) -> np.ndarray:
        """Standard normals by the ziggurat method."""
        w = self.raw(count, channel)
        i = (w & rng.LOW7).astype(np.int64)
        u = (w >> rng.S11).astype(np.int64) * rng.TWO_M52 - 1.0
        z = u * rng.ZX[i]
        slow = np.flatnonzero(np.abs(u) >= rng.ZR[i])
        if slow.size:
            a = self._aux.get(channel, 0)
            base = rng.block_base(channel, aux=True)
            for k in slow:
                z[k], a = rng.zig_slow(w[k], self._k0, self._k1, self._sid, base, a)
            self._aux[channel] = int(a)
        return z


def cumulative(probs) -> np.ndarray:
    """CDF of a probability vector, with the last entry pinned to 1."""
    p = np.asarray(probs, dtype=float)
    cdf = np.cumsum(p, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


__all__ = [
    "DiscreteMeasureSpace", "GridFunction", "TimeGrid", "CadlagPath", "RandomStream",
    "uniform_metric", "integrate_measure", "cumulative", "NUMBA_ENABLED",
]

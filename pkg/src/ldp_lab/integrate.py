"""Left-point stochastic integrals, partition-of-unity integrals and pathwise integrals
against finite-variation dual paths."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .basis import PartitionOfUnity, PseudoBasis
from .core import CadlagPath, GridFunction, TimeGrid
from .drivers import DriverRealization
from .errors import DimensionError, InvalidInputError


class SimpleProcess:
    """Z(t) = sum_k xi_k(t) h_k with scalar paths xi_k sharing one grid."""

    def __init__(self, components: Sequence[tuple]):
        comps = list(components)
        if not comps:
            raise InvalidInputError("a simple process needs at least one component")
        grid = comps[0][0].grid
        xs, hs = [], []
        for xi, h in comps:
            if xi.grid != grid:
                raise DimensionError("component paths live on different grids")
            xs.append(xi.scalar())
            hs.append(h.values if isinstance(h, GridFunction) else np.asarray(h, dtype=float))
        self.grid = grid
        self.components = comps
        self.xi = np.stack(xs, axis=1)            # (nodes, m)
        self.h = np.stack(hs, axis=0)             # (m, cells)

    def __len__(self):
        return len(self.components)


def _left_sum(grid: TimeGrid, weights: np.ndarray, inc: np.ndarray) -> CadlagPath:
    """Path of sum_{i<j} sum_k weights[i, k] * inc[i, k]."""
    step = np.sum(weights[:-1] * inc, axis=1)
    return CadlagPath(grid, np.concatenate(([0.0], np.cumsum(step))))


def simple_integral(Z: SimpleProcess, Y: DriverRealization) -> CadlagPath:
    """Z_- . Y evaluated with the integrand frozen at the left end of each step."""
    if Z.grid != Y.grid:
        raise DimensionError("integrand and driver grids differ")
    return _left_sum(Y.grid, Z.xi, Y.increments_many(Z.h))


def pou_integral(X: CadlagPath, Y: DriverRealization, pou: PartitionOfUnity) -> CadlagPath:
    """sum_k int psi_k(X(s-)) dY(phi_k, s) for the partition's centers phi_k."""
    if X.grid != Y.grid:
        raise DimensionError("integrand and driver grids differ")
    psi = pou.evaluate(X.values)
    return _left_sum(Y.grid, psi, Y.increments_many(pou.centers))


class FiniteVariationPath(DriverRealization):
    """Dual path y*(t) = sum_k y_k(t) p_k from coefficient paths y_k.

    With a basis, index functions h act through p_k(h) = <h, phi_k>; without
    one, h is already a coefficient vector.  Being linear in h, the path can
    serve as a deterministic driver.
    """

    def __init__(self, coefficients: CadlagPath, basis: PseudoBasis | None = None):
        if basis is not None and coefficients.dim > len(basis):
            raise DimensionError("more coefficient paths than basis elements")
        self.coefficients = coefficients
        self.basis = basis
        self.grid = coefficients.grid
        self.n = 1

    @property
    def dim(self) -> int:
        return self.coefficients.dim

    def pairing(self, H) -> np.ndarray:
        """p_k(h) for rows h of H, shape (rows, dim)."""
        if self.basis is None:
            H = self._rows(H, self.dim)
            return H
        H = self._rows(H, self.basis.space.size)
        return self.basis.coefficients(H)[:, : self.dim]

    def increments_many(self, H) -> np.ndarray:
        dy = np.diff(self.coefficients.values, axis=0)
        return dy @ self.pairing(H).T


def total_variation(ystar: FiniteVariationPath, t: float | None = None) -> float:
    """Sum of coefficient-norm increments over grid steps up to t."""
    last = ystar.grid.steps if t is None else ystar.grid.node_index(t)
    dy = np.diff(ystar.coefficients.values[: last + 1], axis=0)
    return float(np.sum(np.sqrt(np.sum(dy * dy, axis=1))))


def fv_pathwise_integral(x: CadlagPath, ystar: FiniteVariationPath,
                         basis: PseudoBasis | None = None) -> CadlagPath:
    """Left Riemann-Stieltjes sums sum_i <x(t_i), y*(t_{i+1}) - y*(t_i)>.

    ``x`` holds cell values when a basis is available (argument or the dual
    path's own), coefficient vectors otherwise.
    """
    if x.grid != ystar.grid:
        raise DimensionError("path and dual path grids differ")
    basis = basis if basis is not None else ystar.basis
    if basis is None:
        if x.dim != ystar.dim:
            raise DimensionError("coefficient dimensions differ")
        p = x.values
    else:
        if x.dim != basis.space.size:
            raise DimensionError("path values must have one entry per cell")
        p = basis.coefficients(x.values)[:, : ystar.dim]
    return _left_sum(x.grid, p, np.diff(ystar.coefficients.values, axis=0))


def skeleton_nodes(g: CadlagPath, delta: float) -> np.ndarray:
    """Grid indices of the discrete stopping times tau_k (first node leaving the delta band)."""
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    v = g.values
    taus = [0]
    anchor = v[0]
    for j in range(1, v.shape[0]):
        if np.sqrt(np.sum((v[j] - anchor) ** 2)) > delta:
            taus.append(j)
            anchor = v[j]
    return np.array(taus, dtype=np.int64)


def delta_skeleton(g: CadlagPath, delta: float) -> CadlagPath:
    """Piecewise-constant path holding g(tau_k) on [tau_k, tau_{k+1})."""
    taus = skeleton_nodes(g, delta)
    seg = np.searchsorted(taus, np.arange(g.grid.steps + 1), side="right") - 1
    return CadlagPath(g.grid, g.values[taus[seg]], "step")


__all__ = [
    "SimpleProcess", "FiniteVariationPath", "simple_integral", "pou_integral",
    "fv_pathwise_integral", "total_variation", "delta_skeleton", "skeleton_nodes",
]

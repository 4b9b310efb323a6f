"""Orthonormal pseudo-bases, finite projections and Lipschitz partitions of unity."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import CadlagPath, DiscreteMeasureSpace, GridFunction, _values
from .errors import CoverageError, DimensionError, InvalidInputError


class PseudoBasis:
    """Orthonormal system (phi_k) in L2(mass) with coefficients p_k(x) = <x, phi_k>."""

    def __init__(self, space: DiscreteMeasureSpace, elements, check: bool = True):
        elements = np.array(elements, dtype=float, copy=True)
        if elements.ndim != 2 or elements.shape[1] != space.size:
            raise DimensionError("elements must have one row per basis vector, one column per cell")
        elements.setflags(write=False)
        self.space = space
        self.elements = elements
        if check:
            gram = self.gram()
            if not np.allclose(gram, np.eye(len(self)), atol=1e-10, rtol=0):
                raise InvalidInputError("elements are not orthonormal in L2(mass)")

    def __len__(self):
        return self.elements.shape[0]

    def __getitem__(self, k) -> GridFunction:
        return GridFunction(self.space, self.elements[k])

    def gram(self) -> np.ndarray:
        return (self.elements * self.space.masses) @ self.elements.T

    def coefficients(self, x) -> np.ndarray:
        """p_k(x) for every k; ``x`` may stack several functions along axis 0."""
        return (_values(x, self.space) * self.space.masses) @ self.elements.T

    def synthesize(self, coeffs) -> np.ndarray:
        """Cell values of sum_k c_k phi_k."""
        c = np.asarray(coeffs, dtype=float)
        return c @ self.elements[: c.shape[-1]]

    @classmethod
    def from_vectors(cls, space: DiscreteMeasureSpace, vectors) -> "PseudoBasis":
        """Weighted Gram-Schmidt of the given cell-value vectors (dependent ones dropped)."""
        w = space.masses
        out = []
        for v in np.atleast_2d(np.asarray(vectors, dtype=float)):
            r = v.copy()
            for _ in range(2):
                for e in out:
                    r -= np.sum(r * e * w) * e
            nrm = math.sqrt(max(np.sum(r * r * w), 0.0))
            if nrm > 1e-12 * max(1.0, math.sqrt(np.sum(v * v * w))):
                out.append(r / nrm)
        return cls(space, np.array(out).reshape(len(out), space.size))


def haar_basis(space: DiscreteMeasureSpace) -> PseudoBasis:
    """Haar-style basis by recursive halving of the positive-mass cells.

    First element is the normalized constant; then, coarse to fine, one
    mean-zero two-level element per split.  Zero-mass cells carry value 0.
    """
    masses = space.masses
    idx = np.flatnonzero(masses > 0)
    if idx.size == 0:
        raise InvalidInputError("space has no positive-mass cell")
    rows = []
    top = np.zeros(space.size)
    top[idx] = 1.0 / math.sqrt(masses[idx].sum())
    rows.append(top)
    queue = [idx]
    while queue:
        nxt = []
        for block in queue:
            if block.size < 2:
                continue
            half = block.size // 2
            left, right = block[:half], block[half:]
            ml, mr = masses[left].sum(), masses[right].sum()
            v = np.zeros(space.size)
            v[left] = math.sqrt(mr / (ml * (ml + mr)))
            v[right] = -math.sqrt(ml / (mr * (ml + mr)))
            rows.append(v)
            nxt.extend([left, right])
        queue = nxt
    return PseudoBasis(space, np.array(rows))


def project_SN(x, basis: PseudoBasis, N: int) -> GridFunction:
    """S_N(x) = sum_{k <= N} p_k(x) phi_k."""
    if not 1 <= N <= len(basis):
        raise InvalidInputError(f"N must lie in [1, {len(basis)}]")
    c = basis.coefficients(x)[:N]
    return GridFunction(basis.space, c @ basis.elements[:N])


class PartitionOfUnity:
    """Lipschitz partition of unity subordinate to eps-balls around centers.

    Distances are weighted Euclidean, d(x, y)^2 = sum w (x - y)^2, so with
    ``weights`` equal to cell masses the ambient space is L2(mass).  With
    bumps b_k = clamp(2 - 2 d(x, phi_k)/eps, 0, 1) and running maxima
    G_k = max_{j <= k} b_j, the members are psi_k = G_k - G_{k-1}.  Each
    psi_k lies in [0, 1], vanishes off B(phi_k, eps), is (4/eps)-Lipschitz,
    and the psi_k sum to one wherever some center is within eps/2.
    """

    def __init__(self, centers, epsilon: float, weights=None):
        centers = np.array(np.atleast_2d(centers), dtype=float, copy=True)
        if centers.ndim != 2 or centers.shape[0] == 0:
            raise InvalidInputError("need at least one center")
        if not epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        D = centers.shape[1]
        weights = np.ones(D) if weights is None else np.asarray(weights, dtype=float)
        if weights.shape != (D,) or np.any(weights < 0):
            raise DimensionError("weights must be nonnegative, one per coordinate")
        centers.setflags(write=False)
        self.centers = centers
        self.epsilon = float(epsilon)
        self.weights = weights

    def __len__(self):
        return self.centers.shape[0]

    @property
    def lipschitz(self) -> float:
        return 4.0 / self.epsilon

    def distance(self, x, y) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.sqrt(np.sum(d * d * self.weights, axis=-1))

    def center_distances(self, points) -> np.ndarray:
        """Exact distances from each point to each center, shape (points, centers)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[1] != self.centers.shape[1]:
            raise DimensionError("points and centers differ in dimension")
        out = np.empty((p.shape[0], len(self)))
        chunk = max(1, 2_000_000 // max(1, self.centers.size))
        for i in range(0, p.shape[0], chunk):
            diff = p[i:i + chunk, None, :] - self.centers[None, :, :]
            out[i:i + chunk] = np.sqrt(np.sum(diff * diff * self.weights, axis=2))
        return out

    def bumps(self, points) -> np.ndarray:
        d = self.center_distances(points)
        return np.clip(2.0 - 2.0 * d / self.epsilon, 0.0, 1.0)

    def covered(self, points) -> np.ndarray:
        return self.bumps(points).max(axis=1) >= 1.0

    def evaluate(self, points, check: bool = True) -> np.ndarray:
        """psi_k at each point, shape (points, centers)."""
        b = self.bumps(points)
        G = np.maximum.accumulate(b, axis=1)
        if check:
            bad = np.flatnonzero(G[:, -1] < 1.0)
            if bad.size:
                p = np.atleast_2d(points)[bad[0]]
                raise CoverageError(f"point {np.array2string(p, precision=4)} is farther than "
                                    f"eps/2 = {self.epsilon / 2:g} from every center")
        return np.diff(G, axis=1, prepend=0.0)

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)


def build_partition(centers, epsilon: float, weights=None, probes=None) -> PartitionOfUnity:
    """Partition of unity around ``centers``; optional probes are checked for coverage."""
    pou = PartitionOfUnity(centers, epsilon, weights)
    if probes is not None:
        pou.evaluate(probes, check=True)
    return pou


def lattice_centers(lower, upper, epsilon: float, weights=None) -> np.ndarray:
    """Rectangular lattice whose eps/2-balls cover the box [lower, upper]."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    D = lower.size
    w = np.ones(D) if weights is None else np.asarray(weights, dtype=float)
    # covering radius of a cubic lattice with spacing s (weighted coords) is s*sqrt(D)/2
    s = 0.999 * epsilon / math.sqrt(D)
    axes = []
    for lo, hi, wk in zip(lower, upper, w):
        step = s / math.sqrt(wk) if wk > 0 else max(hi - lo, 1.0)
        m = max(int(math.ceil((hi - lo) / step)), 0)
        axes.append(lo + step * np.arange(m + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def approximate_xeps(x: CadlagPath, pou: PartitionOfUnity) -> CadlagPath:
    """Node-wise x^eps(t) = sum_k psi_k(x(t)) phi_k."""
    if x.dim != pou.centers.shape[1]:
        raise DimensionError("path dimension differs from the partition's ambient space")
    psi = pou.evaluate(x.values)
    return x.with_values(psi @ pou.centers)


__all__ = [
    "PseudoBasis", "haar_basis", "project_SN", "PartitionOfUnity", "build_partition",
    "lattice_centers", "approximate_xeps",
]

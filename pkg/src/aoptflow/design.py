"""Design measures: weighted particle sets and products of particle ensembles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected positions of shape (n, dim), got {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class DesignMeasure:
    """Atomic measure ``sum_i w_i delta_{x_i}``; positions have shape ``(n, dim)``."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = _points(self.positions)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pos.shape[0]:
            raise ValueError("positions and weights differ in length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, positions, total_mass: float = 1.0) -> "DesignMeasure":
        pos = _points(positions)
        return cls(pos, np.full(len(pos), total_mass / len(pos)))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.positions.shape[0]

    def scaled(self, factor: float) -> "DesignMeasure":
        return DesignMeasure(self.positions, self.weights * factor)

    def normalized(self) -> "DesignMeasure":
        return self.scaled(1.0 / self.total_mass)

    def mixture(self, other: "DesignMeasure", t: float) -> "DesignMeasure":
        """``(1 - t) self + t other`` as one atomic measure."""
        return DesignMeasure(
            np.vstack([self.positions, other.positions]),
            np.concatenate([(1.0 - t) * self.weights, t * other.weights]),
        )


@dataclass(frozen=True, eq=False)
class EnsembleProduct:
    """``B`` ensembles of ``N`` particles; ``particles`` has shape ``(B, N, dim)``."""

    particles: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        if p.ndim == 2:
            p = p[..., None]
        if p.ndim != 3:
            raise ValueError(f"expected particles of shape (B, N, dim), got {p.shape}")
        object.__setattr__(self, "particles", p)

    @property
    def B(self) -> int:
        return self.particles.shape[0]

    @property
    def N(self) -> int:
        return self.particles.shape[1]

    @property
    def dim(self) -> int:
        return self.particles.shape[2]

    def flatten(self) -> DesignMeasure:
        return flatten(self)


def flatten(ens: EnsembleProduct) -> DesignMeasure:
    """Sum of the ensemble probability measures: ``N B`` atoms of weight ``1/N``."""
    return DesignMeasure(ens.particles.reshape(-1, ens.dim), np.full(ens.B * ens.N, 1.0 / ens.N))


def _check_index(ens, b):
    if not 0 <= b < ens.B:
        raise IndexError(f"ensemble index {b} out of range for B={ens.B}")


def ensemble_mean(ens: EnsembleProduct, b: int) -> np.ndarray:
    _check_index(ens, b)
    return ens.particles[b].mean(axis=0)


def ensemble_variance(ens: EnsembleProduct, b: int) -> float:
    """Mean squared deviation from the ensemble mean (population normalisation)."""
    _check_index(ens, b)
    p = ens.particles[b]
    return float(np.mean(np.sum((p - p.mean(axis=0)) ** 2, axis=1)))


def ensemble_variances(ens: EnsembleProduct) -> np.ndarray:
    p = ens.particles
    return np.mean(np.sum((p - p.mean(axis=1, keepdims=True)) ** 2, axis=2), axis=1)


def pairwise_mean_distances(ens: EnsembleProduct) -> np.ndarray:
    """``B x B`` matrix of squared Euclidean distances between ensemble means."""
    m = ens.particles.mean(axis=1)
    return np.sum((m[:, None, :] - m[None, :, :]) ** 2, axis=-1)


def histogram(measure: DesignMeasure, bins=50, lower=None, upper=None):
    """Weighted histogram of the atom positions.

    Returns ``(counts, edges)`` for 1-D measures and ``(counts, (xedges, yedges))``
    for 2-D ones; counts are atom weights summed per bin.
    """
    if np.ndim(bins) == 0 and bins < 1:
        raise ValueError("bins must be at least 1")
    lo = np.zeros(measure.dim) if lower is None else np.broadcast_to(lower, (measure.dim,))
    hi = np.ones(measure.dim) if upper is None else np.broadcast_to(upper, (measure.dim,))
    rng = list(zip(lo, hi))
    if measure.dim == 1:
        return np.histogram(measure.positions[:, 0], bins=bins, range=rng[0], weights=measure.weights)
    counts, xe, ye = np.histogram2d(
        measure.positions[:, 0], measure.positions[:, 1], bins=bins, range=rng, weights=measure.weights
    )
    return counts, (xe, ye)


def cluster_atoms(measure: DesignMeasure, radius: float = 1e-3):
    """Merge atoms by single linkage at distance ``radius``.

    Returns ``(centers, masses)`` sorted lexicographically by centre; centres
    are weight-averaged positions of each cluster.
    """
    pos, w = measure.positions, measure.weights
    if len(pos) == 1:
        labels = np.ones(1, dtype=int)
    else:
        labels = fcluster(linkage(pos, method="single"), t=radius, criterion="distance")
    ids = np.unique(labels)
    masses = np.array([w[labels == k].sum() for k in ids])
    centers = np.array([
        np.average(pos[labels == k], axis=0, weights=w[labels == k]) if masses[j] > 0 else pos[labels == k].mean(0)
        for j, k in enumerate(ids)
    ])
    order = np.lexsort(centers.T[::-1])
    return centers[order], masses[order]

"""
Ensemble regularisers: within-ensemble variance and between-ensemble repulsion.

``variance_value``  sum over ensembles of the empirical variance.
``repulsion_value`` sum over ordered pairs of distinct ensembles ``b != b'`` of
                    the mean kernel interaction ``(1/N^2) sum_{i,i'} q(x_ib, x_i'b')``.

Gradients are those of the first variations with respect to one particle,
with the base measure held fixed. For the variance this is ``2 (x - mean)``;
differentiating the empirical value directly gives ``(1 - 1/N)`` times that,
because the mean moves with the particle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import EnsembleProduct, ensemble_variances
from .errors import ConfigError
from .kernels import KernelFamily, KernelSpec, kernel_grad_matrix, kernel_matrix


@dataclass(frozen=True)
class RegularizerConfig:
    alpha: float = 0.0
    beta: float = 0.0
    sigma_q: float = 0.009

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative", "regularization.alpha")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative", "regularization.beta")
        if not self.sigma_q > 0:
            raise ConfigError("sigma_q must be positive", "regularization.sigma_q")

    @property
    def repulsion_kernel(self) -> KernelSpec:
        return KernelSpec(KernelFamily.GAUSSIAN_INTERACTION, self.sigma_q)


def variance_value(ens: EnsembleProduct) -> float:
    return float(ensemble_variances(ens).sum())


def variance_gradients(ens: EnsembleProduct) -> np.ndarray:
    p = ens.particles
    return 2.0 * (p - p.mean(axis=1, keepdims=True))


def variance_gradient(ens: EnsembleProduct, i: int, b: int) -> np.ndarray:
    _check(ens, i, b)
    return 2.0 * (ens.particles[b, i] - ens.particles[b].mean(axis=0))


def _cross_mask(ens):
    labels = np.repeat(np.arange(ens.B), ens.N)
    return labels[:, None] != labels[None, :]


def repulsion_value(ens: EnsembleProduct, sigma_q: float) -> float:
    if ens.B < 2:
        return 0.0
    kern = KernelSpec(KernelFamily.GAUSSIAN_INTERACTION, sigma_q)
    X = ens.particles.reshape(-1, ens.dim)
    Q = kernel_matrix(kern, X, X)
    return float(Q[_cross_mask(ens)].sum() / ens.N**2)


def repulsion_gradients(ens: EnsembleProduct, sigma_q: float) -> np.ndarray:
    """``2 sum_{b' != b} (1/N) sum_i' grad_x q(x_ib, x_i'b')`` for every particle, shape ``(B, N, dim)``."""
    if ens.B < 2:
        return np.zeros_like(ens.particles)
    kern = KernelSpec(KernelFamily.GAUSSIAN_INTERACTION, sigma_q)
    X = ens.particles.reshape(-1, ens.dim)
    dQ = kernel_grad_matrix(kern, X, X) * _cross_mask(ens)[..., None]
    return (2.0 / ens.N * dQ.sum(axis=1)).reshape(ens.particles.shape)


def repulsion_gradient(ens: EnsembleProduct, i: int, b: int, sigma_q: float) -> np.ndarray:
    _check(ens, i, b)
    kern = KernelSpec(KernelFamily.GAUSSIAN_INTERACTION, sigma_q)
    others = np.concatenate([ens.particles[c] for c in range(ens.B) if c != b]) if ens.B > 1 else None
    if others is None:
        return np.zeros(ens.dim)
    return 2.0 / ens.N * kernel_grad_matrix(kern, ens.particles[b, i][None, :], others)[0].sum(axis=0)


def _check(ens, i, b):
    if not (0 <= b < ens.B and 0 <= i < ens.N):
        raise IndexError(f"particle ({i}, {b}) out of range for B={ens.B}, N={ens.N}")

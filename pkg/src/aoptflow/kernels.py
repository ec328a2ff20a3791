"""
Scalar covariance and interaction kernels with analytic spatial gradients.

Four closed families are supported:

``squared_exponential``
    ``exp(-|x-z|^2 / (2 s^2))``
``nonstationary_product``
    ``(1 + a|x-c|^2)(1 + a|z-c|^2) exp(-|x-z|^2 / (2 s^2))`` with amplitude
    ``a`` (default 50) and centre ``c`` (default 1/2 in every coordinate)
``gaussian_interaction``
    same formula as ``squared_exponential``; kept as a separate family
    because it plays the role of the repulsion kernel, not a prior
``torus_cosine``
    ``cos(2 pi (x - z))`` on the one-dimensional unit torus

Points are scalars or 1-D arrays. The ``*_matrix`` helpers evaluate on
stacks of points of shape ``(n, dim)`` and are what the rest of the package
uses; the pointwise functions are thin wrappers around them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class KernelFamily(str, Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    NONSTATIONARY_PRODUCT = "nonstationary_product"
    GAUSSIAN_INTERACTION = "gaussian_interaction"
    TORUS_COSINE = "torus_cosine"


@dataclass(frozen=True)
class KernelSpec:
    """Immutable kernel description.

    Parameters
    ----------
    family : KernelFamily or str
    lengthscale : float
        Standard deviation of the Gaussian factor (ignored by
        ``torus_cosine``). Must be positive.
    amplitude : float
        Prefactor slope of ``nonstationary_product``.
    center : float
        Prefactor centre of ``nonstationary_product``.
    """

    family: KernelFamily
    lengthscale: float = 1.0
    amplitude: float = 50.0
    center: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")

    @property
    def is_covariance(self) -> bool:
        return self.family is not KernelFamily.GAUSSIAN_INTERACTION


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim == 2:
        return x
    raise ValueError(f"expected points of shape (n, dim), got {x.shape}")


def _as_point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def kernel_matrix(spec: KernelSpec, X, Z) -> np.ndarray:
    """Gram block ``k(X_i, Z_j)`` for point stacks ``X (n, d)``, ``Z (m, d)``."""
    X, Z = _as_points(X), _as_points(Z)
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if spec.family is KernelFamily.TORUS_COSINE:
        if X.shape[1] != 1:
            raise ValueError("torus_cosine is defined on the 1-D torus only")
        diff = np.mod(X[:, 0][:, None] - Z[:, 0][None, :], 1.0)
        return np.cos(2.0 * np.pi * diff)
    sq = np.sum((X[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    K = np.exp(-sq / (2.0 * spec.lengthscale**2))
    if spec.family is KernelFamily.NONSTATIONARY_PRODUCT:
        K *= _prefactor(spec, X)[:, None] * _prefactor(spec, Z)[None, :]
    return K


def kernel_grad_matrix(spec: KernelSpec, X, Z) -> np.ndarray:
    """Gradients ``grad_x k(X_i, Z_j)`` with shape ``(n, m, d)``."""
    X, Z = _as_points(X), _as_points(Z)
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if spec.family is KernelFamily.TORUS_COSINE:
        if X.shape[1] != 1:
            raise ValueError("torus_cosine is defined on the 1-D torus only")
        diff = X[:, 0][:, None] - Z[:, 0][None, :]
        return (-2.0 * np.pi * np.sin(2.0 * np.pi * diff))[..., None]
    D = X[:, None, :] - Z[None, :, :]
    s2 = spec.lengthscale**2
    E = np.exp(-np.sum(D**2, axis=-1) / (2.0 * s2))
    G = -D / s2 * E[..., None]
    if spec.family is KernelFamily.NONSTATIONARY_PRODUCT:
        px, pz = _prefactor(spec, X), _prefactor(spec, Z)
        dpx = 2.0 * spec.amplitude * (X - spec.center)
        G = (G * px[:, None, None] + dpx[:, None, :] * E[..., None]) * pz[None, :, None]
    return G


def _prefactor(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    return 1.0 + spec.amplitude * np.sum((X - spec.center) ** 2, axis=1)


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """k(x, z) for a single pair of points."""
    x, z = _as_point(x), _as_point(z)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    return float(kernel_matrix(spec, x[None, :], z[None, :])[0, 0])


def kernel_grad_x(spec: KernelSpec, x, z) -> np.ndarray:
    """Gradient of k(., z) at x."""
    x, z = _as_point(x), _as_point(z)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    return kernel_grad_matrix(spec, x[None, :], z[None, :])[0, 0]

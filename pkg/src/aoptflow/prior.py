"""Gaussian prior on the parameter grid and its symmetric square root."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .kernels import KernelSpec, kernel_matrix


@dataclass(frozen=True, eq=False)
class PriorModel:
    cov: np.ndarray
    sqrt_cov: np.ndarray
    eigen_floor: float = 0.0

    @classmethod
    def from_covariance(cls, cov, eigen_floor: float = 0.0) -> "PriorModel":
        """Symmetric square root by eigendecomposition, eigenvalues clipped at ``eigen_floor``.

        Grid Gram matrices of short-lengthscale kernels are numerically rank
        deficient, so a Cholesky factor is not an option here.
        """
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got {cov.shape}")
        if eigen_floor < 0:
            raise ConfigError("eigen_floor must be nonnegative", "prior.eigen_floor")
        cov = 0.5 * (cov + cov.T)
        try:
            lam, Q = np.linalg.eigh(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigendecomposition of the prior covariance failed: {exc}") from exc
        lam = np.maximum(lam, eigen_floor)
        root = (Q * np.sqrt(lam)) @ Q.T
        return cls(cov, 0.5 * (root + root.T), eigen_floor)

    @property
    def size(self) -> int:
        return self.cov.shape[0]


def assemble_prior(kernel: KernelSpec, grid, eigen_floor: float = 0.0) -> PriorModel:
    if not kernel.is_covariance:
        raise ConfigError(f"{kernel.family.value} is not a covariance family", "prior.kernel.family")
    return PriorModel.from_covariance(kernel_matrix(kernel, grid.points, grid.points), eigen_floor)


def torus_prior(sigma_prior: float) -> PriorModel:
    """Isotropic prior ``sigma^2 I_2`` on the torus model coefficients."""
    return PriorModel.from_covariance(sigma_prior**2 * np.eye(2))

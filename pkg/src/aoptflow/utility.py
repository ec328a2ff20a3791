"""
A-optimal expected utility of relaxed designs and its first variation.

Notation (all finite dimensional):

* ``g(x) = C^{1/2} a(x)`` is the preconditioned feature, ``a(x)`` the whitened
  observation functional supplied by the observation map;
* for a design measure ``nu = sum_i w_i delta_{x_i}``,
  ``K_nu = sum_i w_i g(x_i) g(x_i)^T + I``;
* ``T = C^{1/2} W C^{1/2}`` with ``W`` the diagonal of quadrature weights of
  the parameter grid, so that ``Tr[K^{-1} T] = Tr[W C_post]`` is the L2 trace
  of the posterior covariance ``C_post = C^{1/2} K^{-1} C^{1/2}``.

Then ``U(nu) = -Tr[K_nu^{-1} T]`` for measures of mass ``B`` and
``V(mu) = U(B mu)`` for probability measures. The first variation of
``V`` is ``phi(x) = B g^T K^{-1} T K^{-1} g`` and its spatial gradient is
``2 B (T K^{-1} g)^T K^{-1} dg``, with ``K = K_{B mu}``.
"""
from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .design import DesignMeasure, EnsembleProduct, flatten
from .errors import NumericError


class SolverMode(str, Enum):
    AUTO = "auto"
    DENSE = "dense_cholesky"
    WOODBURY = "woodbury_lowrank"


def _cholesky(A, what):
    if not np.all(np.isfinite(A)):
        raise NumericError(f"non-finite entries while factorising {what}")
    try:
        return cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky factorisation of {what} failed: {exc}") from exc


class ResolventState:
    """Factorisation of ``K = G G^T + I`` for a frozen design.

    ``G`` is ``M x n`` with columns ``sqrt(w_i) g(x_i)``. The dense path
    factorises ``K`` itself; the Woodbury path factorises the ``n x n``
    capacitance matrix ``I + G^T G`` and applies
    ``K^{-1} = I - G (I + G^T G)^{-1} G^T``.
    """

    def __init__(self, G: np.ndarray, mode: SolverMode):
        self.G = G
        self.mode = SolverMode(mode)
        M, n = G.shape
        if self.mode is SolverMode.DENSE:
            self._factor = _cholesky(G @ G.T + np.eye(M), "the resolvent operator")
        else:
            self._factor = _cholesky(G.T @ G + np.eye(n), "the Woodbury capacitance matrix")

    @property
    def size(self) -> int:
        return self.G.shape[0]

    def solve(self, V: np.ndarray) -> np.ndarray:
        """Apply ``K^{-1}`` to a vector or to the columns of a matrix."""
        if self.mode is SolverMode.DENSE:
            return cho_solve(self._factor, V, check_finite=False)
        return V - self.G @ cho_solve(self._factor, self.G.T @ V, check_finite=False)

    def apply(self, V: np.ndarray) -> np.ndarray:
        """Apply ``K`` itself."""
        return self.G @ (self.G.T @ V) + V

    def trace_against(self, T: np.ndarray) -> float:
        """``Tr[K^{-1} T]`` for symmetric ``T``."""
        if self.mode is SolverMode.DENSE:
            return float(np.trace(cho_solve(self._factor, T, check_finite=False)))
        GT = self.G.T @ T
        inner = cho_solve(self._factor, GT @ self.G, check_finite=False)
        return float(np.trace(T) - np.trace(inner))


class UtilityEngine:
    """Evaluates the A-optimal utility and its first variation for one forward model.

    Parameters
    ----------
    obs_map : ObservationMap
    prior : PriorModel
    batch_size : float
        The design mass ``B``.
    solver_mode : {"auto", "dense_cholesky", "woodbury_lowrank"}
        ``auto`` switches to the Woodbury path when the number of atoms is
        below a quarter of the parameter dimension.
    """

    def __init__(self, obs_map, prior, batch_size: float = 1.0, solver_mode="auto"):
        if prior.size != obs_map.size:
            raise ValueError(f"prior size {prior.size} does not match model size {obs_map.size}")
        if not batch_size > 0:
            raise ValueError("batch size must be positive")
        self.map = obs_map
        self.prior = prior
        self.B = float(batch_size)
        self.solver_mode = SolverMode(solver_mode)
        R = np.sqrt(obs_map.trace_weights)[:, None] * prior.sqrt_cov
        self.trace_op = R.T @ R
        self.prior_trace = float(np.trace(self.trace_op))

    # -- features ---------------------------------------------------------

    def preconditioned_features(self, X) -> np.ndarray:
        """Rows ``g(x_p) = C^{1/2} a(x_p)``, shape ``(n, M)``."""
        return self.map.features(X) @ self.prior.sqrt_cov

    def preconditioned_jacobians(self, X) -> np.ndarray:
        """``dg/dx`` with shape ``(n, M, dim)``."""
        J = self.map.jacobians(X)
        n, M, dim = J.shape
        out = self.prior.sqrt_cov @ J.transpose(1, 0, 2).reshape(M, n * dim)
        return out.reshape(M, n, dim).transpose(1, 0, 2)

    def preconditioned_feature(self, x) -> np.ndarray:
        return self.prior.sqrt_cov @ self.map.feature(x)

    def preconditioned_feature_jacobian(self, x) -> np.ndarray:
        return self.prior.sqrt_cov @ self.map.feature_jacobian(x)

    # -- resolvent --------------------------------------------------------

    def _mode_for(self, n_atoms: int) -> SolverMode:
        if self.solver_mode is not SolverMode.AUTO:
            return self.solver_mode
        return SolverMode.WOODBURY if n_atoms < self.map.size / 4 else SolverMode.DENSE

    def resolvent_from_features(self, g_rows: np.ndarray, weights: np.ndarray) -> ResolventState:
        G = (g_rows * np.sqrt(weights)[:, None]).T
        return ResolventState(G, self._mode_for(G.shape[1]))

    def assemble_resolvent(self, measure: DesignMeasure) -> ResolventState:
        """Factorise ``sum_i w_i g(x_i) g(x_i)^T + I`` for the measure as given."""
        return self.resolvent_from_features(self.preconditioned_features(measure.positions), measure.weights)

    # -- utility ----------------------------------------------------------

    def expected_utility(self, measure: DesignMeasure, state: ResolventState | None = None) -> float:
        """``U(nu) = -Tr[W C_post(nu)]``; the measure's own mass is used."""
        state = state or self.assemble_resolvent(measure)
        return -state.trace_against(self.trace_op)

    def value(self, prob_measure: DesignMeasure) -> float:
        """``V(mu) = U(B mu)`` for a probability measure."""
        return self.expected_utility(prob_measure.scaled(self.B))

    def tensor_value(self, ens: EnsembleProduct) -> float:
        """Utility of an ensemble product, ``U`` of the summed ensembles."""
        return self.expected_utility(flatten(ens))

    def posterior_covariance(self, measure: DesignMeasure) -> np.ndarray:
        state = self.assemble_resolvent(measure)
        S = self.prior.sqrt_cov
        C = S @ state.solve(S)
        return 0.5 * (C + C.T)

    def posterior_trace(self, measure: DesignMeasure) -> float:
        """``Tr[W C_post]``; equals ``-expected_utility(measure)``."""
        C = self.posterior_covariance(measure)
        return float(np.sum(self.map.trace_weights * np.diag(C)))

    # -- first variation --------------------------------------------------

    def state_for(self, prob_measure: DesignMeasure) -> ResolventState:
        """Resolvent of ``B S_mu + I`` for a probability measure ``mu``."""
        return self.assemble_resolvent(prob_measure.scaled(self.B))

    def first_variation_field(self, state: ResolventState, X, gradient: bool = True):
        """First variation (and optionally its gradient) at the points ``X``.

        Returns ``phi`` of shape ``(n,)`` and, if requested, ``grad`` of shape
        ``(n, dim)``.
        """
        g = self.preconditioned_features(X)
        J = self.preconditioned_jacobians(X) if gradient else None
        return self.field_from_features(state, g, J)

    def field_from_features(self, state: ResolventState, g: np.ndarray, J: np.ndarray | None = None):
        """As :meth:`first_variation_field`, from precomputed ``g`` rows and Jacobians."""
        Kg = state.solve(g.T)
        TKg = self.trace_op @ Kg
        phi = self.B * np.einsum("mp,mp->p", Kg, TKg)
        if J is None:
            return phi
        n, M, dim = J.shape
        KJ = state.solve(J.transpose(1, 0, 2).reshape(M, n * dim)).reshape(M, n, dim)
        grad = 2.0 * self.B * np.einsum("mp,mpd->pd", TKg, KJ)
        return phi, grad

    def first_variation(self, prob_measure: DesignMeasure, x, state: ResolventState | None = None) -> float:
        state = state or self.state_for(prob_measure)
        return float(self.first_variation_field(state, self._point(x), gradient=False)[0])

    def first_variation_gradient(self, prob_measure: DesignMeasure, x, state: ResolventState | None = None):
        state = state or self.state_for(prob_measure)
        return self.first_variation_field(state, self._point(x))[1][0]

    def tensor_utility_gradient(self, ens: EnsembleProduct, i: int, b: int, state: ResolventState | None = None):
        """Ascent direction of the ensemble-product utility for particle ``i`` of ensemble ``b``."""
        if not (0 <= b < ens.B and 0 <= i < ens.N):
            raise IndexError(f"particle ({i}, {b}) out of range for B={ens.B}, N={ens.N}")
        if ens.B != self.B:
            raise ValueError(f"ensemble count {ens.B} differs from the engine batch size {self.B:g}")
        state = state or self.assemble_resolvent(flatten(ens))
        return self.first_variation_field(state, ens.particles[b, i][None, :])[1][0]

    def _point(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return x[None, :]

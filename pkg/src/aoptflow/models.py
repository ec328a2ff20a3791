"""
Observation maps for the linear forward problems.

Every map turns a measurement location ``x`` into the whitened discrete
feature ``A* k_x / noise_std`` in parameter space (length ``M``) together
with its spatial Jacobian. Parameter space is R^M with the Euclidean inner
product; quadrature weights are already folded into the features, so that
``features(x) @ f`` is the noise-normalised observation of the nodal
source ``f`` at ``x``.

The utility engine additionally needs the quadrature weights of the
parameter grid (``trace_weights``) to measure posterior uncertainty in
L2 rather than as a plain sum over nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import erf

from .errors import ConfigError, ModelError

_DOMAIN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Nodes and quadrature weights of the discretised parameter ``f``.

    ``points`` has shape ``(M, dim)``. ``shape`` records the tensor layout
    of 2-D grids (node ``k`` sits at index ``(k // n1, k % n1)``).
    """

    points: np.ndarray
    weights: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    shape: tuple = ()

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


def interval_grid(num_points: int, lower: float = 0.0, upper: float = 1.0) -> ParameterGrid:
    """Equidistant nodes including both endpoints, trapezoidal weights."""
    if num_points < 2:
        raise ConfigError("need at least two grid points", "model.grid_points")
    z = np.linspace(lower, upper, num_points)
    h = (upper - lower) / (num_points - 1)
    w = np.full(num_points, h)
    w[0] = w[-1] = 0.5 * h
    return ParameterGrid(z[:, None], w, np.array([lower]), np.array([upper]), (num_points,))


def square_grid(n: int) -> ParameterGrid:
    """Cell-centred ``n x n`` grid on the unit square, midpoint weights ``1/n^2``."""
    if n < 3:
        raise ConfigError("need at least three cells per side", "model.grid_points")
    t = (np.arange(n) + 0.5) / n
    X0, X1 = np.meshgrid(t, t, indexing="ij")
    pts = np.column_stack([X0.ravel(), X1.ravel()])
    w = np.full(n * n, 1.0 / n**2)
    return ParameterGrid(pts, w, np.zeros(2), np.ones(2), (n, n))


class ObservationMap:
    """Base class: domain handling and single-point convenience wrappers.

    Subclasses implement ``features`` and ``jacobians`` on point stacks.
    """

    kind = "abstract"
    periodic = False

    def __init__(self, grid, noise_std, lower, upper):
        if not noise_std > 0:
            raise ConfigError(f"noise_std must be positive, got {noise_std}", "model.noise_std")
        self.grid = grid
        self.noise_std = float(noise_std)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def trace_weights(self) -> np.ndarray:
        return self.grid.weights

    def as_points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        elif X.ndim == 1:
            X = X[:, None] if self.dim == 1 else X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {X.shape}")
        if not self.periodic:
            bad = np.any((X < self.lower - _DOMAIN_TOL) | (X > self.upper + _DOMAIN_TOL), axis=1)
            if np.any(bad):
                raise ValueError(f"point {X[np.argmax(bad)]} lies outside the domain")
            X = np.clip(X, self.lower, self.upper)
        return X

    def features(self, X) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, X) -> np.ndarray:
        raise NotImplementedError

    def feature(self, x) -> np.ndarray:
        return self.features(self._single(x))[0]

    def feature_jacobian(self, x) -> np.ndarray:
        return self.jacobians(self._single(x))[0]

    def _single(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        return x[None, :]


def green_1d(x, z):
    """Dirichlet Green's function of ``-u'' = f`` on [0, 1]."""
    x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
    return np.where(x <= z, x * (1.0 - z), z * (1.0 - x))


def _r3(t):
    return np.maximum(t, 0.0) ** 3 / 6.0


def _r2(t):
    return np.maximum(t, 0.0) ** 2 / 2.0


class PoissonMap(ObservationMap):
    """Point observations of ``u`` solving ``-u'' = f`` with ``u(0) = u(1) = 0``.

    Two discretisations of the source are offered.

    ``"galerkin"`` (default)
        ``f`` is the piecewise-linear interpolant of its nodal values, and the
        feature is the exact solution for each hat function,
        ``int G(x, z) hat_m(z) dz``. The result is C^2 in ``x``.
    ``"lumped"``
        Nodal quadrature ``w_m G(x, z_m)``. Piecewise linear in ``x`` with
        kinks at the nodes; the Jacobian takes the left limit there.
    """

    kind = "poisson1d"

    def __init__(self, grid: ParameterGrid, noise_std: float, quadrature: str = "galerkin"):
        if grid.dim != 1 or grid.lower[0] != 0.0 or grid.upper[0] != 1.0:
            raise ConfigError("Poisson map needs a 1-D grid on [0, 1]", "model.grid_points")
        if quadrature not in ("galerkin", "lumped"):
            raise ConfigError(f"unknown quadrature {quadrature!r}", "model.quadrature")
        super().__init__(grid, noise_std, grid.lower, grid.upper)
        self.quadrature = quadrature
        self._z = grid.points[:, 0]
        if quadrature == "galerkin":
            h = np.diff(self._z)
            if not np.allclose(h, h[0], rtol=1e-10):
                raise ConfigError("galerkin quadrature needs an equidistant grid", "model.quadrature")
            self._h = h[0]
            zp = np.concatenate([[self._z[0] - self._h], self._z, [self._z[-1] + self._h]])
            self._knots = (zp[:-2], zp[1:-1], zp[2:])
            self._p0 = self._hat_primitive(np.zeros(1))[0]
            self._p1 = self._hat_primitive(np.ones(1))[0]

    def _hat_primitive(self, x, order=0):
        # Second antiderivative (order 0) or first antiderivative (order 1) of each hat.
        r = _r3 if order == 0 else _r2
        a, b, c = self._knots
        x = x[:, None]
        return (r(x - a) - 2.0 * r(x - b) + r(x - c)) / self._h

    def features(self, X) -> np.ndarray:
        x = self.as_points(X)[:, 0]
        if self.quadrature == "lumped":
            F = self.grid.weights * green_1d(x[:, None], self._z[None, :])
        else:
            F = -self._hat_primitive(x) + self._p0 + x[:, None] * (self._p1 - self._p0)
        return F / self.noise_std

    def jacobians(self, X) -> np.ndarray:
        x = self.as_points(X)[:, 0]
        if self.quadrature == "lumped":
            dG = np.where(x[:, None] <= self._z[None, :], 1.0 - self._z, -self._z)
            J = self.grid.weights * dG
        else:
            J = -self._hat_primitive(x, order=1) + (self._p1 - self._p0)
        return (J / self.noise_std)[..., None]


def poisson_observation_map(grid: ParameterGrid, noise_std: float, quadrature: str = "galerkin") -> PoissonMap:
    return PoissonMap(grid, noise_std, quadrature)


@dataclass(frozen=True)
class PotentialParams:
    """Gaussian-mollified box potential centred in the unit square."""

    magnitude: float = 200.0
    halfwidth: float = 0.08
    mollifier_eps: float = 0.02

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if self.magnitude == 0.0:
            return np.zeros(len(points))
        if not self.mollifier_eps > 0:
            raise ConfigError("mollifier_eps must be positive", "model.potential.mollifier_eps")
        s = np.sqrt(2.0) * self.mollifier_eps
        d = points - 0.5
        # Convolution of the 1-D indicator of [-hw, hw] with a Gaussian of std eps.
        factors = 0.5 * (erf((self.halfwidth - d) / s) + erf((self.halfwidth + d) / s))
        return self.magnitude * np.prod(factors, axis=1)


def _catmull_rom(t):
    t2, t3 = t * t, t * t * t
    w = np.stack([(-t3 + 2 * t2 - t), (3 * t3 - 5 * t2 + 2), (-3 * t3 + 4 * t2 + t), (t3 - t2)], axis=-1)
    dw = np.stack([(-3 * t2 + 4 * t - 1), (9 * t2 - 10 * t), (-9 * t2 + 8 * t + 1), (3 * t2 - 2 * t)], axis=-1)
    return 0.5 * w, 0.5 * dw


class SchrodingerMap(ObservationMap):
    """Point observations of ``u`` solving ``(-Lap + V - omega^2) u = f``.

    Five-point finite differences on a cell-centred grid; the Dirichlet
    wall sits half a cell outside the outermost nodes and is imposed with
    an odd ghost value. Point values between nodes use tensor-product
    Catmull-Rom interpolation of the odd extension of the nodal solution,
    which is C^1 up to the boundary and vanishes on it.

    ``features(x) = L^{-1} iota(x) / noise_std`` where ``iota(x)`` holds the
    interpolation weights; columns of ``L^{-1}`` are produced on demand from
    a single sparse LU factorisation and cached.
    """

    kind = "schrodinger2d"

    def __init__(self, grid: ParameterGrid, omega: float, potential: PotentialParams, noise_std: float):
        if grid.dim != 2 or len(grid.shape) != 2 or grid.shape[0] != grid.shape[1]:
            raise ConfigError("Schrodinger map needs a square 2-D grid", "model.grid_points")
        if omega**2 >= 2.0 * np.pi**2:
            raise ConfigError(
                f"well-posedness bound violated: omega^2 = {omega**2:.4g} >= 2 pi^2", "model.omega"
            )
        super().__init__(grid, noise_std, grid.lower, grid.upper)
        self.omega = float(omega)
        self.potential = potential
        self.n = grid.shape[0]
        self.h = 1.0 / self.n
        self.V = potential.evaluate(grid.points)
        self.operator = self._assemble()
        try:
            self._lu = splu(self.operator.tocsc())
        except RuntimeError as exc:
            raise ModelError(f"finite-difference operator is singular: {exc}") from exc
        self._columns: dict[int, np.ndarray] = {}

    def _assemble(self):
        n, h = self.n, self.h
        main = np.full(n, 2.0)
        main[0] = main[-1] = 3.0
        T = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / h**2
        I = sp.identity(n)
        L = sp.kron(T, I) + sp.kron(I, T) + sp.diags(self.V - self.omega**2)
        return L.tocsr()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``L^{-1}`` to nodal vectors (columns of ``rhs``)."""
        out = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(out)):
            raise ModelError("non-finite solution of the finite-difference system")
        return out

    def _green_columns(self, nodes: np.ndarray) -> np.ndarray:
        missing = [k for k in np.unique(nodes) if k not in self._columns]
        if missing:
            rhs = np.zeros((self.size, len(missing)))
            rhs[missing, np.arange(len(missing))] = 1.0
            sol = self.solve(rhs)
            for j, k in enumerate(missing):
                self._columns[k] = sol[:, j]
        return np.stack([self._columns[k] for k in nodes.ravel()], axis=0).reshape(*nodes.shape, self.size)

    def _axis_stencil(self, x):
        n = self.n
        s = x / self.h - 0.5
        i0 = np.clip(np.floor(s), -1, n - 1).astype(int)
        t = s - i0
        w, dw = _catmull_rom(t)
        j = i0[:, None] + np.arange(-1, 3)[None, :]
        sign = np.where((j < 0) | (j >= n), -1.0, 1.0)
        node = np.where(j < 0, -1 - j, np.where(j >= n, 2 * n - 1 - j, j))
        return node, w * sign, dw * sign / self.h

    def _stencil(self, X):
        n0, w0, d0 = self._axis_stencil(X[:, 0])
        n1, w1, d1 = self._axis_stencil(X[:, 1])
        nodes = (n0[:, :, None] * self.n + n1[:, None, :]).reshape(len(X), 16)
        W = (w0[:, :, None] * w1[:, None, :]).reshape(len(X), 16)
        Wx = (d0[:, :, None] * w1[:, None, :]).reshape(len(X), 16)
        Wy = (w0[:, :, None] * d1[:, None, :]).reshape(len(X), 16)
        return nodes, W, Wx, Wy

    def features(self, X) -> np.ndarray:
        X = self.as_points(X)
        nodes, W, _, _ = self._stencil(X)
        cols = self._green_columns(nodes)
        return np.einsum("pk,pkm->pm", W, cols) / self.noise_std

    def jacobians(self, X) -> np.ndarray:
        X = self.as_points(X)
        nodes, _, Wx, Wy = self._stencil(X)
        cols = self._green_columns(nodes)
        J = np.stack([np.einsum("pk,pkm->pm", Wx, cols), np.einsum("pk,pkm->pm", Wy, cols)], axis=-1)
        return J / self.noise_std

    def swap_permutation(self) -> np.ndarray:
        """Node permutation exchanging the two coordinates."""
        idx = np.arange(self.size).reshape(self.n, self.n)
        return idx.T.ravel()


def schrodinger_observation_map(
    grid: ParameterGrid, omega: float = 1.0, potential_params: PotentialParams | None = None, noise_std: float = 0.1
) -> SchrodingerMap:
    return SchrodingerMap(grid, omega, potential_params or PotentialParams(), noise_std)


class TorusMap(ObservationMap):
    """Toy model on the unit torus: ``f(x) = theta . (cos 2 pi x, sin 2 pi x)``.

    The parameter is ``theta`` in R^2, observed with unit noise; there is no
    spatial grid and the trace weights are all one.
    """

    kind = "torus"
    periodic = True

    def __init__(self, sigma_prior: float):
        if not sigma_prior > 0:
            raise ConfigError("sigma_prior must be positive", "model.sigma_prior")
        grid = ParameterGrid(np.zeros((2, 1)), np.ones(2), np.zeros(1), np.ones(1))
        super().__init__(grid, 1.0, [0.0], [1.0])
        self.sigma_prior = float(sigma_prior)

    def features(self, X) -> np.ndarray:
        a = 2.0 * np.pi * self.as_points(X)[:, 0]
        return np.column_stack([np.cos(a), np.sin(a)])

    def jacobians(self, X) -> np.ndarray:
        a = 2.0 * np.pi * self.as_points(X)[:, 0]
        return (2.0 * np.pi * np.column_stack([-np.sin(a), np.cos(a)]))[..., None]


def torus_observation_map(sigma_prior: float) -> TorusMap:
    return TorusMap(sigma_prior)


class FunctionMap(ObservationMap):
    """Features given by explicit callables on the unit box; for small test models."""

    kind = "function"

    def __init__(self, feature_fn, size, jacobian_fn=None, dim=1, weights=None):
        w = np.ones(size) if weights is None else np.asarray(weights, dtype=float)
        grid = ParameterGrid(np.zeros((size, 1)), w, np.zeros(dim), np.ones(dim))
        super().__init__(grid, 1.0, np.zeros(dim), np.ones(dim))
        self.feature_fn = feature_fn
        self.jacobian_fn = jacobian_fn

    def features(self, X) -> np.ndarray:
        X = self.as_points(X)
        return np.array([np.atleast_1d(self.feature_fn(x)) for x in X], dtype=float).reshape(len(X), self.size)

    def jacobians(self, X) -> np.ndarray:
        X = self.as_points(X)
        if self.jacobian_fn is None:
            return np.zeros((len(X), self.size, self.dim))
        return np.array([self.jacobian_fn(x) for x in X], dtype=float).reshape(len(X), self.size, self.dim)


def constant_map(values, dim: int = 1) -> FunctionMap:
    """Spatially constant feature ``g(x) = values`` (zero Jacobian)."""
    v = np.atleast_1d(np.asarray(values, dtype=float))
    return FunctionMap(lambda x: v, v.size, dim=dim)

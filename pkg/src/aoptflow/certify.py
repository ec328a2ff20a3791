"""
Runtime checks of the optimality theory.

* :func:`optimality_certificate` tests the first-order condition for a
  maximiser of ``V``: the first variation stays below its mean
  ``c = int phi dmu`` everywhere and equals it on the support.
* :func:`concavity_probe` samples the concavity inequality along segments
  between random measures.
* :func:`monotonicity_audit` inspects a flow record for utility decreases.
* :func:`torus_oracle` is the closed-form optimum of the torus toy model.
* :func:`gradient_check` runs the finite-difference validation suites.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .design import DesignMeasure, cluster_atoms

CERTIFIED = "certified"
VIOLATED = "violated"


@dataclass
class OptimalityReport:
    c: float
    max_violation: float
    support_residual: float
    grad_sup_on_support: float
    verdict: str
    tol: float
    support: np.ndarray = None
    support_mass: np.ndarray = None
    audit_points: np.ndarray = None
    audit_phi: np.ndarray = None

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict:
        keys = ("c", "max_violation", "support_residual", "grad_sup_on_support", "verdict", "tol")
        out = {k: v for k, v in asdict(self).items() if k in keys}
        out["support"] = self.support.tolist()
        out["support_mass"] = self.support_mass.tolist()
        return out


def default_audit_grid(obs_map, points_1d: int = 2000, points_2d: int = 200) -> np.ndarray:
    lo, hi = obs_map.lower, obs_map.upper
    if obs_map.dim == 1:
        return np.linspace(lo[0], hi[0], points_1d, endpoint=not obs_map.periodic)[:, None]
    axes = [np.linspace(lo[d], hi[d], points_2d) for d in range(obs_map.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _chunked_phi(engine, state, X, chunk=1000):
    return np.concatenate([
        engine.first_variation_field(state, X[k:k + chunk], gradient=False) for k in range(0, len(X), chunk)
    ])


def optimality_certificate(engine, prob_measure: DesignMeasure, audit_grid=None, tol: float = 1e-3,
                           merge_radius: float = 1e-3) -> OptimalityReport:
    """First-order optimality check of a probability measure for ``V``.

    Atoms closer than ``merge_radius`` are merged first; the support
    condition is then checked at the cluster centres.
    """
    centers, masses = cluster_atoms(prob_measure.normalized(), merge_radius)
    candidate = DesignMeasure(centers, masses)
    state = engine.state_for(candidate)
    phi_s, grad_s = engine.first_variation_field(state, centers)
    c = float(np.dot(masses, phi_s))
    X = default_audit_grid(engine.map) if audit_grid is None else np.asarray(audit_grid, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    phi = _chunked_phi(engine, state, X)
    max_violation = float(max(np.max(phi - c), np.max(phi_s - c)))
    support_residual = float(np.max(np.abs(phi_s - c)))
    grad_sup = float(np.max(np.linalg.norm(grad_s, axis=1)))
    ok = max_violation <= tol and support_residual <= tol
    return OptimalityReport(c, max_violation, support_residual, grad_sup, CERTIFIED if ok else VIOLATED, tol,
                            centers, masses, X, phi)


def random_measure(rng, obs_map, max_atoms: int = 6) -> DesignMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    pos = obs_map.lower + rng.uniform(size=(n, obs_map.dim)) * (obs_map.upper - obs_map.lower)
    return DesignMeasure(pos, rng.dirichlet(np.ones(n)))


def concavity_probe(engine, num_pairs: int = 100, t_grid=None, seed: int = 0, max_atoms: int = 6) -> float:
    """Worst value of ``V(mu_t) - [(1-t) V(mu_0) + t V(mu_1)]`` over random pairs."""
    t_grid = np.linspace(0.1, 0.9, 9) if t_grid is None else np.asarray(t_grid)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(num_pairs):
        mu0, mu1 = random_measure(rng, engine.map, max_atoms), random_measure(rng, engine.map, max_atoms)
        v0, v1 = engine.value(mu0), engine.value(mu1)
        for t in t_grid:
            gap = engine.value(mu0.mixture(mu1, t)) - ((1.0 - t) * v0 + t * v1)
            worst = min(worst, gap)
    return float(worst)


def monotonicity_audit(record, tol: float = 1e-8):
    """Return ``(worst per-step change, number of steps decreasing by more than tol)``.

    The worst change is clipped at zero from above, so a monotone run reports 0.
    """
    d = np.diff(record.utility)
    if d.size == 0:
        return 0.0, 0
    return float(min(0.0, d.min())), int(np.sum(d < -tol))


def torus_optimal_value(sigma_prior: float) -> float:
    return -2.0 / (sigma_prior**-2 + 0.5)


def torus_oracle(sigma_prior: float, measure: DesignMeasure | None = None):
    """Optimal torus utility and the two trigonometric moment residuals of ``measure``.

    A probability measure is optimal iff both ``int cos(4 pi x)`` and
    ``int sin(4 pi x)`` vanish. With ``measure=None`` the residuals are those
    of Lebesgue measure, i.e. zero.
    """
    if measure is None:
        return torus_optimal_value(sigma_prior), np.zeros(2)
    mu = measure.normalized()
    a = 4.0 * np.pi * mu.positions[:, 0]
    res = np.array([np.dot(mu.weights, np.cos(a)), np.dot(mu.weights, np.sin(a))])
    return torus_optimal_value(sigma_prior), res


# -- finite-difference validation ------------------------------------------


def signed_utility(engine, positions, weights) -> float:
    """``-Tr[(G D G^T + I)^{-1} T]`` with ``D = diag(weights)``; weights may be negative.

    Evaluated through the ``n x n`` system ``I + D G^T G``, which stays valid
    for signed weights, instead of the parameter-space operator.
    """
    g = engine.preconditioned_features(positions)
    w = np.asarray(weights, dtype=float)
    A = np.eye(len(w)) + w[:, None] * (g @ g.T)
    inner = np.linalg.solve(A, w[:, None] * (g @ engine.trace_op @ g.T))
    return -(engine.prior_trace - float(np.trace(inner)))


def _rel(err, ref, floor):
    return float(np.linalg.norm(err) / max(np.linalg.norm(ref), floor))


def _interior_points(rng, obs_map, n, margin):
    lo, hi = obs_map.lower + margin, obs_map.upper - margin
    return lo + rng.uniform(size=(n, obs_map.dim)) * (hi - lo)


def _central_diff(fn, X, h):
    n, dim = X.shape
    out = []
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = h
        out.append((fn(X + e) - fn(X - e)) / (2.0 * h))
    return np.stack(out, axis=-1)


def feature_jacobian_check(obs_map, num_points=50, h=1e-6, seed=0) -> float:
    rng = np.random.default_rng(seed)
    X = _interior_points(rng, obs_map, num_points, 1e-3)
    J = obs_map.jacobians(X)
    fd = _central_diff(obs_map.features, X, h)
    floor = 1e-3 * max(np.linalg.norm(J[p]) for p in range(len(X)))
    return max(_rel(fd[p] - J[p], J[p], floor) for p in range(len(X)))


def first_variation_gradient_check(engine, prob_measure, num_points=50, h=1e-6, seed=0) -> float:
    rng = np.random.default_rng(seed)
    state = engine.state_for(prob_measure)
    X = _interior_points(rng, engine.map, num_points, 1e-3)
    _, grad = engine.first_variation_field(state, X)
    fd = _central_diff(lambda Y: engine.first_variation_field(state, Y, gradient=False), X, h)
    floor = 1e-3 * np.max(np.linalg.norm(grad, axis=1))
    return max(_rel(fd[p] - grad[p], grad[p], floor) for p in range(len(X)))


def directional_derivative_check(engine, num_cases=30, t=1e-5, seed=0, max_atoms=6) -> float:
    """Compare ``d/dt V(mu + t (delta_x - mu))`` at 0 with ``phi(x) - int phi dmu``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_cases):
        mu = random_measure(rng, engine.map, max_atoms)
        x = _interior_points(rng, engine.map, 1, 1e-3)
        pos = np.vstack([mu.positions, x])

        def V(s):
            return signed_utility(engine, pos, engine.B * np.append((1.0 - s) * mu.weights, s))

        fd = (V(t) - V(-t)) / (2.0 * t)
        state = engine.state_for(mu)
        phi_x = engine.first_variation_field(state, x, gradient=False)[0]
        phi_mu = np.dot(mu.weights, engine.first_variation_field(state, mu.positions, gradient=False))
        exact = phi_x - phi_mu
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-12))
    return float(worst)


def gradient_check(engine, num_points=50, num_cases=30, seed=0, feature_h=1e-6) -> dict:
    """All finite-difference suites for one engine; returns worst relative errors by suite.

    The step stays small because the Schrodinger interpolant is only C^1:
    a central difference straddling a node carries an O(h) error.
    """
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, engine.map)
    return {
        "feature_jacobian": feature_jacobian_check(engine.map, num_points, feature_h, seed),
        "first_variation_gradient": first_variation_gradient_check(engine, mu, num_points, feature_h, seed),
        "directional_derivative": directional_derivative_check(engine, num_cases, seed=seed),
    }

"""
Particle gradient flows for batch A-optimal design.

Both drivers use forward Euler with a fixed step. Every iteration is bulk
synchronous: the resolvent is factorised once for the previous iterate and
all particles move with that frozen state, after which positions are
projected back onto the domain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .design import DesignMeasure, EnsembleProduct, ensemble_variances, flatten
from .errors import ConfigError, NumericError
from .regularize import RegularizerConfig, repulsion_gradients, repulsion_value, variance_gradients

log = logging.getLogger(__name__)

INIT_SCHEMES = ("uniform", "uniform_partitioned", "explicit")


@dataclass
class FlowConfig:
    """Flow parameters.

    ``num_particles`` is the total particle count; ``run_algorithm2`` splits it
    evenly into ``batch_size`` ensembles.
    """

    num_particles: int = 120
    num_iterations: int = 500
    step_size: float = 4e-3
    batch_size: int = 2
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    init: str = "uniform"
    seed: int = 0
    initial: np.ndarray | None = None
    snapshot_every: int | None = None
    utility_on: bool = True

    def __post_init__(self):
        if self.num_particles < 1:
            raise ConfigError("must be at least 1", "flow.num_particles")
        if self.num_iterations < 1:
            raise ConfigError("must be at least 1", "flow.num_iterations")
        if self.batch_size < 1:
            raise ConfigError("must be at least 1", "flow.batch_size")
        if not self.step_size > 0:
            raise ConfigError("must be positive", "flow.step_size")
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"unknown scheme {self.init!r}", "flow.init")
        if self.init == "explicit" and self.initial is None:
            raise ConfigError("explicit initialisation needs initial particles", "flow.init")

    @property
    def thinning(self) -> int:
        if self.snapshot_every is not None:
            return max(1, int(self.snapshot_every))
        T = self.num_iterations
        return 1 if T <= 1000 else math.ceil(T / 1000)


@dataclass
class FlowRecord:
    """Per-iteration trace of a flow run (index 0 is the initial state)."""

    algorithm: str
    utility: np.ndarray
    r_v: np.ndarray
    r_r: np.ndarray
    max_disp: np.ndarray
    snapshots: dict
    final: EnsembleProduct
    measure: DesignMeasure

    @property
    def num_iterations(self) -> int:
        return len(self.utility) - 1

    @property
    def dt_safety(self) -> float:
        """Largest single-step utility decrease (non-positive; 0 if monotone)."""
        if len(self.utility) < 2:
            return 0.0
        return float(min(0.0, np.min(np.diff(self.utility))))


def project_to_domain(x, lower, upper, periodic: bool = False) -> np.ndarray:
    """Clamp coordinates into the closed box, or wrap them on a periodic domain."""
    x = np.asarray(x, dtype=float)
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    if periodic:
        return lower + np.mod(x - lower, upper - lower)
    return np.clip(x, lower, upper)


def initial_particles(cfg: FlowConfig, B: int, N: int, lower, upper) -> np.ndarray:
    """Initial positions of shape ``(B, N, dim)``."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    dim = lower.shape[0]
    if cfg.init == "explicit":
        p = np.asarray(cfg.initial, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim == 2:
            p = p.reshape(B, N, dim) if p.size == B * N * dim else p
        if p.shape != (B, N, dim):
            raise ConfigError(f"initial particles have shape {p.shape}, expected {(B, N, dim)}", "flow.init")
        return p.copy()
    rng = np.random.default_rng(cfg.seed)
    u = rng.uniform(size=(B, N, dim))
    if cfg.init == "uniform_partitioned":
        # Ensemble b is uniform on the b-th slab of the first coordinate.
        u[:, :, 0] = (np.arange(B)[:, None] + u[:, :, 0]) / B
    return lower + u * (upper - lower)


def _split(cfg: FlowConfig) -> int:
    if cfg.num_particles % cfg.batch_size:
        raise ConfigError(
            f"{cfg.num_particles} particles cannot be split into {cfg.batch_size} equal ensembles",
            "flow.num_particles",
        )
    return cfg.num_particles // cfg.batch_size


def _check_batch(engine, cfg):
    if engine.B != cfg.batch_size:
        raise ConfigError(f"engine batch size {engine.B:g} differs from {cfg.batch_size}", "flow.batch_size")


def _utility_step(engine, X, weights):
    g = engine.preconditioned_features(X)
    J = engine.preconditioned_jacobians(X)
    state = engine.resolvent_from_features(g, weights)
    _, grad = engine.field_from_features(state, g, J)
    return -state.trace_against(engine.trace_op), grad


def run_algorithm1(engine, cfg: FlowConfig) -> FlowRecord:
    """Plain particle flow on one ensemble of ``num_particles`` particles.

    The particles represent a probability measure ``mu`` and ascend ``V``;
    the returned measure is ``B mu``. Regularisation settings are ignored.
    """
    _check_batch(engine, cfg)
    N = cfg.num_particles
    obs = engine.map
    if cfg.init == "uniform_partitioned":
        X = initial_particles(cfg, cfg.batch_size, _split(cfg), obs.lower, obs.upper).reshape(N, -1)
    else:
        X = initial_particles(cfg, 1, N, obs.lower, obs.upper)[0]
    weights = np.full(N, engine.B / N)

    def step(P):
        U, grad = _utility_step(engine, P[0], weights)
        return U, grad[None], 0.0, 0.0

    return _integrate(engine, cfg, X[None], step, "algorithm1")


def run_algorithm2(engine, cfg: FlowConfig) -> FlowRecord:
    """Regularised flow on ``batch_size`` ensembles of ``num_particles / batch_size`` particles."""
    _check_batch(engine, cfg)
    B, N = cfg.batch_size, _split(cfg)
    obs = engine.map
    P0 = initial_particles(cfg, B, N, obs.lower, obs.upper)
    reg = cfg.reg
    weights = np.full(B * N, 1.0 / N)

    def step(P):
        ens = EnsembleProduct(P)
        flat = P.reshape(-1, P.shape[-1])
        if cfg.utility_on:
            U, grad = _utility_step(engine, flat, weights)
            direction = grad.reshape(P.shape)
        else:
            U = engine.expected_utility(DesignMeasure(flat, weights))
            direction = np.zeros_like(P)
        if reg.alpha:
            direction = direction - reg.alpha * variance_gradients(ens)
        if reg.beta:
            direction = direction - reg.beta * repulsion_gradients(ens, reg.sigma_q)
        rr = repulsion_value(ens, reg.sigma_q) if B > 1 else 0.0
        return U, direction, float(ensemble_variances(ens).sum()), rr

    return _integrate(engine, cfg, P0, step, "algorithm2")


def _integrate(engine, cfg, P, step, name) -> FlowRecord:
    obs = engine.map
    T, dt, every = cfg.num_iterations, cfg.step_size, cfg.thinning
    util, rv, rr, disp = [], [], [], [0.0]
    snaps = {0: P.copy()}
    for t in range(1, T + 1):
        U, direction, v, r = step(P)
        if not np.all(np.isfinite(direction)) or not np.isfinite(U):
            raise NumericError("non-finite ascent direction; step size too large or model blow-up", t)
        util.append(U), rv.append(v), rr.append(r)
        P_new = project_to_domain(P + dt * direction, obs.lower, obs.upper, obs.periodic)
        disp.append(float(np.max(np.linalg.norm(P_new - P, axis=-1))))
        P = P_new
        if t % every == 0 or t == T:
            snaps[t] = P.copy()
    U, _, v, r = step(P)
    util.append(U), rv.append(v), rr.append(r)
    final = EnsembleProduct(P)
    if name == "algorithm1":
        measure = DesignMeasure.uniform(P[0], engine.B)
    else:
        measure = flatten(final)
    rec = FlowRecord(name, np.array(util), np.array(rv), np.array(rr), np.array(disp), snaps, final, measure)
    log.info("%s finished: utility %.6g, worst step decrease %.3g", name, rec.utility[-1], rec.dt_safety)
    return rec

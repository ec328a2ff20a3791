"""
Experiment configuration.

A configuration is a tree of dataclasses that round-trips through a flat
text format with one ``dotted.key = value`` per line::

    preset = poisson_b2
    flow.num_iterations = 800
    regularization.alpha = 0.01

Lines starting with ``#`` are comments. Values are parsed as int, float,
bool (``true``/``false``) or bare strings according to the type of the
field they set. Precedence when building a configuration is
command-line override > file > preset > default.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError
from .flow import FlowConfig
from .kernels import KernelSpec
from .models import (
    PotentialParams,
    interval_grid,
    poisson_observation_map,
    schrodinger_observation_map,
    square_grid,
    torus_observation_map,
)
from .prior import assemble_prior, torus_prior
from .regularize import RegularizerConfig
from .utility import UtilityEngine

MODEL_TYPES = ("poisson1d", "schrodinger2d", "torus")
ALIASES = {"repulsion.sigma_q": "regularization.sigma_q"}


@dataclass
class PotentialSection:
    magnitude: float = 200.0
    halfwidth: float = 0.08
    mollifier_eps: float = 0.02


@dataclass
class ModelSection:
    type: str = "poisson1d"
    grid_points: int = 100
    noise_std: float = 0.1
    quadrature: str = "galerkin"
    omega: float = 1.0
    sigma_prior: float = 1.0
    potential: PotentialSection = field(default_factory=PotentialSection)


@dataclass
class KernelSection:
    family: str = "nonstationary_product"
    sigma0: float = 0.01
    amplitude: float = 50.0


@dataclass
class PriorSection:
    kernel: KernelSection = field(default_factory=KernelSection)
    eigen_floor: float = 0.0


@dataclass
class FlowSection:
    algorithm: int = 2
    num_particles: int = 120
    num_iterations: int = 500
    step_size: float = 4e-3
    batch_size: int = 2
    seed: int = 0
    init: str = "uniform"
    solver: str = "auto"


@dataclass
class RegularizationSection:
    alpha: float = 0.0
    beta: float = 0.0
    sigma_q: float = 0.009


@dataclass
class OutputSection:
    directory: str = "runs"
    snapshot_every: int = 0
    landscape_points: int = 101
    merge_radius: float = 1e-3
    certificate_tol: float = 1e-3
    sweep: str = ""


@dataclass
class ExperimentConfig:
    preset: str = ""
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSection = field(default_factory=PriorSection)
    flow: FlowSection = field(default_factory=FlowSection)
    regularization: RegularizationSection = field(default_factory=RegularizationSection)
    outputs: OutputSection = field(default_factory=OutputSection)


PRESETS = {
    "poisson_b2": {
        "model.type": "poisson1d", "model.grid_points": 100, "model.noise_std": 0.1,
        "prior.kernel.family": "nonstationary_product", "prior.kernel.sigma0": 0.01,
        "flow.algorithm": 2, "flow.num_particles": 120, "flow.num_iterations": 500, "flow.step_size": 4e-3,
        "flow.batch_size": 2, "flow.init": "uniform_partitioned",
        "regularization.alpha": 0.008, "regularization.beta": 0.0,
    },
    "schrodinger_b4": {
        "model.type": "schrodinger2d", "model.grid_points": 60, "model.noise_std": 0.1, "model.omega": 1.0,
        "prior.kernel.family": "squared_exponential", "prior.kernel.sigma0": 0.5,
        "flow.algorithm": 2, "flow.num_particles": 100, "flow.num_iterations": 120, "flow.step_size": 8e-3,
        "flow.batch_size": 4, "flow.init": "uniform",
        "regularization.alpha": 5e-4, "regularization.beta": 0.0,
        "outputs.merge_radius": 1e-2,
    },
    "sensitivity_alpha": {
        "model.type": "poisson1d", "model.grid_points": 100, "model.noise_std": 0.1,
        "prior.kernel.family": "nonstationary_product", "prior.kernel.sigma0": 0.01,
        "flow.algorithm": 2, "flow.num_particles": 900, "flow.num_iterations": 300, "flow.step_size": 1e-5,
        "flow.batch_size": 3, "flow.init": "uniform_partitioned",
        "regularization.alpha": 1e-2, "regularization.beta": 0.0,
        "outputs.sweep": "regularization.alpha=0.001,0.01,0.1",
    },
    "sensitivity_beta": {
        "model.type": "poisson1d", "model.grid_points": 100, "model.noise_std": 0.1,
        "prior.kernel.family": "nonstationary_product", "prior.kernel.sigma0": 0.01,
        "flow.algorithm": 2, "flow.num_particles": 600, "flow.num_iterations": 1000, "flow.step_size": 4e-3,
        "flow.batch_size": 8, "flow.init": "uniform_partitioned",
        "regularization.alpha": 0.05, "regularization.beta": 1e-3, "regularization.sigma_q": 0.009,
        "outputs.sweep": "regularization.beta=1e-6,1e-5,1e-4,1e-3",
    },
    "torus": {
        "model.type": "torus", "model.sigma_prior": 1.0,
        "flow.algorithm": 1, "flow.num_particles": 40, "flow.num_iterations": 400, "flow.step_size": 1e-2,
        "flow.batch_size": 1, "flow.init": "uniform",
    },
}


# -- flat representation ----------------------------------------------------


def to_flat(cfg, prefix: str = "") -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(to_flat(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, raw, current):
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("true", "1", "yes"):
            return True
        if s in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}", key)
    try:
        if isinstance(current, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(float(raw)) if isinstance(raw, str) and "e" in raw.lower() else int(raw)
        if isinstance(current, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {type(current).__name__}, got {raw!r}", key) from None
    return str(raw).strip()


def set_key(cfg: ExperimentConfig, key: str, raw) -> None:
    """Assign one dotted key, coercing ``raw`` to the field type."""
    key = ALIASES.get(key.strip(), key.strip())
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not hasattr(node, p) or not dataclasses.is_dataclass(getattr(node, p)):
            raise ConfigError("unknown configuration key", key)
        node = getattr(node, p)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(node) or leaf not in {f.name for f in dataclasses.fields(node)}:
        raise ConfigError("unknown configuration key", key)
    current = getattr(node, leaf)
    if dataclasses.is_dataclass(current):
        raise ConfigError("cannot assign a whole section", key)
    setattr(node, leaf, _coerce(key, raw, current))


def parse_text(text: str) -> dict:
    """Parse ``key = value`` lines into an ordered dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in to_flat(cfg).items())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode()).hexdigest()


def load_config(text: str | None = None, preset: str | None = None, overrides=None) -> ExperimentConfig:
    """Build a validated configuration from file text, a preset name and ``key=value`` overrides."""
    file_keys = parse_text(text) if text else {}
    name = preset or file_keys.pop("preset", "") or ""
    file_keys.pop("preset", None)
    cfg = ExperimentConfig()
    if name:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset")
        cfg.preset = name
        for k, v in PRESETS[name].items():
            set_key(cfg, k, v)
    for k, v in file_keys.items():
        set_key(cfg, k, v)
    for item in overrides or ():
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            k, v = item.split("=", 1)
        else:
            k, v = item
        set_key(cfg, k, v)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    m = cfg.model
    if m.type not in MODEL_TYPES:
        raise ConfigError(f"unknown model type {m.type!r}", "model.type")
    if not m.noise_std > 0:
        raise ConfigError("must be positive", "model.noise_std")
    if cfg.flow.algorithm not in (1, 2):
        raise ConfigError("must be 1 or 2", "flow.algorithm")
    if cfg.flow.solver not in ("auto", "dense_cholesky", "woodbury_lowrank"):
        raise ConfigError(f"unknown solver {cfg.flow.solver!r}", "flow.solver")
    if cfg.outputs.landscape_points < 2:
        raise ConfigError("must be at least 2", "outputs.landscape_points")
    build_flow_config(cfg)  # parameter checks live on FlowConfig / RegularizerConfig


# -- builders -----------------------------------------------------------------


def build_map(cfg: ExperimentConfig):
    m = cfg.model
    if m.type == "poisson1d":
        return poisson_observation_map(interval_grid(m.grid_points), m.noise_std, m.quadrature)
    if m.type == "schrodinger2d":
        pot = PotentialParams(m.potential.magnitude, m.potential.halfwidth, m.potential.mollifier_eps)
        return schrodinger_observation_map(square_grid(m.grid_points), m.omega, pot, m.noise_std)
    return torus_observation_map(m.sigma_prior)


def build_prior(cfg: ExperimentConfig, obs_map):
    if cfg.model.type == "torus":
        return torus_prior(cfg.model.sigma_prior)
    k = cfg.prior.kernel
    try:
        spec = KernelSpec(k.family, k.sigma0, amplitude=k.amplitude)
    except ValueError as exc:
        raise ConfigError(str(exc), "prior.kernel") from exc
    return assemble_prior(spec, obs_map.grid, cfg.prior.eigen_floor)


def build_engine(cfg: ExperimentConfig) -> UtilityEngine:
    obs_map = build_map(cfg)
    return UtilityEngine(obs_map, build_prior(cfg, obs_map), cfg.flow.batch_size, cfg.flow.solver)


def build_flow_config(cfg: ExperimentConfig) -> FlowConfig:
    f, r = cfg.flow, cfg.regularization
    return FlowConfig(
        num_particles=f.num_particles, num_iterations=f.num_iterations, step_size=f.step_size,
        batch_size=f.batch_size, reg=RegularizerConfig(r.alpha, r.beta, r.sigma_q), init=f.init, seed=f.seed,
        snapshot_every=cfg.outputs.snapshot_every or None,
    )


def parse_sweep(spec: str):
    """``"key=v1,v2"`` -> ``(key, [v1, v2])``; empty string -> ``None``."""
    if not spec:
        return None
    if "=" not in spec:
        raise ConfigError("expected key=v1,v2,...", "outputs.sweep")
    key, values = spec.split("=", 1)
    return key.strip(), [v.strip() for v in values.split(",") if v.strip()]

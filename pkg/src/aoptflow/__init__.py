"""Relaxed batch A-optimal experimental design by Wasserstein particle flows."""
from .design import DesignMeasure, EnsembleProduct, flatten
from .errors import ConfigError, ModelError, NumericError
from .flow import FlowConfig, FlowRecord, run_algorithm1, run_algorithm2
from .kernels import KernelFamily, KernelSpec, kernel_eval, kernel_grad_x
from .models import (
    interval_grid,
    poisson_observation_map,
    schrodinger_observation_map,
    square_grid,
    torus_observation_map,
)
from .prior import PriorModel, assemble_prior, torus_prior
from .regularize import RegularizerConfig
from .utility import UtilityEngine

__version__ = "0.1.0"

import numpy as np
import pytest

from aoptflow import KernelSpec, UtilityEngine, assemble_prior, interval_grid, poisson_observation_map, torus_prior
from aoptflow.models import PotentialParams, schrodinger_observation_map, square_grid, torus_observation_map

ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store and print one acceptance line; the summary hook repeats them at the end of the run."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def poisson_map():
    return poisson_observation_map(interval_grid(100), 0.1)


@pytest.fixture(scope="session")
def poisson_prior(poisson_map):
    return assemble_prior(KernelSpec("nonstationary_product", 0.01), poisson_map.grid)


@pytest.fixture(scope="session")
def poisson_engine(poisson_map, poisson_prior):
    return UtilityEngine(poisson_map, poisson_prior, 2)


@pytest.fixture(scope="session")
def torus_engine():
    return UtilityEngine(torus_observation_map(1.0), torus_prior(1.0), 1)


@pytest.fixture(scope="session")
def small_schrodinger_engine():
    obs = schrodinger_observation_map(square_grid(20), 1.0, PotentialParams(), 0.1)
    prior = assemble_prior(KernelSpec("squared_exponential", 0.5), obs.grid)
    return UtilityEngine(obs, prior, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

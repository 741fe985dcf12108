"""Shared fixtures for the pdmp-kit test suite.

Usage:
    pytest                 # quick suite
    pytest -m slow         # full-size statistical checks
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pdmpkit.models.specs import BpsSpec, EngineConfig
from pdmpkit.state_space import GaussianIsoPotential, VelocityKind, VelocitySpace, make_state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gauss1():
    return GaussianIsoPotential(1)


@pytest.fixture
def gauss2():
    return GaussianIsoPotential(2)


@pytest.fixture
def bps1(gauss1):
    """Gaussian BPS in d = 1 with standard Gaussian velocities."""
    return BpsSpec(
        potential=gauss1,
        velocity_space=VelocitySpace(kind=VelocityKind.STD_GAUSSIAN, d=1),
        lambda_c=1.0,
    )


@pytest.fixture
def bps1_sphere(gauss1):
    """Gaussian BPS in d = 1 with unit speed."""
    return BpsSpec(
        potential=gauss1,
        velocity_space=VelocitySpace(kind=VelocityKind.UNIT_SPHERE, d=1),
        lambda_c=1.0,
    )


@pytest.fixture
def bps2(gauss2):
    return BpsSpec(
        potential=gauss2,
        velocity_space=VelocitySpace(kind=VelocityKind.STD_GAUSSIAN, d=2),
        lambda_c=1.0,
    )


@pytest.fixture
def start1():
    return make_state([0.0], [1.0])


@pytest.fixture
def short_run():
    return EngineConfig(t_end=1.0, seed=5)


@pytest.fixture
def write_config(tmp_path):
    """Write INI text to a temporary file and return its path."""

    def _write(text: str, name: str = "run.ini") -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write

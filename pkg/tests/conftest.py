#!/usr/bin/env python3
"""
Pytest Configuration and Shared Fixtures

Provides shared fixtures, configuration, and utilities for all test modules.
"""

import csv
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Add the project root to the path for all tests
sys.path.insert(0, str(Path(__file__).parent.parent))

from cbfland_cli.config.loader import CbfLandSettings  # noqa: E402
from cbfland_cli.config.scenario import load_scenario  # noqa: E402
from cbfland_cli.core.barriers import LcbfParams  # noqa: E402
from cbfland_cli.core.geometry import UavParams, UavState, UgvState  # noqa: E402
from cbfland_cli.core.simulator import run_scenario  # noqa: E402

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile("default")

PELICAN_INERTIA = [0.0347, 0.0458, 0.0977]


@pytest.fixture
def rng():
    """Seeded generator so randomized tests are reproducible."""
    return np.random.default_rng(12345)


@pytest.fixture
def default_lcbf():
    return LcbfParams(alpha=2.0, beta=1.0)


@pytest.fixture
def uav_params():
    return UavParams(mass=1.0, inertia=np.diag(PELICAN_INERTIA), radius=0.25)


@pytest.fixture
def hover_state():
    """UAV at rest one metre above the origin in the hover attitude."""
    return UavState(
        position=np.array([0.0, 0.0, 1.0]),
        velocity=np.zeros(3),
        attitude=np.diag([-1.0, 1.0, -1.0]),
    )


@pytest.fixture
def static_pad():
    return UgvState(position=np.array([0.0, 0.0, 0.1]), velocity=np.zeros(3))


@pytest.fixture
def scenario1_cfg():
    return load_scenario("scenario1")


@pytest.fixture
def scenario2_cfg():
    return load_scenario("scenario2")


@pytest.fixture(scope="session")
def scenario1_log():
    """Kinematic run of the static-UGV scenario, shared by the session."""
    return run_scenario(load_scenario("scenario1"), progress_every=10**9)


@pytest.fixture(scope="session")
def scenario2_log():
    """Kinematic run of the moving-UGV scenario, shared by the session."""
    return run_scenario(load_scenario("scenario2"), progress_every=10**9)


@pytest.fixture
def quiet_settings():
    """Default settings with progress logging suppressed."""
    settings = CbfLandSettings()
    settings.simulation.progress_every = 10**9
    return settings


@pytest.fixture
def temp_workspace():
    """Create a temporary workspace directory for tests."""
    temp_dir = tempfile.mkdtemp(prefix="cbfland_test_")
    workspace_path = Path(temp_dir)

    (workspace_path / "scenarios").mkdir(exist_ok=True)
    (workspace_path / "output").mkdir(exist_ok=True)

    yield workspace_path

    # Cleanup
    shutil.rmtree(temp_dir, ignore_errors=True)


SINGLE_UAV_SCENARIO = """\
name = "single"
t_start = 0.0
controller_on_time = 0.0
t_final = {t_final}

[[uav]]
target = 1
position = {position}

[[ugv]]
position = [0.0, 0.0, 0.1]
"""


class TestHelpers:
    """Helper utilities for tests."""

    @staticmethod
    def central_difference(f, x, step=1e-6):
        """Central-difference gradient of a scalar function of a vector."""
        x = np.asarray(x, dtype=float)
        grad = np.zeros_like(x)
        for k in range(x.size):
            dx = np.zeros_like(x)
            dx[k] = step
            grad[k] = (f(x + dx) - f(x - dx)) / (2 * step)
        return grad

    @staticmethod
    def read_csv(path):
        """Rows of a CSV file as dictionaries, plus the header."""
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            return reader.fieldnames, list(reader)

    @staticmethod
    def write_scenario(directory, text, name="scenario.cfg"):
        path = Path(directory) / name
        path.write_text(text, encoding="utf-8")
        return path

    @staticmethod
    def single_uav_scenario(directory, position=(1.0, 0.0, 1.0), t_final=10.0, name="single.cfg"):
        text = SINGLE_UAV_SCENARIO.format(t_final=t_final, position=list(position))
        return TestHelpers.write_scenario(directory, text, name)

    @staticmethod
    def measure_execution_time(func, *args, **kwargs):
        """Measure execution time of a function."""
        import time
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        return result, time.perf_counter() - start_time


# Pytest configuration
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "performance: marks tests as performance tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers automatically."""
    for item in items:
        # Add markers based on test file names
        if "test_performance" in str(item.fspath):
            item.add_marker(pytest.mark.performance)
        elif "test_integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)
        elif "test_" in str(item.fspath):
            item.add_marker(pytest.mark.unit)

        # Full-dynamics runs and sweeps are slow
        if "full_dynamics" in item.name or "sweep_run" in item.name:
            item.add_marker(pytest.mark.slow)


# Make TestHelpers available to all test modules
@pytest.fixture
def test_helpers():
    """Provide TestHelpers instance to tests."""
    return TestHelpers()

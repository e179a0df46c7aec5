# test/conftest.py

import os
import pytest
import numpy as np
from typer.testing import CliRunner
from unittest.mock import patch

# IMPORTANT: No imports related to 'main' here yet.
# It is imported inside the set_test_env fixture, after the environment is patched.

from app.datamanager.data_manager_files import FileDataManager
from app.schemas.pydantic_models import RunConfig, SweepConfig


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False,
        help="also run the desk-scale training targets (minutes each)"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, only executed with --run-slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def set_test_env():
    """
    Patches environment variables for the entire test session
    before the CLI application is imported.
    UNISORT_SEED is removed so the seed fallback is 0 unless a test sets it.
    """
    test_env_vars = {
        "UNISORT_LOG_LEVEL": "WARNING",
    }

    # patch.dict restores os.environ (including the removed UNISORT_SEED) on exit
    with patch.dict(os.environ, test_env_vars):
        os.environ.pop("UNISORT_SEED", None)
        # Import the app *inside* this context manager.
        from main import app, run
        yield app, run


@pytest.fixture(scope="module")
def app_instance(set_test_env):
    """Provides the Typer app instance, imported with test environment variables."""
    app_obj, _ = set_test_env
    return app_obj


@pytest.fixture(scope="module")
def run_cli(set_test_env):
    """Provides main.run, which returns the exit code instead of exiting the interpreter."""
    _, run = set_test_env
    return run


@pytest.fixture
def runner():
    """
        Click test runner with stdout and stderr kept apart,
        so JSON / CSV on stdout can be parsed without log lines mixed in.
    """
    return CliRunner(mix_stderr=False)


@pytest.fixture
def rng():
    """
        Fresh, seeded generator for every test function.
        Default scope="function": draws in one test never shift the inputs of another.
    """
    return np.random.default_rng(20240531)


@pytest.fixture
def data_manager():
    """Real file based data manager; tests point it at tmp_path."""
    return FileDataManager()


@pytest.fixture
def small_sort_config():
    """
        Sorting run small enough for the quick suite (a few seconds).
        Same seed everywhere, so repeated calls must give identical results.
    """
    return RunConfig(task="sort", n=5, d=4, epochs=5, n_train=100, n_valid=20, n_test=40, seed=3)


@pytest.fixture
def small_median_config():
    """Quantile regression run for the quick suite."""
    return RunConfig(task="median", n=5, d=4, epochs=3, n_train=60, n_valid=20, n_test=40, seed=3)


@pytest.fixture
def small_knn_config():
    """kNN run on blobs with few training points and candidates per query."""
    return RunConfig(
        task="knn", n=10, d=4, k=3, epochs=2, n_train=60, n_valid=20, n_test=20, dataset="blobs", seed=3
    )


@pytest.fixture
def small_sweep_config():
    """Variance sweep with few gradient samples; five temperatures as by default."""
    return SweepConfig(n=4, d=3, n_sequences=1, n_samples=20, seed=1)

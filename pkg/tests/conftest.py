import os
import sys

# Add the project root to sys.path so that hardness_bench can be imported without installing
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from hardness_bench.config import BenchConfig, build_config  # noqa: E402
from hardness_bench.data.dataset import Dataset, generate_blobs, standardize  # noqa: E402


def pytest_addoption(parser):
    """Add command line options for acceptance-scale reproductions."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run acceptance-scale reproductions (minutes of CPU time)",
    )


@pytest.fixture
def run_slow(request):
    if not request.config.getoption("--run-slow"):
        pytest.skip("Slow reproductions disabled. Use --run-slow to enable.")
    return True


@pytest.fixture
def blobs() -> Dataset:
    """Small separable 4-class blob dataset, standardized."""
    return standardize(generate_blobs(200, 2, 4, 8.0, seed=7))


@pytest.fixture
def tiny_config(tmp_path) -> BenchConfig:
    """Fast configuration: 120 samples, 3 epochs, cheap scorers only."""
    return build_config(
        {
            "n_samples": 120,
            "n_classes": 3,
            "epochs": 3,
            "hidden_sizes": "8",
            "hardness": "uniform",
            "p": "0.1",
            "seeds": "0",
            "methods": "aum,loss,el2n,dataiq_confidence,forgetting,vog",
            "out": str(tmp_path / "results"),
        }
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)

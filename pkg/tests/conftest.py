import os
import sys

import numpy as np
import pytest

# Add src to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"))

from viws.config import ConfigManager  # noqa: E402
from viws.data.io import save_frames  # noqa: E402
from viws.synthesis.dataset import build_dataset  # noqa: E402
from viws.synthesis.scenes import generate_clean_videos  # noqa: E402


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run desk-scale experiments"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_config_manager():
    ConfigManager.reset()
    yield
    ConfigManager.reset()


@pytest.fixture
def clean_sources(tmp_path):
    """Four procedural 64x64, 10-frame clean videos."""
    root = tmp_path / "clean"
    generate_clean_videos(root, count=4, height=64, width=64, num_frames=10, seed=3)
    return root


@pytest.fixture
def small_dataset(tmp_path, clean_sources):
    """Two videos per weather (one train, one test) at 64x64."""
    return build_dataset(
        clean_sources,
        tmp_path / "dataset",
        {"rain": 2, "haze": 2, "snow": 2},
        split_ratio=0.5,
        global_seed=11,
    )


@pytest.fixture
def write_video():
    def _write(directory, frames):
        save_frames(directory, np.asarray(frames, dtype=np.float32))
        return directory

    return _write

import os
from pathlib import Path
from typing import TYPE_CHECKING

import pytest
import torch

from facm.config import ExperimentConfig
from facm.data import ImageDataset
from facm.enums import CorrectionMode
from facm.harness import FACMSystem
from facm.testing import create_test_config, create_test_system, synthetic_dataset, write_idx_files

if TYPE_CHECKING:
    from _pytest.config import Config


def pytest_configure(config: "Config") -> None:  # pylint: disable=unused-argument
    torch.set_num_threads(1)


@pytest.fixture()
def dataset() -> ImageDataset:
    return synthetic_dataset(32)


@pytest.fixture()
def test_system() -> FACMSystem:
    return create_test_system(CorrectionMode.FACM)


@pytest.fixture()
def fast_system() -> FACMSystem:
    return create_test_system(CorrectionMode.FAST_FACM)


@pytest.fixture()
def mnist_dir(tmp_path: Path) -> Path:
    """A directory of IDX files holding a small synthetic dataset."""
    return write_idx_files(tmp_path / "data", synthetic_dataset(64), synthetic_dataset(32, seed=1))


@pytest.fixture()
def test_config(tmp_path: Path, mnist_dir: Path) -> ExperimentConfig:
    return create_test_config(tmp_path / "artifacts", mnist_dir)


@pytest.fixture()
def real_mnist_dir() -> Path:
    path = os.environ.get("FACM_MNIST_DIR")
    if not path:
        pytest.skip("FACM_MNIST_DIR is not set")
    return Path(path)

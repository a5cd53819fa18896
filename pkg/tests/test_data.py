import gzip
from pathlib import Path

import numpy as np
import pytest
import torch

from facm.config import DatasetConfig
from facm.data import ImageDataset, TensorPairs, load_dataset, read_cifar_batches, read_idx_images, read_idx_labels
from facm.data.readers import CIFAR10_RECORD_BYTES, CIFAR100_RECORD_BYTES
from facm.enums import DatasetName
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.testing import synthetic_dataset, write_idx_files
from facm.utils import make_generator


def test_load_mnist_round_trips_pixels(tmp_path: Path) -> None:
    train, test = synthetic_dataset(20), synthetic_dataset(10, seed=1)
    root = write_idx_files(tmp_path, train, test)
    loaded_train, loaded_test = load_dataset(DatasetConfig(name=DatasetName.MNIST, path=root))
    assert loaded_train.images.shape == (20, 1, 28, 28)
    assert loaded_train.images.dtype == torch.float32
    assert torch.equal(loaded_train.labels, train.labels)
    assert torch.allclose(loaded_test.images, test.images, atol=1 / 255)


def test_load_mnist_limits(tmp_path: Path) -> None:
    root = write_idx_files(tmp_path, synthetic_dataset(20), synthetic_dataset(10))
    train, test = load_dataset(DatasetConfig(path=root, train_limit=5, test_limit=3))
    assert (len(train), len(test)) == (5, 3)


def test_gzip_files_are_read(tmp_path: Path) -> None:
    root = write_idx_files(tmp_path, synthetic_dataset(4), synthetic_dataset(4))
    path = root / "t10k-labels-idx1-ubyte"
    (root / "t10k-labels-idx1-ubyte.gz").write_bytes(gzip.compress(path.read_bytes()))
    path.unlink()
    assert read_idx_labels(path).tolist() == [0, 1, 2, 3]


def test_missing_files(tmp_path: Path) -> None:
    with pytest.raises(ImproperlyConfiguredException):
        load_dataset(DatasetConfig(path=tmp_path))


def test_idx_validation(tmp_path: Path) -> None:
    root = write_idx_files(tmp_path, synthetic_dataset(4), synthetic_dataset(4))
    with pytest.raises(ValidationException):
        read_idx_images(root / "train-labels-idx1-ubyte")
    truncated = tmp_path / "truncated"
    truncated.write_bytes((root / "train-images-idx3-ubyte").read_bytes()[:-5])
    with pytest.raises(ValidationException):
        read_idx_images(truncated)
    short = tmp_path / "short"
    short.write_bytes(b"\x00\x00")
    with pytest.raises(ValidationException):
        read_idx_labels(short)


def test_cifar100_uses_fine_labels(tmp_path: Path) -> None:
    records = np.zeros((3, CIFAR100_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = [1, 2, 3]
    records[:, 1] = [40, 50, 60]
    records[:, 2:] = 7
    path = tmp_path / "train.bin"
    path.write_bytes(records.tobytes())
    images, labels = read_cifar_batches([path], CIFAR100_RECORD_BYTES)
    assert images.shape == (3, 3, 32, 32)
    assert labels.tolist() == [40, 50, 60]
    assert int(images.max()) == 7


def test_cifar_rejects_partial_records(tmp_path: Path) -> None:
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(b"\x00" * (CIFAR10_RECORD_BYTES + 1))
    with pytest.raises(ValidationException):
        read_cifar_batches([path], CIFAR10_RECORD_BYTES)


def test_dataset_shapes_are_checked() -> None:
    with pytest.raises(ValidationException):
        ImageDataset(torch.zeros(4, 28, 28), torch.zeros(4))
    with pytest.raises(ValidationException):
        TensorPairs(torch.zeros(4, 2), torch.zeros(3))


def test_batches() -> None:
    data = synthetic_dataset(10)
    ordered = list(data.batches(4))
    assert [len(labels) for _, labels in ordered] == [4, 4, 2]
    assert data.num_batches(4) == 3
    shuffled = torch.cat([labels for _, labels in data.batches(4, make_generator(0, "shuffle"))])
    assert sorted(shuffled.tolist()) == sorted(data.labels.tolist())
    assert len(data.head(3)) == 3
    assert data.head(None) is data
    assert len(data.concat(data)) == 20


def test_synthetic_dataset_is_deterministic() -> None:
    first, second = synthetic_dataset(8, seed=4), synthetic_dataset(8, seed=4)
    assert torch.equal(first.images, second.images)
    assert float(first.images.min()) >= 0.0
    assert float(first.images.max()) <= 1.0

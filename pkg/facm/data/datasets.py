from logging import getLogger
from typing import Iterator, Optional, Tuple

import numpy as np
import torch

from facm.config import DatasetConfig
from facm.data.readers import (
    CIFAR10_RECORD_BYTES,
    CIFAR100_RECORD_BYTES,
    cifar10_files,
    cifar100_files,
    mnist_files,
    read_cifar_batches,
    read_idx_images,
    read_idx_labels,
)
from facm.enums import DatasetName
from facm.exceptions import ValidationException
from facm.utils.seeding import shuffled_batches

logger = getLogger(__name__)

Batch = Tuple[torch.Tensor, torch.Tensor]


class TensorPairs:
    """Row-aligned inputs and targets that can be iterated in (optionally shuffled) batches."""

    __slots__ = ("images", "labels")

    def __init__(self, images: torch.Tensor, labels: torch.Tensor):
        if images.shape[0] != labels.shape[0]:
            raise ValidationException(detail=f"{images.shape[0]} inputs but {labels.shape[0]} targets")
        self.images = images
        self.labels = labels

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def batches(self, batch_size: int, generator: Optional[torch.Generator] = None) -> Iterator[Batch]:
        """Iterates over batches, shuffled when a generator is given."""
        if generator is None:
            for start in range(0, len(self), batch_size):
                yield self.images[start : start + batch_size], self.labels[start : start + batch_size]
            return
        for index in shuffled_batches(len(self), batch_size, generator):
            yield self.images[index], self.labels[index]

    def num_batches(self, batch_size: int) -> int:
        return (len(self) + batch_size - 1) // batch_size


class ImageDataset(TensorPairs):
    """Images in [0, 1] as a float32 tensor [N, C, H, W] with int64 labels."""

    __slots__ = ()

    def __init__(self, images: torch.Tensor, labels: torch.Tensor):
        if images.dim() != 4:
            raise ValidationException(detail=f"images must have shape [N, C, H, W], got {tuple(images.shape)}")
        super().__init__(images, labels.long())

    @classmethod
    def from_uint8(cls, images: np.ndarray, labels: np.ndarray) -> "ImageDataset":
        return cls(torch.from_numpy(images.astype(np.float32) / 255.0), torch.from_numpy(labels.astype(np.int64)))

    def head(self, limit: Optional[int]) -> "ImageDataset":
        """The first `limit` examples, or everything when `limit` is None."""
        if limit is None or limit >= len(self):
            return self
        return ImageDataset(self.images[:limit], self.labels[:limit])

    def concat(self, other: "ImageDataset") -> "ImageDataset":
        return ImageDataset(torch.cat([self.images, other.images]), torch.cat([self.labels, other.labels]))


def load_dataset(config: DatasetConfig) -> Tuple[ImageDataset, ImageDataset]:
    """Reads the train and test splits of a dataset.

    Args:
        config: dataset name, directory and limits.

    Raises:
        ImproperlyConfiguredException: a required file is missing.
        ValidationException: a file is malformed.

    Returns:
        (train, test)
    """
    root = config.path
    if config.name == DatasetName.MNIST:
        (train_x, train_y), (test_x, test_y) = mnist_files(root)
        train = ImageDataset.from_uint8(read_idx_images(train_x), read_idx_labels(train_y))
        test = ImageDataset.from_uint8(read_idx_images(test_x), read_idx_labels(test_y))
    else:
        files, record = (
            (cifar10_files(root), CIFAR10_RECORD_BYTES)
            if config.name == DatasetName.CIFAR10
            else (cifar100_files(root), CIFAR100_RECORD_BYTES)
        )
        train = ImageDataset.from_uint8(*read_cifar_batches(files[0], record))
        test = ImageDataset.from_uint8(*read_cifar_batches(files[1], record))
    train, test = train.head(config.train_limit), test.head(config.test_limit)
    logger.info("loaded %s: %d train / %d test examples", config.name.value, len(train), len(test))
    return train, test

from .datasets import Batch, ImageDataset, TensorPairs, load_dataset
from .readers import read_cifar_batches, read_idx_images, read_idx_labels

__all__ = [
    "Batch",
    "ImageDataset",
    "TensorPairs",
    "load_dataset",
    "read_cifar_batches",
    "read_idx_images",
    "read_idx_labels",
]

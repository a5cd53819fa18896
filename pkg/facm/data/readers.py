import gzip
from logging import getLogger
from pathlib import Path
from typing import List, Tuple

import numpy as np

from facm.exceptions import ImproperlyConfiguredException, ValidationException

logger = getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD_BYTES = 3073
CIFAR100_RECORD_BYTES = 3074
CIFAR_IMAGE_BYTES = 3072


def _read_bytes(path: Path) -> bytes:
    """Reads a file, transparently decompressing `.gz` siblings."""
    if path.exists():
        return path.read_bytes()
    compressed = path.with_name(path.name + ".gz")
    if compressed.exists():
        return gzip.decompress(compressed.read_bytes())
    raise ImproperlyConfiguredException(detail=f"dataset file {path} (or {compressed.name}) does not exist")


def _idx_header(data: bytes, path: Path, expected_magic: int, dims: int) -> Tuple[int, ...]:
    header_size = 4 * (dims + 1)
    if len(data) < header_size:
        raise ValidationException(detail=f"{path} is too short to be an IDX file")
    magic = int.from_bytes(data[:4], "big")
    if magic != expected_magic:
        raise ValidationException(detail=f"{path} has magic {magic:#010x}, expected {expected_magic:#010x}")
    return tuple(int.from_bytes(data[4 * (k + 1) : 4 * (k + 2)], "big") for k in range(dims))


def read_idx_images(path: Path) -> np.ndarray:
    """Reads an IDX3 image file into a uint8 array of shape [N, 1, rows, cols]."""
    data = _read_bytes(path)
    count, rows, cols = _idx_header(data, path, IDX_IMAGES_MAGIC, 3)
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    if pixels.size != count * rows * cols:
        raise ValidationException(
            detail=f"{path} declares {count} images of {rows}x{cols} but holds {pixels.size} bytes"
        )
    return pixels.reshape(count, 1, rows, cols)


def read_idx_labels(path: Path) -> np.ndarray:
    """Reads an IDX1 label file into an int64 array."""
    data = _read_bytes(path)
    (count,) = _idx_header(data, path, IDX_LABELS_MAGIC, 1)
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size != count:
        raise ValidationException(detail=f"{path} declares {count} labels but holds {labels.size}")
    return labels.astype(np.int64)


def read_cifar_batches(paths: List[Path], record_bytes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Reads CIFAR binary batches.

    CIFAR-10 records are one label byte followed by 3072 pixel bytes; CIFAR-100 records carry a coarse and a fine
    label byte, of which the fine label is returned.

    Returns:
        uint8 images of shape [N, 3, 32, 32] and int64 labels.
    """
    images, labels = [], []
    label_offset = record_bytes - CIFAR_IMAGE_BYTES - 1
    for path in paths:
        data = _read_bytes(path)
        if len(data) % record_bytes:
            raise ValidationException(
                detail=f"{path} holds {len(data)} bytes, not a multiple of the {record_bytes}-byte record"
            )
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, record_bytes)
        labels.append(records[:, label_offset].astype(np.int64))
        images.append(records[:, record_bytes - CIFAR_IMAGE_BYTES :].reshape(-1, 3, 32, 32))
        logger.debug("read %d records from %s", records.shape[0], path)
    return np.concatenate(images), np.concatenate(labels)


def mnist_files(root: Path) -> Tuple[Tuple[Path, Path], Tuple[Path, Path]]:
    return (
        (root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"),
        (root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte"),
    )


def cifar10_files(root: Path) -> Tuple[List[Path], List[Path]]:
    if (root / "cifar-10-batches-bin").is_dir():
        root = root / "cifar-10-batches-bin"
    return [root / f"data_batch_{k}.bin" for k in range(1, 6)], [root / "test_batch.bin"]


def cifar100_files(root: Path) -> Tuple[List[Path], List[Path]]:
    if (root / "cifar-100-binary").is_dir():
        root = root / "cifar-100-binary"
    return [root / "train.bin"], [root / "test.bin"]

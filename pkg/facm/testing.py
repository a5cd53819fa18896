from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from facm.config import (
    AttackSpec,
    BackboneSpec,
    CMPDConfig,
    DatasetConfig,
    DecisionConfig,
    EvalConfig,
    ExperimentConfig,
    FinetuneConfig,
    TrainConfig,
)
from facm.data import ImageDataset
from facm.data.readers import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, mnist_files
from facm.enums import ArchId, AttackFamily, CorrectionMode
from facm.harness import FACMSystem
from facm.utils.seeding import make_generator

__all__ = [
    "create_test_config",
    "create_test_system",
    "synthetic_dataset",
    "write_idx_files",
]

TEST_INPUT_SHAPE = (1, 28, 28)


def synthetic_dataset(
    size: int,
    *,
    num_classes: int = 10,
    input_shape: Tuple[int, int, int] = TEST_INPUT_SHAPE,
    seed: int = 0,
) -> ImageDataset:
    """Noisy images carrying a bright square whose position encodes the label.

    Labels cycle through the classes, so every prefix of the set is close to balanced.
    """
    generator = make_generator(seed, "synthetic")
    channels, height, width = input_shape
    labels = torch.arange(size) % num_classes
    images = 0.2 * torch.rand((size, channels, height, width), generator=generator)
    side = max(2, min(height, width) // 5)
    per_row = max(1, width // side)
    for index, label in enumerate(labels.tolist()):
        row, col = divmod(label, per_row)
        top, left = (row * side) % (height - side + 1), col * side
        images[index, :, top : top + side, left : left + side] = 1.0
    return ImageDataset(images.clamp(0.0, 1.0), labels)


def _idx_bytes(magic: int, array: np.ndarray) -> bytes:
    header = magic.to_bytes(4, "big") + b"".join(int(dim).to_bytes(4, "big") for dim in array.shape)
    return header + array.astype(np.uint8).tobytes()


def write_idx_files(root: Union[str, Path], train: ImageDataset, test: ImageDataset) -> Path:
    """Writes two single-channel datasets as an MNIST directory of IDX files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for (images_path, labels_path), split in zip(mnist_files(root), (train, test)):
        pixels = (split.images[:, 0] * 255).round().to(torch.uint8).numpy()
        images_path.write_bytes(_idx_bytes(IDX_IMAGES_MAGIC, pixels))
        labels_path.write_bytes(_idx_bytes(IDX_LABELS_MAGIC, split.labels.numpy()))
    return root


def create_test_config(
    output_dir: Union[str, Path] = "artifacts",
    data_dir: Union[str, Path] = "data",
    *,
    seed: int = 0,
    correction_mode: Optional[CorrectionMode] = CorrectionMode.FACM,
    **overrides: Any,
) -> ExperimentConfig:
    """A complete configuration that trains and evaluates a tiny MNISTNet in seconds.

    Args:
        output_dir: artifact directory.
        data_dir: directory the IDX files are read from.
        seed: root seed.
        correction_mode: composition of the correction set.
        **overrides: top-level fields replacing the tiny defaults.

    Returns:
        ExperimentConfig
    """
    fields: Dict[str, Any] = {
        "seed": seed,
        "dataset": DatasetConfig(path=Path(data_dir)),
        "backbone": BackboneSpec(arch_id=ArchId.MNISTNET, channels=[4, 4, 8, 8], hidden=16, seed=seed),
        "train": TrainConfig(epochs=1, batch_size=16, lr=0.05),
        "fa": FinetuneConfig(epochs=1, batch_size=16, lr=0.01),
        "cmpd": CMPDConfig(epochs=1, batch_size=16, hidden_channels=4, bottleneck_channels=8),
        "decision": DecisionConfig(
            epochs=1, batch_size=16, eps_list=[0.1, 0.3], alpha_list=[0.05, 0.1], pgd_steps=2, hidden=16
        ),
        "attacks": [
            AttackSpec(family=AttackFamily.FGSM, eps=0.3, alpha=0.3),
            AttackSpec(family=AttackFamily.PGD, eps=0.3, alpha=0.1, steps=3),
        ],
        "eval": EvalConfig(
            batch_size=16,
            white_box_limit=16,
            square_limit=8,
            sweep_eps=[0.1, 0.3],
            timing_limit=8,
            timing_attack="fgsm",
        ),
        "correction_mode": correction_mode,
        "output_dir": Path(output_dir),
    }
    fields.update(overrides)
    return ExperimentConfig(**fields)


def create_test_system(
    mode: CorrectionMode = CorrectionMode.FACM, *, seed: int = 0, config: Optional[ExperimentConfig] = None
) -> FACMSystem:
    """A freshly initialized, untrained tiny system in evaluation mode."""
    config = config or create_test_config(seed=seed, correction_mode=mode)
    return FACMSystem.build(config).eval()

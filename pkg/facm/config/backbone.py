from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, confloat, conint, validator

from facm.config.base import OptimizationConfig
from facm.constants import DEFAULT_INPUT_SHAPES, DEFAULT_TAP_NAMES
from facm.enums import ArchId, DatasetName

DEFAULT_CHANNELS = {
    ArchId.MNISTNET: [32, 32, 64, 64],
    ArchId.SMALLCNN_CIFAR: [32, 64, 128],
}
DEFAULT_HIDDEN = {
    ArchId.MNISTNET: 200,
    ArchId.SMALLCNN_CIFAR: 256,
}


class BackboneSpec(BaseModel):
    """Architecture of the tappable classifier f.

    Layer widths are not fixed by any reference; the defaults below are recorded here and travel with every
    checkpoint.
    """

    class Config:
        extra = "forbid"

    arch_id: ArchId = ArchId.MNISTNET
    """Architecture identifier."""
    num_classes: conint(gt=0) = 10  # type: ignore[valid-type]
    """Number of classes m."""
    tap_names: Optional[List[str]] = None
    """Ordered intermediate layers whose activations are exposed, one per auxiliary classifier. Defaults per
    architecture."""
    input_shape: Optional[Tuple[int, int, int]] = None
    """(channels, height, width); defaults per architecture."""
    channels: Optional[List[int]] = None
    """Convolution widths in forward order; defaults per architecture."""
    hidden: Optional[conint(gt=0)] = None  # type: ignore[valid-type]
    """Width of the hidden fully connected layers."""
    seed: Optional[conint(ge=0, lt=2**64)] = None  # type: ignore[valid-type]
    """Seed of the `init` stream. Filled from the experiment seed when omitted."""

    @validator("tap_names", always=True)
    def tap_names_default(  # pylint: disable=no-self-argument
        cls, v: Optional[List[str]], values: Dict[str, Any]
    ) -> Optional[List[str]]:
        if v is None and "arch_id" in values:
            return list(DEFAULT_TAP_NAMES[values["arch_id"]])
        if v is not None and not v:
            raise ValueError("at least one tap is required")
        return v

    @validator("input_shape", always=True)
    def input_shape_default(  # pylint: disable=no-self-argument
        cls, v: Optional[Tuple[int, int, int]], values: Dict[str, Any]
    ) -> Optional[Tuple[int, int, int]]:
        if v is None and "arch_id" in values:
            return DEFAULT_INPUT_SHAPES[values["arch_id"]]
        return v

    @validator("channels", always=True)
    def channels_default(  # pylint: disable=no-self-argument
        cls, v: Optional[List[int]], values: Dict[str, Any]
    ) -> Optional[List[int]]:
        if v is None and "arch_id" in values:
            return list(DEFAULT_CHANNELS[values["arch_id"]])
        return v

    @validator("hidden", always=True)
    def hidden_default(  # pylint: disable=no-self-argument
        cls, v: Optional[int], values: Dict[str, Any]
    ) -> Optional[int]:
        if v is None and "arch_id" in values:
            return DEFAULT_HIDDEN[values["arch_id"]]
        return v

    @property
    def n(self) -> int:
        """Number of auxiliary classifiers plus one."""
        return len(self.tap_names or []) + 1

    @classmethod
    def preset(cls, dataset: DatasetName, seed: Optional[int] = None) -> "BackboneSpec":
        """The backbone used for a dataset."""
        if dataset == DatasetName.MNIST:
            return cls(arch_id=ArchId.MNISTNET, num_classes=10, seed=seed)
        return cls(
            arch_id=ArchId.SMALLCNN_CIFAR, num_classes=100 if dataset == DatasetName.CIFAR100 else 10, seed=seed
        )


class TrainConfig(OptimizationConfig):
    """Backbone training.

    `trades_beta = 0` selects natural training, anything larger selects TRADES with a KL-PGD inner maximization.
    """

    lr: confloat(gt=0) = 0.05  # type: ignore[valid-type]
    trades_beta: confloat(ge=0) = 0.0  # type: ignore[valid-type]
    """Weight of the robustness term; 0 means natural training."""
    trades_eps: float = 0.3
    """L-infinity radius of the inner maximization."""
    trades_alpha: float = 0.01
    """Inner step size."""
    trades_steps: conint(ge=1) = 40  # type: ignore[valid-type]
    """Inner PGD steps."""

    @property
    def is_trades(self) -> bool:
        return self.trades_beta > 0

    @classmethod
    def preset(cls, dataset: DatasetName, trades: bool = False) -> "TrainConfig":
        if dataset == DatasetName.MNIST:
            base = cls(lr=0.05, epochs=10, batch_size=128)
            if trades:
                return base.copy(
                    update={"trades_beta": 6.0, "trades_eps": 0.3, "trades_alpha": 0.01, "trades_steps": 40}
                )
            return base
        base = cls(lr=0.05, epochs=30, batch_size=128)
        if trades:
            return base.copy(
                update={"trades_beta": 6.0, "trades_eps": 8 / 255, "trades_alpha": 2 / 255, "trades_steps": 10}
            )
        return base

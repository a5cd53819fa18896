from typing import TYPE_CHECKING, List, Optional

from pydantic import confloat, conint, validator
from typing_extensions import Literal

from facm.config.base import OptimizationConfig
from facm.enums import DatasetName, FinetuneMode
from facm.utils.numbers import parse_fraction

if TYPE_CHECKING:
    from facm.config.backbone import TrainConfig


class FinetuneConfig(OptimizationConfig):
    """Fine-tuning of auxiliary classifiers and FA correction modules.

    When `mode` is 'trades' and the inner-attack fields are left empty they are taken from the backbone's
    [TrainConfig][facm.config.TrainConfig] via `resolve()`.
    """

    lr: confloat(gt=0) = 0.0005  # type: ignore[valid-type]
    epochs: conint(ge=1) = 10  # type: ignore[valid-type]
    mode: FinetuneMode = FinetuneMode.NATURAL
    """Objective: cross-entropy, or cross-entropy plus the TRADES KL term."""
    trades_beta: Optional[confloat(ge=0)] = None  # type: ignore[valid-type]
    trades_eps: Optional[float] = None
    trades_alpha: Optional[float] = None
    trades_steps: Optional[conint(ge=1)] = None  # type: ignore[valid-type]

    @validator("trades_eps", "trades_alpha", pre=True)
    def budget_fraction(cls, v: Optional[object]) -> Optional[float]:  # pylint: disable=no-self-argument
        return None if v is None else parse_fraction(v)  # type: ignore[arg-type]

    def resolve(self, train: "TrainConfig") -> "FinetuneConfig":
        """Fills the unset inner-attack parameters from the backbone training configuration."""
        return self.copy(
            update={
                "trades_beta": self.trades_beta if self.trades_beta is not None else (train.trades_beta or 6.0),
                "trades_eps": self.trades_eps if self.trades_eps is not None else train.trades_eps,
                "trades_alpha": self.trades_alpha if self.trades_alpha is not None else train.trades_alpha,
                "trades_steps": self.trades_steps if self.trades_steps is not None else train.trades_steps,
            }
        )


class CMPDConfig(OptimizationConfig):
    """Conditional autoencoder fine-tuning with the prediction-matching KL objective."""

    lr: confloat(gt=0) = 0.001  # type: ignore[valid-type]
    epochs: conint(ge=1) = 30  # type: ignore[valid-type]
    hidden_channels: conint(gt=0) = 32  # type: ignore[valid-type]
    """Channels of the first encoder layer (and last hidden decoder layer)."""
    bottleneck_channels: conint(gt=0) = 64  # type: ignore[valid-type]
    """Channels of the bottleneck feature map; spatial size is input/4."""
    condition: Literal["softmax", "logits"] = "softmax"
    """Auxiliary outputs fed to the condition heads."""


class DecisionConfig(OptimizationConfig):
    """Decision-module training: adversarial augmentation followed by focal-loss training.

    `epochs` is the number of passes T over the augmented dataset.
    """

    lr: confloat(gt=0) = 0.1  # type: ignore[valid-type]
    epochs: conint(ge=1) = 20  # type: ignore[valid-type]
    eps_list: List[float] = [0.1, 0.2, 0.3]
    """Augmentation radii."""
    alpha_list: List[float] = [0.01, 0.02, 0.03]
    """Augmentation step sizes, one per radius."""
    pgd_steps: conint(ge=1) = 40  # type: ignore[valid-type]
    """PGD steps per augmentation pass."""
    random_start: bool = False
    """Start each augmentation PGD from a random point in the ball instead of zero."""
    gamma: confloat(ge=0) = 2.0  # type: ignore[valid-type]
    """Focusing parameter of the focal loss."""
    symmetric_focal: bool = False
    """Add the negative-label term to the focal loss."""
    hidden: conint(gt=0) = 256  # type: ignore[valid-type]
    """Width of the two hidden layers of the perceptron."""
    train_limit: Optional[conint(gt=0)] = 10000  # type: ignore[valid-type]
    """Clean examples used to build the augmented set; `None` uses the full training set."""

    @validator("eps_list", "alpha_list", pre=True)
    def budget_fractions(cls, v: object) -> object:  # pylint: disable=no-self-argument
        if isinstance(v, (list, tuple)):
            return [parse_fraction(item) for item in v]
        return v

    @classmethod
    def preset(cls, dataset: DatasetName) -> "DecisionConfig":
        if dataset == DatasetName.MNIST:
            return cls(epochs=20, eps_list=[0.1, 0.2, 0.3], alpha_list=[0.01, 0.02, 0.03], pgd_steps=40)
        return cls(
            epochs=10,
            eps_list=[2 / 255, 4 / 255, 8 / 255],
            alpha_list=[0.3 / 255, 0.4 / 255, 0.9 / 255],
            pgd_steps=20,
        )

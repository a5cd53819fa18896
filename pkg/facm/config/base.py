from typing import List

from pydantic import BaseModel, confloat, conint

from facm.enums import OptimizerName


class OptimizationConfig(BaseModel):
    """Optimizer and schedule shared by every training phase.

    Every phase uses SGD and a multistep schedule that decays the learning rate by 0.1 at 1/4 and 3/4 of the total
    epochs.
    """

    class Config:
        extra = "forbid"

    optimizer: OptimizerName = OptimizerName.SGD
    """Only SGD is supported."""
    lr: confloat(gt=0) = 0.01  # type: ignore[valid-type]
    """Initial learning rate."""
    momentum: confloat(ge=0, lt=1) = 0.9  # type: ignore[valid-type]
    """SGD momentum."""
    weight_decay: confloat(ge=0) = 5e-4  # type: ignore[valid-type]
    """L2 penalty applied by the optimizer."""
    epochs: conint(ge=1) = 10  # type: ignore[valid-type]
    """Number of passes over the training set."""
    batch_size: conint(ge=1) = 128  # type: ignore[valid-type]
    """Examples per optimizer step."""
    lr_decay: confloat(gt=0, le=1) = 0.1  # type: ignore[valid-type]
    """Multiplicative decay applied at each milestone."""
    progress: bool = False
    """Show a progress bar per epoch."""

    @property
    def milestones(self) -> List[int]:
        """Epoch indices at which the learning rate decays: floor(epochs/4) and floor(3*epochs/4)."""
        return [self.epochs // 4, (3 * self.epochs) // 4]

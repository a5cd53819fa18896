from typing import TYPE_CHECKING, Callable, Optional

import torch
import torch.nn.functional as F

from facm.enums import Setting
from facm.exceptions import CapabilityException, ImproperlyConfiguredException
from facm.training import log_floor
from facm.utils.seeding import make_generator

if TYPE_CHECKING:
    from facm.harness.system import FACMSystem

Scores = Callable[[torch.Tensor], torch.Tensor]


class TargetAdapter:
    """What an adversary may call on the system under attack.

    `log_probs` is differentiable and feeds gradient attacks; `predict` returns probabilities without gradients and
    is the only thing query attacks use. Both calls are counted.
    """

    def __init__(
        self,
        setting: Setting,
        predict: Scores,
        log_probs: Optional[Scores] = None,
        reset: Optional[Callable[[], None]] = None,
    ):
        self.setting = setting
        self._predict = predict
        self._log_probs = log_probs
        self._reset = reset
        self.gradient_calls = 0
        self.queries = 0

    @property
    def differentiable(self) -> bool:
        return self._log_probs is not None

    def log_probs(self, inputs: torch.Tensor) -> torch.Tensor:
        """Differentiable log-probabilities.

        Raises:
            CapabilityException: the adapter is black-box only.
        """
        if self._log_probs is None:
            raise CapabilityException(detail=f"{self.setting.value} target is black-box only and exposes no gradient")
        self.gradient_calls += 1
        return self._log_probs(inputs)

    @torch.no_grad()
    def predict(self, inputs: torch.Tensor) -> torch.Tensor:
        self.queries += inputs.shape[0]
        return self._predict(inputs)

    def reset(self) -> None:
        """Restores the predict stream to its initial seed and clears the counters."""
        if self._reset is not None:
            self._reset()
        self.gradient_calls = 0
        self.queries = 0

    def black_box(self) -> "TargetAdapter":
        """The same predictor without gradient access."""
        return TargetAdapter(self.setting, self._predict, None, self._reset)


def make_target(
    system: "FACMSystem",
    setting: Setting,
    *,
    seed: int = 0,
    tau: int = 1,
    replacement: bool = False,
    black_box: bool = False,
) -> TargetAdapter:
    """Wraps a system for an adversary.

    Args:
        system: the assembled defense.
        setting: 'grey_box' differentiates the backbone only; 'white_box' differentiates the expected FACM output.
        seed: seed of the stochastic predictor used by the white-box `predict`.
        tau: members averaged by the white-box `predict`.
        replacement: member selection with replacement.
        black_box: drop gradient access.

    Raises:
        ImproperlyConfiguredException: white-box access to a system without a decision module.

    Returns:
        TargetAdapter
    """
    setting = Setting(setting)
    if setting == Setting.GREY_BOX:
        backbone = system.backbone

        def predict_grey(inputs: torch.Tensor) -> torch.Tensor:
            return F.softmax(backbone(inputs), dim=1)

        def log_probs_grey(inputs: torch.Tensor) -> torch.Tensor:
            return F.log_softmax(backbone(inputs), dim=1)

        return TargetAdapter(setting, predict_grey, None if black_box else log_probs_grey)

    if system.decision is None:
        raise ImproperlyConfiguredException(detail="white-box targets need a trained decision module")
    holder = {"generator": make_generator(seed, "attack", "white-box-predict")}

    def predict_white(inputs: torch.Tensor) -> torch.Tensor:
        return system.predict(inputs, tau=tau, generator=holder["generator"], replacement=replacement).probabilities

    def log_probs_white(inputs: torch.Tensor) -> torch.Tensor:
        return log_floor(system.surrogate(inputs))

    def reset() -> None:
        holder["generator"] = make_generator(seed, "attack", "white-box-predict")

    return TargetAdapter(setting, predict_white, None if black_box else log_probs_white, reset)

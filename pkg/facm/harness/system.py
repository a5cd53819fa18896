from logging import getLogger
from typing import List, Optional, Sequence, Union

import torch
from torch import nn

from facm.backbone import TappableClassifier, build_backbone
from facm.cmpd import ConditionalAutoencoder, build_conditional_autoencoder
from facm.config import ExperimentConfig
from facm.correction import AuxiliaryClassifier, FACorrectionModule, build_auxiliaries, build_fa_modules
from facm.decision import (
    CorrectionSet,
    DecisionModule,
    FACMPrediction,
    build_decision_module,
    facm_predict,
    facm_surrogate,
)
from facm.enums import CorrectionMode
from facm.exceptions import ImproperlyConfiguredException

logger = getLogger(__name__)


class FACMSystem:
    """A backbone together with its correction members and decision module.

    The decision module is optional until the decision stage has run; the stochastic predictor and the surrogate
    need it.
    """

    def __init__(
        self,
        backbone: TappableClassifier,
        auxs: Sequence[AuxiliaryClassifier],
        fas: Sequence[FACorrectionModule],
        cae: Optional[ConditionalAutoencoder] = None,
        decision: Optional[DecisionModule] = None,
        mode: Union[CorrectionMode, str] = CorrectionMode.FACM,
    ):
        self.backbone = backbone
        self.auxs = nn.ModuleList(auxs)
        self.fas = nn.ModuleList(fas)
        self.mode = CorrectionMode(mode)
        self.cae = cae if self.mode == CorrectionMode.FACM else None
        self.correction_set = CorrectionSet(backbone, list(self.auxs), list(self.fas), self.cae, self.mode)
        self.decision = decision
        if decision is not None:
            self._check_decision(decision)

    @classmethod
    def build(cls, config: ExperimentConfig) -> "FACMSystem":
        """Freshly initialized components for a configuration, every one drawn from its own `init` stream."""
        backbone = build_backbone(config.backbone)
        mode = config.mode
        cae = None
        if mode == CorrectionMode.FACM:
            cae = build_conditional_autoencoder(
                backbone,
                config.seed,
                config.cmpd.hidden_channels,
                config.cmpd.bottleneck_channels,
                config.cmpd.condition,
            )
        system = cls(
            backbone,
            build_auxiliaries(backbone, config.seed),
            build_fa_modules(backbone, config.seed),
            cae,
            mode=mode,
        )
        system.decision = build_decision_module(system.correction_set, config.seed, config.decision.hidden)
        return system.to(config.device)

    def _check_decision(self, decision: DecisionModule) -> None:
        width = self.backbone.n * self.backbone.num_classes
        if decision.in_features != width or decision.num_members != len(self.correction_set):
            raise ImproperlyConfiguredException(
                detail=f"decision module maps {decision.in_features} -> {decision.num_members}, "
                f"the {self.mode.value} set needs {width} -> {len(self.correction_set)}"
            )

    def attach_decision(self, decision: DecisionModule) -> None:
        self._check_decision(decision)
        self.decision = decision

    def modules(self) -> List[nn.Module]:
        modules = self.correction_set.modules()
        if self.decision is not None:
            modules.append(self.decision)
        return modules

    def eval(self) -> "FACMSystem":
        for module in self.modules():
            module.eval()
        return self

    def to(self, device: Union[str, torch.device]) -> "FACMSystem":
        for module in self.modules():
            module.to(device)
        return self

    @property
    def device(self) -> torch.device:
        return next(self.backbone.parameters()).device

    def _require_decision(self) -> DecisionModule:
        if self.decision is None:
            raise ImproperlyConfiguredException(detail="the decision module has not been trained")
        return self.decision

    def surrogate(self, inputs: torch.Tensor) -> torch.Tensor:
        return facm_surrogate(self.correction_set, self._require_decision(), inputs)

    def predict(
        self, inputs: torch.Tensor, *, tau: int, generator: torch.Generator, replacement: bool = False
    ) -> FACMPrediction:
        return facm_predict(
            self.correction_set, self._require_decision(), inputs, tau, generator, replacement=replacement
        )

    @torch.no_grad()
    def backbone_probabilities(self, inputs: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.backbone(inputs), dim=1)

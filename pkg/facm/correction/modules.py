from typing import List, Sequence

import torch
from torch import nn

from facm.backbone import FeatureTaps, TappableClassifier
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.utils.seeding import seeded


class AuxiliaryClassifier(nn.Module):
    """One fully connected layer f_i mapping the i-th tap to class logits."""

    def __init__(self, index: int, in_features: int, num_classes: int):
        super().__init__()
        self.index = index
        self.in_features = in_features
        self.num_classes = num_classes
        self.fc = nn.Linear(in_features, num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.fc(features)


class FACorrectionModule(nn.Module):
    """One fully connected layer phi_i over the concatenation of backbone and auxiliary logits."""

    def __init__(self, index: int, num_classes: int):
        super().__init__()
        self.index = index
        self.num_classes = num_classes
        self.fc = nn.Linear(2 * num_classes, num_classes)

    def forward(self, logits: torch.Tensor, aux_logits: torch.Tensor) -> torch.Tensor:
        return self.fc(torch.cat([logits, aux_logits], dim=1))


def aux_forward(aux: AuxiliaryClassifier, taps: FeatureTaps) -> torch.Tensor:
    """Logits f_i(l_i(x)) from precomputed taps.

    Raises:
        ImproperlyConfiguredException: the tap does not exist or its width differs from the classifier's input.
    """
    if not 1 <= aux.index <= len(taps.taps):
        raise ImproperlyConfiguredException(
            detail=f"auxiliary classifier {aux.index} has no tap among {len(taps.taps)}"
        )
    features = taps.taps[aux.index - 1]
    if features.shape[1] != aux.in_features:
        raise ImproperlyConfiguredException(
            detail=f"auxiliary classifier {aux.index} expects {aux.in_features} features, tap has {features.shape[1]}"
        )
    return aux(features)


def fa_forward(fa: FACorrectionModule, taps: FeatureTaps, aux: AuxiliaryClassifier) -> torch.Tensor:
    """Logits phi_i(f(x) ⊕ f_i(l_i(x))).

    Raises:
        ImproperlyConfiguredException: `fa` and `aux` belong to different taps.
    """
    if fa.index != aux.index:
        raise ImproperlyConfiguredException(detail=f"FA module {fa.index} cannot be paired with auxiliary {aux.index}")
    return fa(taps.logits, aux_forward(aux, taps))


def build_auxiliaries(model: TappableClassifier, seed: int) -> nn.ModuleList:
    """One auxiliary classifier per tap, initialized from the `init` stream."""
    with seeded(seed, "init", "aux"):
        return nn.ModuleList(
            [AuxiliaryClassifier(i, width, model.num_classes) for i, width in enumerate(model.tap_widths, start=1)]
        )


def build_fa_modules(model: TappableClassifier, seed: int) -> nn.ModuleList:
    """One FA correction module per tap, initialized from the `init` stream."""
    with seeded(seed, "init", "fa"):
        return nn.ModuleList([FACorrectionModule(i, model.num_classes) for i in range(1, len(model.tap_widths) + 1)])


@torch.no_grad()
def classification_sequence(
    model: TappableClassifier, auxs: Sequence[AuxiliaryClassifier], batch: torch.Tensor, i: int
) -> torch.Tensor:
    """Classification sequences S_i of a batch.

    Args:
        model: backbone providing the taps.
        auxs: auxiliary classifiers f_1..f_{n-1}.
        batch: images.
        i: sequence length; `i = n` appends the backbone's own prediction.

    Raises:
        ValidationException: `i` is outside 1..n.

    Returns:
        Long tensor [batch, i]; row k holds argmax f_1 .. argmax f_i for example k. Ties go to the lowest class.
    """
    n = len(auxs) + 1
    if not 1 <= i <= n:
        raise ValidationException(detail=f"sequence length must be within 1..{n}, got {i}")
    taps = model.forward_with_taps(batch)
    return sequence_from_taps(auxs, taps, i)


def sequence_from_taps(auxs: Sequence[AuxiliaryClassifier], taps: FeatureTaps, i: int) -> torch.Tensor:
    entries: List[torch.Tensor] = [aux_forward(aux, taps).argmax(dim=1) for aux in list(auxs)[: min(i, len(auxs))]]
    if i > len(auxs):
        entries.append(taps.logits.argmax(dim=1))
    return torch.stack(entries, dim=1)

from typing import NamedTuple, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn
from typing_extensions import Literal

from facm.backbone import FeatureTaps, TappableClassifier
from facm.correction import AuxiliaryClassifier, aux_forward
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.utils.seeding import seeded


class ConditionVector(NamedTuple):
    """Condition xi_i(x): auxiliary outputs 1..i concatenated in order."""

    values: torch.Tensor
    """[batch, i * m]; zero width when i = 0."""
    index: int
    """The i in xi_i."""


def build_condition(
    auxs: Sequence[AuxiliaryClassifier],
    taps: FeatureTaps,
    i: int,
    normalize: Literal["softmax", "logits"] = "softmax",
) -> ConditionVector:
    """Concatenates the outputs of the first `i` auxiliary classifiers.

    Args:
        auxs: auxiliary classifiers f_1..f_{n-1}.
        taps: taps of the input being reconstructed.
        i: number of auxiliary outputs, 0..n-1.
        normalize: concatenate softmax probabilities (default) or raw logits.

    Raises:
        ValidationException: `i` is out of range.

    Returns:
        ConditionVector
    """
    if not 0 <= i <= len(auxs):
        raise ValidationException(detail=f"condition index must be within 0..{len(auxs)}, got {i}")
    batch = taps.logits.shape[0]
    if i == 0:
        return ConditionVector(taps.logits.new_zeros((batch, 0)), 0)
    blocks = [aux_forward(aux, taps) for aux in list(auxs)[:i]]
    if normalize == "softmax":
        blocks = [F.softmax(block, dim=1) for block in blocks]
    return ConditionVector(torch.cat(blocks, dim=1), i)


class AutoencoderCore(nn.Module):
    """Encoder and decoder shared by every g_i.

    The encoder has three convolutions and reduces the spatial size by 4; the decoder mirrors it with two
    transposed convolutions and an output convolution followed by a sigmoid.
    """

    def __init__(self, in_channels: int, hidden_channels: int = 32, bottleneck_channels: int = 64):
        super().__init__()
        self.bottleneck_channels = bottleneck_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(in_channels, hidden_channels, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(hidden_channels, bottleneck_channels, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(bottleneck_channels, bottleneck_channels, 4, stride=2, padding=1),
            nn.ReLU(),
        )
        self.decoder_in = nn.ConvTranspose2d(bottleneck_channels, bottleneck_channels, 4, stride=2, padding=1)
        self.decoder = nn.Sequential(
            nn.ReLU(),
            nn.ConvTranspose2d(bottleneck_channels, hidden_channels, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(hidden_channels, in_channels, 3, padding=1),
            nn.Sigmoid(),
        )

    def encode(self, inputs: torch.Tensor, shift: Optional[torch.Tensor] = None) -> torch.Tensor:
        code = self.encoder(inputs)
        if shift is not None:
            code = code + shift[:, :, None, None]
        return code

    def decode(self, code: torch.Tensor, shift: Optional[torch.Tensor] = None) -> torch.Tensor:
        hidden = self.decoder_in(code)
        if shift is not None:
            hidden = hidden + shift[:, :, None, None]
        return torch.clamp(self.decoder(hidden), 0.0, 1.0)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(inputs))


class ConditionHead(nn.Module):
    """Fully connected layers injecting xi_i at the bottleneck and at the first decoder layer."""

    def __init__(self, index: int, condition_width: int, channels: int):
        super().__init__()
        self.index = index
        self.condition_width = condition_width
        self.encoder_fc = nn.Linear(condition_width, channels)
        self.decoder_fc = nn.Linear(condition_width, channels)

    def forward(self, condition: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.encoder_fc(condition), self.decoder_fc(condition)


class Autoencoder(nn.Module):
    """Unconditional autoencoder g of the matching-prediction-distribution baseline."""

    def __init__(self, core: AutoencoderCore):
        super().__init__()
        self.core = core

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        return self.core(inputs)


class ConditionalAutoencoder(nn.Module):
    """The family g_0..g_{n-1}: one shared core and a condition head for every i >= 1.

    `g_0` has no head and reduces to the unconditional autoencoder over the same core.
    """

    def __init__(
        self,
        in_channels: int,
        num_classes: int,
        n: int,
        hidden_channels: int = 32,
        bottleneck_channels: int = 64,
        condition: Literal["softmax", "logits"] = "softmax",
    ):
        super().__init__()
        self.num_classes = num_classes
        self.n = n
        self.condition = condition
        self.core = AutoencoderCore(in_channels, hidden_channels, bottleneck_channels)
        self.heads = nn.ModuleList(
            [ConditionHead(i, i * num_classes, bottleneck_channels) for i in range(1, n)]
        )

    def head(self, i: int) -> Optional[ConditionHead]:
        if not 0 <= i < self.n:
            raise ValidationException(detail=f"CMPD index must be within 0..{self.n - 1}, got {i}")
        return None if i == 0 else self.heads[i - 1]

    def forward(self, inputs: torch.Tensor, condition: ConditionVector) -> torch.Tensor:
        return cae_forward(self, inputs, condition)

    def unconditional(self) -> Autoencoder:
        """An unconditional autoencoder sharing this core."""
        return Autoencoder(self.core)


def build_conditional_autoencoder(
    model: TappableClassifier,
    seed: int,
    hidden_channels: int = 32,
    bottleneck_channels: int = 64,
    condition: Literal["softmax", "logits"] = "softmax",
) -> ConditionalAutoencoder:
    """Conditional autoencoder family matching a backbone's input shape, class count and tap count."""
    in_channels, height, width = model.input_shape
    if height % 4 or width % 4:
        raise ImproperlyConfiguredException(detail=f"autoencoder needs sides divisible by 4, got {height}x{width}")
    with seeded(seed, "init", "cmpd"):
        return ConditionalAutoencoder(
            in_channels, model.num_classes, model.n, hidden_channels, bottleneck_channels, condition
        )


def cae_forward(cae: ConditionalAutoencoder, batch: torch.Tensor, cond: ConditionVector) -> torch.Tensor:
    """Reconstruction g_i(x) = decoder(encoder(x | xi_i) | xi_i).

    Raises:
        ImproperlyConfiguredException: the condition width does not match head `cond.index`.
    """
    head = cae.head(cond.index)
    if head is None:
        if cond.values.shape[1] != 0:
            raise ImproperlyConfiguredException(detail=f"g_0 takes no condition, got width {cond.values.shape[1]}")
        return cae.core(batch)
    if cond.values.shape[1] != head.condition_width:
        raise ImproperlyConfiguredException(
            detail=f"head {cond.index} expects a condition of width {head.condition_width}, got {cond.values.shape[1]}"
        )
    encoder_shift, decoder_shift = head(cond.values)
    return cae.core.decode(cae.core.encode(batch, encoder_shift), decoder_shift)


def cmpd_predict(
    cae: ConditionalAutoencoder,
    model: TappableClassifier,
    auxs: Sequence[AuxiliaryClassifier],
    batch: torch.Tensor,
    i: int,
    taps: Optional[FeatureTaps] = None,
) -> torch.Tensor:
    """Logits f(g_i(x)), with xi_i computed from `batch` itself.

    Raises:
        ValidationException: `i` is out of range.
    """
    if not 0 <= i < cae.n:
        raise ValidationException(detail=f"CMPD index must be within 0..{cae.n - 1}, got {i}")
    if taps is None:
        taps = model.forward_with_taps(batch)
    condition = build_condition(auxs, taps, i, normalize=cae.condition)
    return model(cae_forward(cae, batch, condition))


def mpd_predict(autoencoder: Autoencoder, model: TappableClassifier, batch: torch.Tensor) -> torch.Tensor:
    """Logits f(g(x)) of the unconditional baseline."""
    return model(autoencoder(batch))

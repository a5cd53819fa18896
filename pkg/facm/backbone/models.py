from typing import Dict, List, NamedTuple, Tuple, Type

import torch
import torch.nn.functional as F
from torch import nn

from facm.config import BackboneSpec
from facm.constants import MAX_TAP_WIDTH
from facm.enums import ArchId
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.utils.seeding import seeded


class FeatureTaps(NamedTuple):
    """Intermediate activations l_1..l_{n-1} and the logits of one forward pass."""

    taps: List[torch.Tensor]
    """Flattened activations, one [batch, width] tensor per tap, in forward order."""
    logits: torch.Tensor
    """Pre-softmax outputs [batch, m]."""

    def select(self, index: torch.Tensor) -> "FeatureTaps":
        """The rows of every tap and of the logits at `index`."""
        return FeatureTaps([tap[index] for tap in self.taps], self.logits[index])


def reduce_tap(activation: torch.Tensor) -> torch.Tensor:
    """Flattens an activation, average-pooling feature maps by 2 while they are wider than `MAX_TAP_WIDTH`."""
    while activation.dim() == 4 and activation[0].numel() > MAX_TAP_WIDTH and min(activation.shape[-2:]) >= 2:
        activation = F.avg_pool2d(activation, kernel_size=2)
    return activation.flatten(start_dim=1)


class TappableClassifier(nn.Module):
    """A classifier built from named stages whose outputs can be tapped.

    Subclasses fill `self.stages` in forward order; the last stage produces the logits.
    """

    arch_id: ArchId

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.stages = nn.ModuleDict()
        self.tap_widths: List[int] = []

    def _register_taps(self) -> None:
        names = list(self.stages.keys())
        tap_names = list(self.spec.tap_names or [])
        unknown = [name for name in tap_names if name not in names[:-1]]
        if unknown:
            raise ImproperlyConfiguredException(
                detail=f"{self.arch_id.value} has no tappable layer named {unknown}; choose from {names[:-1]}"
            )
        positions = [names.index(name) for name in tap_names]
        if positions != sorted(set(positions)):
            raise ImproperlyConfiguredException(detail=f"tap names {tap_names} are not unique and in forward order")
        with torch.no_grad():
            sample = torch.zeros(1, *self.input_shape)
            self.tap_widths = [tap.shape[1] for tap in self.forward_with_taps(sample).taps]

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return tuple(self.spec.input_shape)  # type: ignore[arg-type,return-value]

    @property
    def num_classes(self) -> int:
        return int(self.spec.num_classes)

    @property
    def n(self) -> int:
        return self.spec.n

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        for stage in self.stages.values():
            inputs = stage(inputs)
        return inputs

    def forward_with_taps(self, inputs: torch.Tensor) -> FeatureTaps:
        if tuple(inputs.shape[1:]) != self.input_shape:
            raise ValidationException(
                detail=f"expected inputs of shape [batch, {', '.join(map(str, self.input_shape))}], "
                f"got {list(inputs.shape)}"
            )
        wanted = set(self.spec.tap_names or [])
        taps: List[torch.Tensor] = []
        for name, stage in self.stages.items():
            inputs = stage(inputs)
            if name in wanted:
                taps.append(reduce_tap(inputs))
        return FeatureTaps(taps, inputs)


class MNISTNet(TappableClassifier):
    """Four 3x3 convolutions in two pooled blocks followed by three fully connected layers."""

    arch_id = ArchId.MNISTNET

    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        c1, c2, c3, c4 = spec.channels or []
        in_channels, height, width = self.input_shape
        hidden = int(spec.hidden or 200)
        self.stages["conv_block1"] = nn.Sequential(
            nn.Conv2d(in_channels, c1, 3),
            nn.ReLU(),
            nn.Conv2d(c1, c2, 3),
            nn.ReLU(),
            nn.MaxPool2d(2),
        )
        self.stages["conv_block2"] = nn.Sequential(
            nn.Conv2d(c2, c3, 3),
            nn.ReLU(),
            nn.Conv2d(c3, c4, 3),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Flatten(),
        )
        flat = c4 * (((height - 4) // 2 - 4) // 2) * (((width - 4) // 2 - 4) // 2)
        self.stages["fc1"] = nn.Sequential(nn.Linear(flat, hidden), nn.ReLU())
        self.stages["fc2"] = nn.Sequential(nn.Linear(hidden, hidden), nn.ReLU())
        self.stages["logits"] = nn.Linear(hidden, spec.num_classes)
        self._register_taps()


class SmallCNN(TappableClassifier):
    """Three padded convolution blocks with pooling, one hidden fully connected layer and the classifier."""

    arch_id = ArchId.SMALLCNN_CIFAR

    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        in_channels, height, width = self.input_shape
        channels = list(spec.channels or [])
        hidden = int(spec.hidden or 256)
        previous = in_channels
        for k, out in enumerate(channels, start=1):
            layers: List[nn.Module] = [nn.Conv2d(previous, out, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2)]
            if k == len(channels):
                layers.append(nn.Flatten())
            self.stages[f"conv_block{k}"] = nn.Sequential(*layers)
            previous = out
        scale = 2 ** len(channels)
        flat = previous * (height // scale) * (width // scale)
        self.stages["fc1"] = nn.Sequential(nn.Linear(flat, hidden), nn.ReLU())
        self.stages["logits"] = nn.Linear(hidden, spec.num_classes)
        self._register_taps()


ARCHITECTURES: Dict[ArchId, Type[TappableClassifier]] = {
    ArchId.MNISTNET: MNISTNet,
    ArchId.SMALLCNN_CIFAR: SmallCNN,
}


def build_backbone(spec: BackboneSpec) -> TappableClassifier:
    """Instantiates the classifier described by `spec`.

    Parameters are drawn from the `init` stream of `spec.seed`, so equal specs produce bit-identical models.

    Raises:
        ImproperlyConfiguredException: unknown architecture, invalid layer widths, unknown tap, or no seed.
    """
    if spec.seed is None:
        raise ImproperlyConfiguredException(detail="backbone seed is not set")
    try:
        architecture = ARCHITECTURES[ArchId(spec.arch_id)]
    except (KeyError, ValueError) as e:
        raise ImproperlyConfiguredException(detail=f"unknown architecture '{spec.arch_id}'") from e
    expected = 4 if architecture is MNISTNet else None
    if expected is not None and len(spec.channels or []) != expected:
        raise ImproperlyConfiguredException(detail=f"{spec.arch_id.value} needs exactly {expected} channel widths")
    if not spec.channels:
        raise ImproperlyConfiguredException(detail=f"{spec.arch_id.value} needs at least one channel width")
    with seeded(spec.seed, "init", "backbone"):
        try:
            return architecture(spec)
        except RuntimeError as e:
            raise ImproperlyConfiguredException(
                detail=f"{spec.arch_id.value} cannot process {spec.input_shape}: {e}"
            ) from e


def forward_with_taps(model: TappableClassifier, batch: torch.Tensor) -> FeatureTaps:
    """Tap activations and logits of one shared forward pass."""
    return model.forward_with_taps(batch)

import pytest
import torch

from facm.backbone import MNISTNet, SmallCNN, build_backbone, forward_with_taps
from facm.config import BackboneSpec
from facm.enums import ArchId
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.utils import parameter_hash


def test_build_is_deterministic_per_seed() -> None:
    spec = BackboneSpec(seed=0)
    assert parameter_hash(build_backbone(spec)) == parameter_hash(build_backbone(spec))
    assert parameter_hash(build_backbone(spec)) != parameter_hash(build_backbone(BackboneSpec(seed=1)))


def test_mnistnet_taps() -> None:
    model = build_backbone(BackboneSpec(seed=0))
    assert isinstance(model, MNISTNet)
    assert model.n == 4
    assert model.tap_widths == [1152, 1024, 200]
    inputs = torch.rand(3, 1, 28, 28)
    taps = forward_with_taps(model, inputs)
    assert [tap.shape for tap in taps.taps] == [(3, 1152), (3, 1024), (3, 200)]
    assert torch.allclose(taps.logits, model(inputs))


def test_smallcnn_taps() -> None:
    model = build_backbone(BackboneSpec(arch_id=ArchId.SMALLCNN_CIFAR, num_classes=100, seed=0))
    assert isinstance(model, SmallCNN)
    taps = model.forward_with_taps(torch.rand(2, 3, 32, 32))
    assert taps.logits.shape == (2, 100)
    assert len(taps.taps) == 3
    assert [tap.shape[1] for tap in taps.taps] == model.tap_widths


def test_select_rows() -> None:
    model = build_backbone(BackboneSpec(seed=0))
    taps = model.forward_with_taps(torch.rand(4, 1, 28, 28))
    picked = taps.select(torch.tensor([0, 2]))
    assert picked.logits.shape[0] == 2
    assert torch.equal(picked.taps[1], taps.taps[1][[0, 2]])


def test_wrong_input_shape() -> None:
    model = build_backbone(BackboneSpec(seed=0))
    with pytest.raises(ValidationException):
        model.forward_with_taps(torch.rand(2, 3, 32, 32))


@pytest.mark.parametrize(
    "spec",
    [
        BackboneSpec(seed=0, tap_names=["conv_block1", "nope"]),
        BackboneSpec(seed=0, tap_names=["fc1", "conv_block1"]),
        BackboneSpec(seed=0, tap_names=["logits"]),
        BackboneSpec(seed=0, channels=[8, 8]),
        BackboneSpec(seed=0, input_shape=(1, 8, 8)),
        BackboneSpec(),
    ],
)
def test_invalid_specs(spec: BackboneSpec) -> None:
    with pytest.raises(ImproperlyConfiguredException):
        build_backbone(spec)

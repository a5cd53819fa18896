import pytest
import torch

from facm.backbone import TappableClassifier, build_backbone
from facm.cmpd import (
    ConditionalAutoencoder,
    build_condition,
    build_conditional_autoencoder,
    cae_forward,
    cmpd_kl_loss,
    cmpd_predict,
    finetune_cmpd,
    mpd_predict,
)
from facm.config import BackboneSpec, CMPDConfig
from facm.correction import build_auxiliaries
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.testing import synthetic_dataset
from facm.utils import parameter_hash

TINY = BackboneSpec(channels=[4, 4, 8, 8], hidden=16, seed=0)
CONFIG = CMPDConfig(epochs=1, batch_size=16, hidden_channels=4, bottleneck_channels=8)


@pytest.fixture()
def backbone() -> TappableClassifier:
    return build_backbone(TINY).eval()


def _family(backbone: TappableClassifier) -> ConditionalAutoencoder:
    return build_conditional_autoencoder(backbone, seed=0, hidden_channels=4, bottleneck_channels=8).eval()


def test_one_condition_head_per_auxiliary(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    assert cae.n == backbone.n
    assert cae.head(0) is None
    widths = [cae.head(i).condition_width for i in range(1, cae.n)]  # type: ignore[union-attr]
    assert widths == [i * backbone.num_classes for i in range(1, cae.n)]
    with pytest.raises(ValidationException):
        cae.head(cae.n)


def test_condition_concatenates_auxiliary_outputs(backbone: TappableClassifier) -> None:
    auxs = build_auxiliaries(backbone, seed=0)
    batch = synthetic_dataset(4).images
    taps = backbone.forward_with_taps(batch)
    assert build_condition(auxs, taps, 0).values.shape == (4, 0)
    condition = build_condition(auxs, taps, 2)
    assert condition.values.shape == (4, 2 * backbone.num_classes)
    assert torch.allclose(condition.values.sum(dim=1), torch.full((4,), 2.0), atol=1e-5)
    with pytest.raises(ValidationException):
        build_condition(auxs, taps, len(auxs) + 1)


def test_unconditional_member_is_the_plain_autoencoder(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    auxs = build_auxiliaries(backbone, seed=0)
    batch = synthetic_dataset(8).images
    with torch.no_grad():
        taps = backbone.forward_with_taps(batch)
        reconstruction = cae_forward(cae, batch, build_condition(auxs, taps, 0))
        assert torch.equal(reconstruction, cae.unconditional()(batch))
        baseline = mpd_predict(cae.unconditional(), backbone, batch)
        assert torch.equal(cmpd_predict(cae, backbone, auxs, batch, 0), baseline)


def test_reconstructions_stay_in_the_box(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    auxs = build_auxiliaries(backbone, seed=0)
    batch = synthetic_dataset(8).images
    with torch.no_grad():
        taps = backbone.forward_with_taps(batch)
        for i in range(cae.n):
            reconstruction = cae_forward(cae, batch, build_condition(auxs, taps, i))
            assert reconstruction.shape == batch.shape
            assert float(reconstruction.min()) >= 0.0
            assert float(reconstruction.max()) <= 1.0


def test_condition_width_is_checked(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    auxs = build_auxiliaries(backbone, seed=0)
    batch = synthetic_dataset(2).images
    taps = backbone.forward_with_taps(batch)
    condition = build_condition(auxs, taps, 2)
    with pytest.raises(ImproperlyConfiguredException):
        cae_forward(cae, batch, condition._replace(index=1))
    with pytest.raises(ImproperlyConfiguredException):
        cae_forward(cae, batch, condition._replace(index=0))


def test_input_sides_must_be_divisible_by_four() -> None:
    model = build_backbone(TINY.copy(update={"input_shape": (1, 30, 30)}))
    with pytest.raises(ImproperlyConfiguredException):
        build_conditional_autoencoder(model, seed=0)


def test_kl_loss_is_non_negative_and_zero_for_identical_predictions(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    auxs = build_auxiliaries(backbone, seed=0)
    batch = synthetic_dataset(8).images
    assert float(cmpd_kl_loss(cae, backbone, auxs, batch)) >= 0.0

    cae.core.encoder = torch.nn.Identity()
    cae.core.decoder_in = torch.nn.Identity()
    cae.core.decoder = torch.nn.Identity()
    for head in cae.heads:
        for layer in (head.encoder_fc, head.decoder_fc):
            torch.nn.init.zeros_(layer.weight)
            torch.nn.init.zeros_(layer.bias)
    assert float(cmpd_kl_loss(cae, backbone, auxs, batch)) == pytest.approx(0.0, abs=1e-6)


def test_kl_loss_gradient_matches_finite_differences(backbone: TappableClassifier) -> None:
    backbone = backbone.double()
    cae = _family(backbone).double()
    auxs = build_auxiliaries(backbone, seed=0).double()
    batch = synthetic_dataset(4).images.double()
    parameter = cae.heads[0].encoder_fc.bias
    loss = cmpd_kl_loss(cae, backbone, auxs, batch)
    (gradient,) = torch.autograd.grad(loss, parameter)
    step = 1e-6
    for index in range(3):
        with torch.no_grad():
            parameter[index] += step
            upper = float(cmpd_kl_loss(cae, backbone, auxs, batch))
            parameter[index] -= 2 * step
            lower = float(cmpd_kl_loss(cae, backbone, auxs, batch))
            parameter[index] += step
        assert float(gradient[index]) == pytest.approx((upper - lower) / (2 * step), rel=1e-3, abs=1e-7)


def test_finetuning_only_updates_the_autoencoder(backbone: TappableClassifier) -> None:
    cae = _family(backbone)
    auxs = build_auxiliaries(backbone, seed=0)
    frozen_before = parameter_hash(backbone, auxs)
    cae_before = parameter_hash(cae)
    trained, history = finetune_cmpd(cae, backbone, auxs, synthetic_dataset(32), CONFIG, seed=0)
    assert trained is cae
    assert not trained.training
    assert history.phase == "cmpd"
    assert len(history.epochs) == CONFIG.epochs
    assert parameter_hash(backbone, auxs) == frozen_before
    assert parameter_hash(cae) != cae_before
    assert all(parameter.requires_grad for parameter in backbone.parameters())


def test_finetuning_is_reproducible(backbone: TappableClassifier) -> None:
    auxs = build_auxiliaries(backbone, seed=0)
    dataset = synthetic_dataset(32)
    first, _ = finetune_cmpd(_family(backbone), backbone, auxs, dataset, CONFIG, seed=3)
    second, _ = finetune_cmpd(_family(backbone), backbone, auxs, dataset, CONFIG, seed=3)
    assert parameter_hash(first) == parameter_hash(second)

import pytest
import torch

from facm.backbone import TappableClassifier, build_backbone
from facm.config import BackboneSpec, FinetuneConfig
from facm.correction import (
    aux_forward,
    build_auxiliaries,
    build_fa_modules,
    classification_sequence,
    fa_forward,
    finetune_aux,
    finetune_auxiliaries,
    finetune_fa,
    finetune_fa_modules,
)
from facm.enums import FinetuneMode
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.testing import synthetic_dataset
from facm.utils import parameter_hash

TINY = BackboneSpec(channels=[4, 4, 8, 8], hidden=16, seed=0)
CONFIG = FinetuneConfig(epochs=1, batch_size=16, lr=0.01)


@pytest.fixture()
def backbone() -> TappableClassifier:
    return build_backbone(TINY).eval()


def test_one_head_per_tap(backbone: TappableClassifier) -> None:
    auxs = build_auxiliaries(backbone, 0)
    fas = build_fa_modules(backbone, 0)
    assert [aux.index for aux in auxs] == [1, 2, 3]
    assert [aux.in_features for aux in auxs] == backbone.tap_widths
    assert [fa.index for fa in fas] == [1, 2, 3]
    assert parameter_hash(*auxs) == parameter_hash(*build_auxiliaries(backbone, 0))


def test_heads_read_their_own_tap(backbone: TappableClassifier) -> None:
    auxs, fas = build_auxiliaries(backbone, 0), build_fa_modules(backbone, 0)
    taps = backbone.forward_with_taps(synthetic_dataset(3).images)
    logits = aux_forward(auxs[1], taps)
    assert torch.allclose(logits, auxs[1](taps.taps[1]))
    corrected = fa_forward(fas[1], taps, auxs[1])
    assert torch.allclose(corrected, fas[1].fc(torch.cat([taps.logits, logits], dim=1)))
    with pytest.raises(ImproperlyConfiguredException):
        fa_forward(fas[0], taps, auxs[1])
    with pytest.raises(ImproperlyConfiguredException):
        aux_forward(auxs[0], taps._replace(taps=taps.taps[1:]))


def test_classification_sequence(backbone: TappableClassifier) -> None:
    auxs = build_auxiliaries(backbone, 0)
    batch = synthetic_dataset(5).images
    taps = backbone.forward_with_taps(batch)
    full = classification_sequence(backbone, auxs, batch, 4)
    assert full.shape == (5, 4)
    for k, aux in enumerate(auxs):
        assert torch.equal(full[:, k], aux_forward(aux, taps).argmax(dim=1))
    assert torch.equal(full[:, 3], taps.logits.argmax(dim=1))
    assert torch.equal(classification_sequence(backbone, auxs, batch, 2), full[:, :2])
    for i in (0, 5):
        with pytest.raises(ValidationException):
            classification_sequence(backbone, auxs, batch, i)


def test_finetuning_keeps_the_backbone_frozen(backbone: TappableClassifier) -> None:
    auxs, fas = build_auxiliaries(backbone, 0), build_fa_modules(backbone, 0)
    data = synthetic_dataset(32)
    frozen_hash = parameter_hash(backbone)
    aux_hash = parameter_hash(*auxs)
    _, history = finetune_auxiliaries(auxs, backbone, data, CONFIG, seed=0, test=synthetic_dataset(8, seed=1))
    assert history.phase == "aux-1-2-3"
    assert history.epochs[0].accuracy is not None
    assert parameter_hash(backbone) == frozen_hash
    assert parameter_hash(*auxs) != aux_hash

    aux_hash, fa_hash = parameter_hash(*auxs), parameter_hash(*fas)
    _, history = finetune_fa_modules(fas, auxs, backbone, data, CONFIG, seed=0)
    assert history.phase == "fa-1-2-3"
    assert parameter_hash(backbone) == frozen_hash
    assert parameter_hash(*auxs) == aux_hash
    assert parameter_hash(*fas) != fa_hash
    assert all(p.requires_grad for p in backbone.parameters())


def test_trades_finetuning(backbone: TappableClassifier) -> None:
    auxs, fas = build_auxiliaries(backbone, 0), build_fa_modules(backbone, 0)
    config = CONFIG.copy(update={"trades_beta": 1.0, "trades_eps": 0.1, "trades_alpha": 0.05, "trades_steps": 1})
    data = synthetic_dataset(16)
    _, history = finetune_aux(auxs[0], backbone, data, FinetuneMode.TRADES, config, seed=0)
    assert history.phase == "aux-1"
    _, history = finetune_fa(fas[0], auxs[0], backbone, data, FinetuneMode.TRADES, config, seed=0)
    assert history.phase == "fa-1"
    with pytest.raises(ImproperlyConfiguredException):
        finetune_aux(auxs[0], backbone, data, FinetuneMode.TRADES, CONFIG, seed=0)


def test_fa_modules_need_their_auxiliaries(backbone: TappableClassifier) -> None:
    auxs, fas = build_auxiliaries(backbone, 0), build_fa_modules(backbone, 0)
    with pytest.raises(ImproperlyConfiguredException):
        finetune_fa_modules(fas, list(auxs)[:1], backbone, synthetic_dataset(8), CONFIG, seed=0)

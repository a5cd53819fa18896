from logging import getLogger
from typing import Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from facm.backbone import FeatureTaps, TappableClassifier
from facm.cmpd.modules import ConditionalAutoencoder, build_condition, cae_forward
from facm.config import CMPDConfig
from facm.correction import AuxiliaryClassifier
from facm.data import ImageDataset
from facm.training import TrainHistory, fit, kl_divergence, module_device
from facm.utils.freeze import frozen
from facm.utils.seeding import make_generator

logger = getLogger(__name__)


def cmpd_kl_loss(
    cae: ConditionalAutoencoder,
    model: TappableClassifier,
    auxs: Sequence[AuxiliaryClassifier],
    batch: torch.Tensor,
    taps: Optional[FeatureTaps] = None,
) -> torch.Tensor:
    """Sum over i = 0..n-1 of KL(f(x) || f(g_i(x))), batch-averaged.

    The clean prediction f(x) is the target and receives no gradient. Conditions are computed from the taps of
    `batch` and are constants for the autoencoder.
    """
    if taps is None:
        with torch.no_grad():
            taps = model.forward_with_taps(batch)
    target = F.softmax(taps.logits, dim=1).detach()
    loss = batch.new_zeros(())
    for i in range(cae.n):
        with torch.no_grad():
            condition = build_condition(auxs, taps, i, normalize=cae.condition)
        reconstruction = cae_forward(cae, batch, condition)
        loss = loss + kl_divergence(F.log_softmax(model(reconstruction), dim=1), target)
    return loss


def finetune_cmpd(
    cae: ConditionalAutoencoder,
    model: TappableClassifier,
    auxs: Sequence[AuxiliaryClassifier],
    dataset: ImageDataset,
    config: CMPDConfig,
    *,
    seed: int,
) -> Tuple[ConditionalAutoencoder, TrainHistory]:
    """Trains all g_i jointly on clean examples with the prediction-matching KL objective.

    Args:
        cae: the conditional autoencoder family.
        model: frozen backbone.
        auxs: frozen auxiliary classifiers providing the conditions.
        dataset: clean training split.
        config: schedule.
        seed: root seed.

    Raises:
        InternalException: the backbone or an auxiliary classifier changed.

    Returns:
        The trained family and its history.
    """
    cae.train()
    with frozen(model, *auxs):

        def step(inputs: torch.Tensor, _: torch.Tensor) -> torch.Tensor:
            return cmpd_kl_loss(cae, model, auxs, inputs)

        history = fit(
            cae.parameters(),
            step,
            dataset,
            config,
            make_generator(seed, "data-shuffle", "cmpd"),
            phase="cmpd",
            device=module_device(model),
        )
    cae.eval()
    return cae, history

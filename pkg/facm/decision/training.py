from logging import getLogger
from typing import List, Tuple

import torch
import torch.nn.functional as F
from tqdm.auto import tqdm

from facm.attacks.gradient import projected_gradient_ascent, random_start
from facm.config import DecisionConfig
from facm.data import ImageDataset, TensorPairs
from facm.decision.correction_set import CorrectionSet
from facm.decision.modules import DecisionModule, focal_loss, label_vector
from facm.exceptions import ImproperlyConfiguredException
from facm.training import TrainHistory, fit, module_device
from facm.utils.freeze import frozen
from facm.utils.seeding import make_generator

logger = getLogger(__name__)


def _check_budgets(config: DecisionConfig) -> None:
    if not config.eps_list or len(config.eps_list) != len(config.alpha_list):
        raise ImproperlyConfiguredException(
            detail=f"decision augmentation needs matching, non-empty radii and step sizes, "
            f"got {len(config.eps_list)} and {len(config.alpha_list)}"
        )


def member_cross_entropy(correction_set: CorrectionSet, candidate: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Sum over every member c of CE(c(x), y), summed over the batch."""
    logits = correction_set.all_logits(candidate)
    return sum(  # type: ignore[return-value]
        F.cross_entropy(logits[:, j], labels, reduction="sum") for j in range(logits.shape[1])
    )


def augment_decision_inputs(
    correction_set: CorrectionSet, dataset: ImageDataset, config: DecisionConfig, *, seed: int
) -> ImageDataset:
    """The clean examples followed by one PGD copy per radius.

    Each copy maximizes the summed member cross-entropy from zero (or a random point with `random_start`) with
    `pgd_steps` signed steps, projected onto the radius' ball and [0, 1]. The result holds (1 + |radii|) * N rows,
    grouped by radius in configuration order.

    Raises:
        ImproperlyConfiguredException: radii and step sizes are empty or differ in length.
    """
    _check_budgets(config)
    generator = make_generator(seed, "decision", "augment")
    device = module_device(correction_set.model)
    blocks: List[torch.Tensor] = [dataset.images]
    with frozen(*correction_set.modules()):
        for eps, alpha in zip(config.eps_list, config.alpha_list):
            adversarial = []
            batches = tqdm(
                dataset.batches(config.batch_size),
                total=dataset.num_batches(config.batch_size),
                desc=f"decision pgd eps={eps:.4g}",
                disable=not config.progress,
                leave=False,
            )
            for inputs, labels in batches:
                inputs, labels = inputs.to(device), labels.to(device)

                def objective(candidate: torch.Tensor, labels: torch.Tensor = labels) -> torch.Tensor:
                    return member_cross_entropy(correction_set, candidate, labels)

                start = random_start(inputs, eps, generator) if config.random_start else None
                adversarial.append(
                    projected_gradient_ascent(objective, inputs, eps, alpha, config.pgd_steps, start=start).cpu()
                )
            blocks.append(torch.cat(adversarial))
            logger.info("decision augmentation: eps %.4g alpha %.4g done", eps, alpha)
    return ImageDataset(torch.cat(blocks), dataset.labels.repeat(len(blocks)))


@torch.no_grad()
def decision_targets(correction_set: CorrectionSet, inputs: ImageDataset, batch_size: int) -> TensorPairs:
    """Precomputes (X^h, Y^h) for every row of `inputs`."""
    device = module_device(correction_set.model)
    features, targets = [], []
    for images, labels in inputs.batches(batch_size):
        images, labels = images.to(device), labels.to(device)
        taps = correction_set.model.forward_with_taps(images)
        features.append(correction_set.decision_features(taps).cpu())
        targets.append(label_vector(correction_set, images, labels).cpu())
    return TensorPairs(torch.cat(features), torch.cat(targets))


def train_decision(
    h: DecisionModule,
    correction_set: CorrectionSet,
    dataset: ImageDataset,
    config: DecisionConfig,
    *,
    seed: int,
) -> Tuple[DecisionModule, TrainHistory]:
    """Trains the decision module on clean and PGD-augmented examples with the multi-label focal loss.

    Members are frozen throughout, so their outputs on the augmented set are computed once and the decision module
    is fit on the precomputed (X^h, Y^h) pairs.

    Args:
        h: decision module to train.
        correction_set: trained members.
        dataset: clean training split, truncated to `config.train_limit`.
        config: augmentation budgets and schedule.
        seed: root seed.

    Raises:
        ImproperlyConfiguredException: radii and step sizes are empty or differ in length.
        InternalException: a member parameter changed.

    Returns:
        The trained module and its history.
    """
    augmented = augment_decision_inputs(correction_set, dataset.head(config.train_limit), config, seed=seed)
    with frozen(*correction_set.modules()):
        pairs = decision_targets(correction_set, augmented, config.batch_size)
    positive = pairs.labels.mean(dim=0)
    logger.info(
        "decision targets: %d rows, member hit rates %s",
        len(pairs),
        " ".join(f"{name}={rate:.2f}" for name, rate in zip(correction_set.member_ids, positive.tolist())),
    )
    h.train()

    def step(features: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return focal_loss(h(features), targets, gamma=float(config.gamma), symmetric=config.symmetric_focal)

    history = fit(
        h.parameters(),
        step,
        pairs,
        config,
        make_generator(seed, "data-shuffle", "decision"),
        phase="decision",
        device=module_device(h),
    )
    h.eval()
    return h, history

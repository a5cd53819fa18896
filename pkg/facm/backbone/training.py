from logging import getLogger
from typing import Callable, Optional, Tuple

import torch
import torch.nn.functional as F

from facm.backbone.models import TappableClassifier
from facm.config import TrainConfig
from facm.data import ImageDataset
from facm.exceptions import ImproperlyConfiguredException
from facm.training import TrainHistory, accuracy, fit, module_device, trades_loss
from facm.utils.seeding import make_generator

logger = getLogger(__name__)


def train_natural(
    model: TappableClassifier,
    dataset: ImageDataset,
    config: TrainConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[TappableClassifier, TrainHistory]:
    """Trains the backbone with cross-entropy.

    Args:
        model: backbone to train in place.
        dataset: training split.
        config: schedule; `trades_beta` must be 0.
        seed: root seed; batches are shuffled by its `data-shuffle` stream.
        test: optional split whose accuracy is recorded after every epoch.

    Raises:
        ImproperlyConfiguredException: `config` selects TRADES.
        ValidationException: `dataset` is empty.

    Returns:
        The trained model and its history.
    """
    if config.is_trades:
        raise ImproperlyConfiguredException(detail="train_natural requires trades_beta = 0, use train_trades")
    device = module_device(model)
    model.train()

    def step(inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return F.cross_entropy(model(inputs), targets)

    history = fit(
        model.parameters(),
        step,
        dataset,
        config,
        make_generator(seed, "data-shuffle", "backbone"),
        phase="backbone",
        device=device,
        evaluate=_evaluator(model, test, config.batch_size),
    )
    model.eval()
    return model, history


def train_trades(
    model: TappableClassifier,
    dataset: ImageDataset,
    config: TrainConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[TappableClassifier, TrainHistory]:
    """Trains the backbone with the TRADES objective.

    Each batch minimizes `CE(f(x), y) + beta * KL(f(x) || f(x'))` where `x'` maximizes the KL term inside the
    `trades_eps` ball by `trades_steps` signed steps of `trades_alpha`.

    Raises:
        ImproperlyConfiguredException: `trades_beta` is 0, or `trades_eps` / `trades_alpha` is not positive.
    """
    if not config.is_trades:
        raise ImproperlyConfiguredException(detail="train_trades requires trades_beta > 0")
    if config.trades_eps <= 0 or config.trades_alpha <= 0:
        raise ImproperlyConfiguredException(
            detail=f"TRADES needs a positive radius and step, got eps={config.trades_eps} alpha={config.trades_alpha}"
        )
    device = module_device(model)
    perturbation = make_generator(seed, "trades", "backbone")
    model.train()

    def step(inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return trades_loss(
            model,
            inputs,
            targets,
            beta=config.trades_beta,
            eps=config.trades_eps,
            alpha=config.trades_alpha,
            steps=config.trades_steps,
            generator=perturbation,
        )

    history = fit(
        model.parameters(),
        step,
        dataset,
        config,
        make_generator(seed, "data-shuffle", "backbone"),
        phase="backbone-trades",
        device=device,
        evaluate=_evaluator(model, test, config.batch_size),
    )
    model.eval()
    return model, history


def train_backbone(
    model: TappableClassifier,
    dataset: ImageDataset,
    config: TrainConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[TappableClassifier, TrainHistory]:
    """Natural or TRADES training, whichever `config` selects."""
    if config.is_trades:
        return train_trades(model, dataset, config, seed=seed, test=test)
    return train_natural(model, dataset, config, seed=seed, test=test)


def _evaluator(
    model: TappableClassifier, test: Optional[ImageDataset], batch_size: int
) -> Optional[Callable[[], float]]:
    if test is None:
        return None

    def evaluate() -> float:
        model.eval()
        try:
            return accuracy(model, test, batch_size, module_device(model))
        finally:
            model.train()

    return evaluate

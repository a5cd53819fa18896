from functools import partial
from logging import getLogger
from typing import Callable, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from facm.backbone import TappableClassifier
from facm.config import FinetuneConfig
from facm.correction.modules import AuxiliaryClassifier, FACorrectionModule, aux_forward, fa_forward
from facm.data import ImageDataset
from facm.enums import FinetuneMode
from facm.exceptions import ImproperlyConfiguredException
from facm.training import StepLoss, TrainHistory, accuracy, fit, module_device, trades_loss
from facm.utils.freeze import frozen
from facm.utils.seeding import make_generator

logger = getLogger(__name__)

HeadForward = Callable[[torch.Tensor], torch.Tensor]


def _trades_objective(
    heads: List[HeadForward], config: FinetuneConfig, generator: torch.Generator
) -> StepLoss:
    """Sum of the per-head TRADES losses. Heads share no parameters, so each receives only its own gradient."""
    if config.trades_eps is None or config.trades_alpha is None or config.trades_steps is None:
        raise ImproperlyConfiguredException(detail="TRADES fine-tuning needs trades_eps, trades_alpha and trades_steps")
    beta = 6.0 if config.trades_beta is None else config.trades_beta

    def robust(inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return sum(  # type: ignore[return-value]
            trades_loss(
                head,
                inputs,
                targets,
                beta=beta,
                eps=float(config.trades_eps),  # type: ignore[arg-type]
                alpha=float(config.trades_alpha),  # type: ignore[arg-type]
                steps=int(config.trades_steps),  # type: ignore[arg-type]
                generator=generator,
            )
            for head in heads
        )

    return robust


def _aux_head(model: TappableClassifier, aux: AuxiliaryClassifier, inputs: torch.Tensor) -> torch.Tensor:
    return aux_forward(aux, model.forward_with_taps(inputs))


def _fa_head(
    model: TappableClassifier, aux: AuxiliaryClassifier, fa: FACorrectionModule, inputs: torch.Tensor
) -> torch.Tensor:
    return fa_forward(fa, model.forward_with_taps(inputs), aux)


def finetune_auxiliaries(
    auxs: Sequence[AuxiliaryClassifier],
    model: TappableClassifier,
    dataset: ImageDataset,
    config: FinetuneConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[Sequence[AuxiliaryClassifier], TrainHistory]:
    """Fine-tunes several auxiliary classifiers over one pass of the frozen backbone.

    In natural mode each head minimizes `CE(f_i(l_i(x)), y)`; in TRADES mode the KL term between `f_i(l_i(x))` and
    `f_i(l_i(x'))` is added, with `x'` found by the inner maximization against that head.

    Raises:
        InternalException: a backbone parameter changed.
    """
    generator = make_generator(seed, "trades", "aux")
    with frozen(model):
        if config.mode == FinetuneMode.NATURAL:

            def step(inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
                with torch.no_grad():
                    taps = model.forward_with_taps(inputs)
                return sum(  # type: ignore[return-value]
                    F.cross_entropy(aux_forward(aux, taps), targets) for aux in auxs
                )

        else:
            step = _trades_objective([partial(_aux_head, model, aux) for aux in auxs], config, generator)
        history = fit(
            [p for aux in auxs for p in aux.parameters()],
            step,
            dataset,
            config,
            make_generator(seed, "data-shuffle", "aux"),
            phase="aux-" + "-".join(str(aux.index) for aux in auxs),
            device=module_device(model),
            evaluate=_head_accuracy([partial(_aux_head, model, aux) for aux in auxs], test, config.batch_size),
        )
    return auxs, history


def finetune_aux(
    aux: AuxiliaryClassifier,
    model: TappableClassifier,
    dataset: ImageDataset,
    mode: FinetuneMode,
    config: FinetuneConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[AuxiliaryClassifier, TrainHistory]:
    """Fine-tunes the i-th auxiliary classifier with the backbone frozen."""
    config = config.copy(update={"mode": mode})
    _, history = finetune_auxiliaries([aux], model, dataset, config, seed=seed, test=test)
    return aux, history


def finetune_fa_modules(
    fas: Sequence[FACorrectionModule],
    auxs: Sequence[AuxiliaryClassifier],
    model: TappableClassifier,
    dataset: ImageDataset,
    config: FinetuneConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[Sequence[FACorrectionModule], TrainHistory]:
    """Fine-tunes FA modules with the backbone and their auxiliary classifiers frozen.

    Raises:
        ImproperlyConfiguredException: the modules and auxiliaries do not pair up by index.
        InternalException: a frozen parameter changed.
    """
    by_index = {aux.index: aux for aux in auxs}
    if any(fa.index not in by_index for fa in fas):
        raise ImproperlyConfiguredException(detail="every FA module needs the auxiliary classifier of its tap")
    pairs = [(by_index[fa.index], fa) for fa in fas]
    generator = make_generator(seed, "trades", "fa")
    heads = [partial(_fa_head, model, aux, fa) for aux, fa in pairs]
    with frozen(model, *[aux for aux, _ in pairs]):
        if config.mode == FinetuneMode.NATURAL:

            def step(inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
                with torch.no_grad():
                    taps = model.forward_with_taps(inputs)
                return sum(  # type: ignore[return-value]
                    F.cross_entropy(fa_forward(fa, taps, aux), targets) for aux, fa in pairs
                )

        else:
            step = _trades_objective(heads, config, generator)  # type: ignore[arg-type]
        history = fit(
            [p for fa in fas for p in fa.parameters()],
            step,
            dataset,
            config,
            make_generator(seed, "data-shuffle", "fa"),
            phase="fa-" + "-".join(str(fa.index) for fa in fas),
            device=module_device(model),
            evaluate=_head_accuracy(heads, test, config.batch_size),  # type: ignore[arg-type]
        )
    return fas, history


def finetune_fa(
    fa: FACorrectionModule,
    aux: AuxiliaryClassifier,
    model: TappableClassifier,
    dataset: ImageDataset,
    mode: FinetuneMode,
    config: FinetuneConfig,
    *,
    seed: int,
    test: Optional[ImageDataset] = None,
) -> Tuple[FACorrectionModule, TrainHistory]:
    """Fine-tunes the i-th FA module with the backbone and f_i frozen."""
    config = config.copy(update={"mode": mode})
    _, history = finetune_fa_modules([fa], [aux], model, dataset, config, seed=seed, test=test)
    return fa, history


def _head_accuracy(
    heads: List[HeadForward], test: Optional[ImageDataset], batch_size: int
) -> Optional[Callable[[], float]]:
    """Mean accuracy of the heads on the held-out split."""
    if test is None:
        return None

    def evaluate() -> float:
        scores = [accuracy(head, test, batch_size) for head in heads]
        for k, score in enumerate(scores):
            logger.debug("head %d accuracy %.2f%%", k, score)
        return sum(scores) / len(scores)

    return evaluate

from logging import getLogger
from typing import Callable, Iterable, List, Optional

import torch
import torch.nn.functional as F
from pydantic import BaseModel
from torch import nn
from torch.optim import SGD
from torch.optim.lr_scheduler import MultiStepLR
from tqdm.auto import tqdm

from facm.config import OptimizationConfig
from facm.constants import LOG_FLOOR
from facm.data import TensorPairs
from facm.exceptions import NumericException, ValidationException

logger = getLogger(__name__)

StepLoss = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]
Forward = Callable[[torch.Tensor], torch.Tensor]


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    """Mean training loss over the epoch."""
    lr: float
    """Learning rate used during the epoch."""
    accuracy: Optional[float] = None
    """Held-out accuracy in percent, when an evaluation callback was given."""


class TrainHistory(BaseModel):
    """Per-epoch record of one training phase."""

    phase: str
    epochs: List[EpochRecord] = []
    step_losses: List[float] = []
    """Loss of every optimizer step, in order."""

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].loss if self.epochs else float("nan")


def module_device(module: nn.Module) -> torch.device:
    for parameter in module.parameters():
        return parameter.device
    return torch.device("cpu")


def fit(
    parameters: Iterable[nn.Parameter],
    step_loss: StepLoss,
    data: TensorPairs,
    config: OptimizationConfig,
    generator: torch.Generator,
    *,
    phase: str,
    device: torch.device = torch.device("cpu"),
    evaluate: Optional[Callable[[], float]] = None,
) -> TrainHistory:
    """Runs SGD with a multistep schedule over shuffled batches.

    Args:
        parameters: the trainable set. Nothing else is handed to the optimizer.
        step_loss: maps an `(inputs, targets)` batch to a scalar loss.
        data: training pairs.
        config: optimizer, schedule and batch size.
        generator: shuffling stream.
        phase: name used in logs and in the returned history.
        device: device batches are moved to.
        evaluate: optional callback returning a held-out accuracy after every epoch.

    Raises:
        ValidationException: `data` is empty.
        NumericException: a batch produced a non-finite loss.

    Returns:
        TrainHistory
    """
    if len(data) == 0:
        raise ValidationException(detail=f"cannot run '{phase}' on an empty dataset")
    parameters = [p for p in parameters if p.requires_grad]
    optimizer = SGD(parameters, lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)
    scheduler = MultiStepLR(optimizer, milestones=config.milestones, gamma=config.lr_decay)
    history = TrainHistory(phase=phase)
    logger.info("%s: %d examples, %d epochs, lr %g", phase, len(data), config.epochs, config.lr)
    for epoch in range(config.epochs):
        lr = optimizer.param_groups[0]["lr"]
        total, seen = 0.0, 0
        batches = tqdm(
            data.batches(config.batch_size, generator),
            total=data.num_batches(config.batch_size),
            desc=f"{phase} {epoch + 1}/{config.epochs}",
            disable=not config.progress,
            leave=False,
        )
        for inputs, targets in batches:
            inputs, targets = inputs.to(device), targets.to(device)
            optimizer.zero_grad()
            loss = step_loss(inputs, targets)
            if not torch.isfinite(loss):
                raise NumericException(detail=f"{phase}: non-finite loss at epoch {epoch + 1}")
            loss.backward()
            optimizer.step()
            value = float(loss.item())
            history.step_losses.append(value)
            total += value * inputs.shape[0]
            seen += inputs.shape[0]
        scheduler.step()
        record = EpochRecord(epoch=epoch + 1, loss=total / seen, lr=lr, accuracy=evaluate() if evaluate else None)
        history.epochs.append(record)
        if record.accuracy is None:
            logger.info("%s epoch %d: loss %.4f", phase, record.epoch, record.loss)
        else:
            logger.info("%s epoch %d: loss %.4f, accuracy %.2f%%", phase, record.epoch, record.loss, record.accuracy)
    return history


def project_linf(candidate: torch.Tensor, origin: torch.Tensor, eps: float) -> torch.Tensor:
    """Projects onto the L-infinity ball around `origin` intersected with the [0, 1] box."""
    return torch.clamp(torch.min(torch.max(candidate, origin - eps), origin + eps), 0.0, 1.0)


def kl_divergence(log_q: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """KL(p || q) averaged over the batch, with `p` given as probabilities and `q` as log-probabilities."""
    return F.kl_div(log_q, p, reduction="batchmean")


def kl_perturbation(
    forward: Forward,
    inputs: torch.Tensor,
    eps: float,
    alpha: float,
    steps: int,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Inner maximization of the TRADES objective.

    Starts from a small Gaussian jitter and ascends KL(forward(x) || forward(x')) with signed steps, projecting every
    iterate onto the eps-ball and the [0, 1] box.

    Returns:
        detached adversarial inputs.
    """
    with torch.no_grad():
        clean = F.softmax(forward(inputs), dim=1)
    noise = torch.randn(inputs.shape, generator=generator, device=inputs.device if generator is None else "cpu")
    adversarial = project_linf(inputs + 0.001 * noise.to(inputs.device), inputs, eps).detach()
    for _ in range(steps):
        adversarial.requires_grad_(True)
        loss = F.kl_div(F.log_softmax(forward(adversarial), dim=1), clean, reduction="sum")
        (grad,) = torch.autograd.grad(loss, adversarial)
        adversarial = project_linf(adversarial.detach() + alpha * grad.sign(), inputs, eps).detach()
    return adversarial


def trades_loss(
    forward: Forward,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    beta: float,
    eps: float,
    alpha: float,
    steps: int,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Cross-entropy plus `beta` times the KL between clean and perturbed predictions.

    With `beta == 0` no perturbation is computed and the plain cross-entropy is returned.
    """
    logits = forward(inputs)
    natural = F.cross_entropy(logits, targets)
    if beta == 0:
        return natural
    adversarial = kl_perturbation(forward, inputs, eps, alpha, steps, generator)
    robust = kl_divergence(F.log_softmax(forward(adversarial), dim=1), F.softmax(logits, dim=1))
    return natural + beta * robust


@torch.no_grad()
def predictions(forward: Forward, data: TensorPairs, batch_size: int, device: torch.device) -> torch.Tensor:
    """Argmax predictions of `forward` over a dataset, in order."""
    output = [forward(inputs.to(device)).argmax(dim=1).cpu() for inputs, _ in data.batches(batch_size)]
    return torch.cat(output) if output else torch.empty(0, dtype=torch.long)


def accuracy(
    forward: Forward, data: TensorPairs, batch_size: int = 256, device: Optional[torch.device] = None
) -> float:
    """Accuracy of `forward` on a dataset, in percent."""
    if len(data) == 0:
        raise ValidationException(detail="accuracy of an empty dataset is undefined")
    predicted = predictions(forward, data, batch_size, device or torch.device("cpu"))
    return float((predicted == data.labels.cpu()).float().mean().item() * 100.0)


def log_floor(probabilities: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(probabilities, min=LOG_FLOOR))

from typing import Callable, Optional

import torch
import torch.nn.functional as F

from facm.enums import AttackLoss
from facm.exceptions import ImproperlyConfiguredException
from facm.training import project_linf

LossFn = Callable[[torch.Tensor], torch.Tensor]
"""Maps a batch of candidate inputs to the scalar objective being ascended."""


def cross_entropy_objective(log_probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.nll_loss(log_probs, labels, reduction="sum")


def cw_margin(scores: torch.Tensor, labels: torch.Tensor, kappa: float = 0.0) -> torch.Tensor:
    """Per-example margin max(z_y - max_{j != y} z_j, -kappa).

    Invariant under adding a per-example constant to `scores`, so logits and log-probabilities give the same value.
    """
    true = scores.gather(1, labels[:, None]).squeeze(1)
    others = scores.masked_fill(F.one_hot(labels, scores.shape[1]).bool(), float("-inf")).amax(dim=1)
    return torch.clamp(true - others, min=-kappa)


def cw_objective(log_probs: torch.Tensor, labels: torch.Tensor, kappa: float = 0.0) -> torch.Tensor:
    return -cw_margin(log_probs, labels, kappa).sum()


def kl_objective(log_probs: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    """KL(clean || current) summed over the batch; `clean` holds detached probabilities."""
    return F.kl_div(log_probs, clean, reduction="sum")


def make_objective(
    log_probs: Callable[[torch.Tensor], torch.Tensor],
    inputs: torch.Tensor,
    labels: torch.Tensor,
    loss: AttackLoss,
    kappa: float = 0.0,
) -> LossFn:
    """Objective ascended by a gradient attack against a log-probability function."""
    if loss == AttackLoss.CE:
        return lambda candidate: cross_entropy_objective(log_probs(candidate), labels)
    if loss == AttackLoss.CW_MARGIN:
        return lambda candidate: cw_objective(log_probs(candidate), labels, kappa)
    if loss == AttackLoss.KL:
        with torch.no_grad():
            clean = log_probs(inputs).exp()
        return lambda candidate: kl_objective(log_probs(candidate), clean)
    raise ImproperlyConfiguredException(detail=f"unknown attack loss '{loss}'")


def input_gradient(objective: LossFn, candidate: torch.Tensor) -> torch.Tensor:
    candidate = candidate.detach().requires_grad_(True)
    (grad,) = torch.autograd.grad(objective(candidate), candidate)
    return grad.detach()


def random_start(inputs: torch.Tensor, eps: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    """Uniform point in the eps-ball around `inputs`, clamped to [0, 1]."""
    noise = torch.rand(inputs.shape, generator=generator, dtype=inputs.dtype).to(inputs.device)
    return project_linf(inputs + (2.0 * noise - 1.0) * eps, inputs, eps)


def projected_gradient_ascent(
    objective: LossFn,
    inputs: torch.Tensor,
    eps: float,
    step_size: float,
    steps: int,
    *,
    start: Optional[torch.Tensor] = None,
    momentum: Optional[float] = None,
) -> torch.Tensor:
    """Signed-gradient ascent projected onto the eps-ball and the [0, 1] box after every step.

    Args:
        objective: scalar loss of a candidate batch.
        inputs: clean batch.
        eps: L-infinity radius.
        step_size: size of each signed step.
        steps: number of steps.
        start: initial iterate; the clean batch when omitted.
        momentum: when set, steps follow the sign of the accumulated L1-normalized gradient with this decay.

    Returns:
        detached adversarial batch.
    """
    inputs = inputs.detach()
    adversarial = inputs.clone() if start is None else start.detach().clone()
    velocity = torch.zeros_like(inputs)
    for _ in range(steps):
        grad = input_gradient(objective, adversarial)
        if momentum is not None:
            norm = grad.abs().flatten(start_dim=1).sum(dim=1).clamp_min(1e-12)
            velocity = momentum * velocity + grad / norm.view(-1, *([1] * (grad.dim() - 1)))
            grad = velocity
        adversarial = project_linf(adversarial + step_size * grad.sign(), inputs, eps)
    return adversarial.detach()

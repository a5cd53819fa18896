import math
from logging import getLogger
from typing import NamedTuple, Optional

import torch

from facm.attacks.gradient import cw_margin, make_objective, projected_gradient_ascent, random_start
from facm.attacks.targets import TargetAdapter
from facm.config import AttackSpec
from facm.enums import AttackFamily, Norm
from facm.exceptions import CapabilityException, ImproperlyConfiguredException, InternalException
from facm.training import log_floor, project_linf

logger = getLogger(__name__)


class DeepFoolResult(NamedTuple):
    adversarial: torch.Tensor
    norms: torch.Tensor
    """L2 norm of each perturbation."""
    flipped: torch.Tensor
    """Whether the prediction changed within the iteration budget."""


class SquareResult(NamedTuple):
    adversarial: torch.Tensor
    queries: torch.Tensor
    """Model evaluations spent on each example."""


def _require_gradient(target: TargetAdapter, family: str) -> None:
    if not target.differentiable:
        raise CapabilityException(detail=f"{family} needs input gradients, the target is black-box only")


def fgsm(target: TargetAdapter, batch: torch.Tensor, labels: torch.Tensor, spec: AttackSpec) -> torch.Tensor:
    """One signed-gradient step of size eps, clamped to [0, 1]."""
    _require_gradient(target, "fgsm")
    objective = make_objective(target.log_probs, batch, labels, spec.loss, spec.kappa)
    return projected_gradient_ascent(objective, batch, spec.eps, spec.eps, 1)


def pgd(
    target: TargetAdapter,
    batch: torch.Tensor,
    labels: torch.Tensor,
    spec: AttackSpec,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Projected gradient ascent on the CE, CW margin or KL loss.

    With `loss = cw_margin` this is the CW attack under an L-infinity budget, stepping by `eta` when it is set.
    """
    _require_gradient(target, "pgd")
    objective = make_objective(target.log_probs, batch, labels, spec.loss, spec.kappa)
    start = random_start(batch, spec.eps, generator) if spec.random_start else None
    return projected_gradient_ascent(objective, batch, spec.eps, spec.step_size, spec.steps, start=start)


def mifgsm(target: TargetAdapter, batch: torch.Tensor, labels: torch.Tensor, spec: AttackSpec) -> torch.Tensor:
    """Momentum iterative FGSM with decay `spec.momentum`."""
    _require_gradient(target, "mifgsm")
    objective = make_objective(target.log_probs, batch, labels, spec.loss, spec.kappa)
    return projected_gradient_ascent(
        objective, batch, spec.eps, spec.step_size, spec.steps, momentum=float(spec.momentum)
    )


def deepfool_l2(
    target: TargetAdapter, batch: torch.Tensor, spec: AttackSpec, labels: Optional[torch.Tensor] = None
) -> DeepFoolResult:
    """Untargeted DeepFool under the L2 norm.

    Every iteration linearizes the log-probability differences around the current iterate and steps to the nearest
    linearized boundary. The accumulated perturbation is scaled by `1 + overshoot`. An example stops as soon as its
    prediction differs from the reference label: `labels` when given, otherwise the clean prediction.
    """
    _require_gradient(target, "deepfool_l2")
    batch = batch.detach()
    with torch.no_grad():
        clean_prediction = target.log_probs(batch).argmax(dim=1)
    reference = clean_prediction if labels is None else labels
    active = clean_prediction == reference
    total = torch.zeros_like(batch)
    adversarial = batch.clone()
    flipped = ~active
    scale = 1.0 + float(spec.overshoot)
    for _ in range(spec.steps):
        rows = active.nonzero().flatten()
        if rows.numel() == 0:
            break
        candidate = adversarial[rows].clone().requires_grad_(True)
        scores = target.log_probs(candidate)
        num_classes = scores.shape[1]
        origin = reference[rows]
        grads = torch.stack(
            [
                torch.autograd.grad(scores[:, k].sum(), candidate, retain_graph=k < num_classes - 1)[0]
                for k in range(num_classes)
            ],
            dim=1,
        )
        scores = scores.detach()
        w = grads - grads[torch.arange(rows.numel()), origin][:, None]
        f = scores - scores.gather(1, origin[:, None])
        w_norm = w.flatten(start_dim=2).norm(dim=2)
        distance = f.abs() / w_norm.clamp_min(1e-12)
        distance[torch.arange(rows.numel()), origin] = float("inf")
        nearest = distance.argmin(dim=1)
        step_distance = distance[torch.arange(rows.numel()), nearest]
        direction = w[torch.arange(rows.numel()), nearest]
        direction_norm = w_norm[torch.arange(rows.numel()), nearest].clamp_min(1e-12)
        shape = (-1,) + (1,) * (batch.dim() - 1)
        step = ((step_distance + 1e-4) / direction_norm).view(shape) * direction
        total[rows] = total[rows] + step
        adversarial[rows] = torch.clamp(batch[rows] + scale * total[rows], 0.0, 1.0)
        with torch.no_grad():
            now = target.log_probs(adversarial[rows]).argmax(dim=1)
        changed = now != origin
        flipped[rows] = flipped[rows] | changed
        active[rows[changed]] = False
    norms = (adversarial - batch).flatten(start_dim=1).norm(dim=1)
    return DeepFoolResult(adversarial.detach(), norms, flipped)


def _p_selection(p_init: float, iteration: int, budget: int) -> float:
    """Fraction of pixels altered by a Square proposal, halved on a fixed schedule rescaled to the budget."""
    it = int(iteration / max(budget, 1) * 10000)
    for bound, divisor in ((8000, 512), (6000, 256), (4000, 128), (2000, 64), (1000, 32), (500, 16), (200, 8)):
        if it > bound:
            return p_init / divisor
    if it > 50:
        return p_init / 4
    if it > 10:
        return p_init / 2
    return p_init


def _square_margin(target: TargetAdapter, inputs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return cw_margin(log_floor(target.predict(inputs)), labels, kappa=float("inf"))


def square(
    target: TargetAdapter,
    batch: torch.Tensor,
    labels: torch.Tensor,
    spec: AttackSpec,
    generator: Optional[torch.Generator] = None,
) -> SquareResult:
    """L-infinity Square attack: random search over square-shaped sign perturbations.

    Starts from random vertical stripes at the budget's corners and accepts a proposal when it lowers the margin
    `log p_y - max_{j != y} log p_j`. Stops per example on misclassification or after `spec.queries` evaluations.
    Only `target.predict` is called.

    Raises:
        ImproperlyConfiguredException: a norm other than L-infinity was requested.
        InternalException: the target's gradient was used.
    """
    if spec.norm != Norm.LINF:
        raise ImproperlyConfiguredException(detail="square supports only the L-infinity norm")
    batch, labels = batch.detach(), labels.detach()
    size = batch.shape[0]
    queries = torch.zeros(size, dtype=torch.long)
    if spec.queries == 0 or size == 0:
        return SquareResult(batch.clone(), queries)
    gradient_calls = target.gradient_calls
    eps = float(spec.eps)
    channels, height, width = batch.shape[1:]
    features = channels * height * width

    def signs(*shape: int) -> torch.Tensor:
        return (2 * torch.randint(0, 2, shape, generator=generator) - 1).to(batch.dtype).to(batch.device)

    with torch.no_grad():
        best = torch.clamp(batch + eps * signs(size, channels, 1, width), 0.0, 1.0)
        margin = _square_margin(target, best, labels)
        queries += 1
        for iteration in range(spec.queries - 1):
            rows = (margin > 0).nonzero().flatten()
            if rows.numel() == 0:
                break
            p = _p_selection(float(spec.p_init), iteration, spec.queries)
            side = min(max(int(round(math.sqrt(p * features / channels))), 1), height, width)
            top = int(torch.randint(0, height - side + 1, (1,), generator=generator))
            left = int(torch.randint(0, width - side + 1, (1,), generator=generator))
            proposal = best[rows].clone()
            proposal[:, :, top : top + side, left : left + side] += 2.0 * eps * signs(1, channels, 1, 1)
            proposal = project_linf(proposal, batch[rows], eps)
            candidate = _square_margin(target, proposal, labels[rows])
            queries[rows] += 1
            improved = candidate < margin[rows]
            margin[rows] = torch.where(improved, candidate, margin[rows])
            best[rows[improved]] = proposal[improved]
    if target.gradient_calls != gradient_calls:
        raise InternalException(detail="square attack touched the target's gradient")
    logger.debug("square: %d/%d examples fooled", int((margin <= 0).sum()), size)
    return SquareResult(best, queries)


def run_attack(
    target: TargetAdapter,
    batch: torch.Tensor,
    labels: torch.Tensor,
    spec: AttackSpec,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Dispatches on `spec.family` and returns the adversarial batch."""
    if spec.family == AttackFamily.FGSM:
        return fgsm(target, batch, labels, spec)
    if spec.family == AttackFamily.PGD:
        return pgd(target, batch, labels, spec, generator)
    if spec.family == AttackFamily.MIFGSM:
        return mifgsm(target, batch, labels, spec)
    if spec.family == AttackFamily.DEEPFOOL_L2:
        return deepfool_l2(target, batch, spec, labels).adversarial
    if spec.family == AttackFamily.SQUARE:
        return square(target, batch, labels, spec, generator).adversarial
    raise ImproperlyConfiguredException(detail=f"unknown attack family '{spec.family}'")


__all__ = [
    "DeepFoolResult",
    "SquareResult",
    "deepfool_l2",
    "fgsm",
    "mifgsm",
    "pgd",
    "run_attack",
    "square",
]

import math

import torch
import torch.nn.functional as F
from torch import nn

from facm.constants import LOG_FLOOR
from facm.decision.correction_set import CorrectionSet
from facm.exceptions import NumericException, ValidationException
from facm.utils.seeding import seeded


class DecisionModule(nn.Module):
    """Three-layer perceptron scoring every correction member."""

    def __init__(self, in_features: int, num_members: int, hidden: int = 256):
        super().__init__()
        self.in_features = in_features
        self.num_members = num_members
        self.network = nn.Sequential(
            nn.Linear(in_features, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
            nn.Linear(hidden, num_members),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[1] != self.in_features:
            raise ValidationException(
                detail=f"decision input must have width {self.in_features}, got {features.shape[1]}"
            )
        return self.network(features)


def build_decision_module(correction_set: CorrectionSet, seed: int, hidden: int = 256) -> DecisionModule:
    with seeded(seed, "init", "decision"):
        return DecisionModule(correction_set.n * correction_set.num_classes, len(correction_set), hidden)


@torch.no_grad()
def label_vector(correction_set: CorrectionSet, batch: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """0/1 targets [batch, |C|]: entry j is 1 iff member j predicts the true label."""
    if labels.shape[0] != batch.shape[0]:
        raise ValidationException(detail=f"{batch.shape[0]} inputs but {labels.shape[0]} labels")
    predictions = correction_set.all_logits(batch).argmax(dim=2)
    return (predictions == labels[:, None]).float()


def focal_loss(h_out: torch.Tensor, targets: torch.Tensor, gamma: float = 2.0, symmetric: bool = False) -> torch.Tensor:
    """Multi-label focal loss.

    Per example, the sum over members of `-Y * (1 - sigmoid(h))^gamma * log sigmoid(h)`, averaged over the batch.
    Only positive labels contribute unless `symmetric` adds `-(1 - Y) * sigmoid(h)^gamma * log(1 - sigmoid(h))`.
    Log-probabilities are floored at log(1e-12).

    Raises:
        ValidationException: negative gamma or mismatched shapes.
        NumericException: `h_out` holds non-finite values.
    """
    if gamma < 0:
        raise ValidationException(detail=f"gamma must be non-negative, got {gamma}")
    if h_out.shape != targets.shape:
        raise ValidationException(detail=f"scores {tuple(h_out.shape)} and labels {tuple(targets.shape)} differ")
    if not torch.isfinite(h_out).all():
        raise NumericException(detail="decision scores contain non-finite values")
    floor = math.log(LOG_FLOOR)
    probability = torch.sigmoid(h_out)
    positive = -targets * (1.0 - probability).pow(gamma) * torch.clamp(F.logsigmoid(h_out), min=floor)
    if symmetric:
        positive = positive - (1.0 - targets) * probability.pow(gamma) * torch.clamp(F.logsigmoid(-h_out), min=floor)
    return positive.sum(dim=1).mean()


def weights(h: DecisionModule, features: torch.Tensor) -> torch.Tensor:
    """Member weights omega: sigmoid scores normalized to sum to one per example."""
    scores = torch.sigmoid(h(features))
    return scores / scores.sum(dim=1, keepdim=True)

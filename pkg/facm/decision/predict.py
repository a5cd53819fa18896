from logging import getLogger
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

import orjson
import torch
import torch.nn.functional as F
from pydantic import BaseModel

from facm.backbone import FeatureTaps
from facm.decision.correction_set import CorrectionSet
from facm.decision.modules import DecisionModule, weights
from facm.exceptions import ValidationException

logger = getLogger(__name__)


class FACMPrediction(NamedTuple):
    probabilities: torch.Tensor
    """Average of the selected members' softmax outputs, [batch, m]."""
    selections: torch.Tensor
    """Member indices drawn for every example, [batch, tau]."""
    weights: torch.Tensor
    """The weight vector omega the draws were made under, [batch, |C|]."""


class SelectionRecord(BaseModel):
    """One line of a selection trace."""

    example_id: int
    selected_member_indices: List[int]
    seed: int


def _check_tau(tau: int, size: int, replacement: bool) -> None:
    if tau < 1 or (not replacement and tau > size):
        bound = "" if replacement else f" and at most {size}"
        raise ValidationException(detail=f"tau must be at least 1{bound}, got {tau}")


@torch.no_grad()
def facm_predict(
    correction_set: CorrectionSet,
    h: DecisionModule,
    batch: torch.Tensor,
    tau: int,
    generator: torch.Generator,
    *,
    replacement: bool = False,
    taps: Optional[FeatureTaps] = None,
) -> FACMPrediction:
    """Stochastic FACM prediction F(x).

    For every example `tau` members are drawn under omega, without replacement unless `replacement` is set, and
    their softmax outputs are averaged. A member is evaluated only on the rows that drew it, so fast mode never
    touches the autoencoders and small `tau` skips most members.

    Args:
        correction_set: the ordered members.
        h: trained decision module.
        batch: inputs [batch, C, H, W].
        tau: members averaged per example.
        generator: CPU stream the draws come from.
        replacement: draw with replacement.
        taps: taps of `batch`, when already computed.

    Raises:
        ValidationException: `tau` is out of range.

    Returns:
        FACMPrediction
    """
    size = len(correction_set)
    _check_tau(tau, size, replacement)
    if taps is None:
        taps = correction_set.model.forward_with_taps(batch)
    omega = weights(h, correction_set.decision_features(taps))
    selections = torch.multinomial(omega.cpu(), tau, replacement=replacement, generator=generator)
    counts = F.one_hot(selections, size).sum(dim=1).to(batch.device)
    probabilities = torch.zeros(batch.shape[0], correction_set.num_classes, device=batch.device)
    for j in range(size):
        rows = counts[:, j].nonzero().flatten()
        if rows.numel() == 0:
            continue
        logits = correction_set.member_logits(j, batch[rows], taps.select(rows))
        probabilities[rows] += counts[rows, j].unsqueeze(1) / tau * F.softmax(logits, dim=1)
    return FACMPrediction(probabilities, selections, omega)


def facm_surrogate(correction_set: CorrectionSet, h: DecisionModule, batch: torch.Tensor) -> torch.Tensor:
    """Differentiable expectation of `facm_predict` at tau = 1: the omega-weighted sum of member softmaxes."""
    taps = correction_set.model.forward_with_taps(batch)
    omega = weights(h, correction_set.decision_features(taps))
    members = F.softmax(correction_set.all_logits(batch, taps), dim=2)
    return (omega.unsqueeze(2) * members).sum(dim=1)


class SelectionTrace:
    """Appends the members drawn for every evaluated example to a JSON lines file."""

    def __init__(self, path: Union[str, Path], seed: int):
        self.path = Path(path)
        self.seed = seed
        self.written = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(b"")

    def write(self, selections: torch.Tensor, offset: Optional[int] = None) -> None:
        """Writes one record per row of `selections`, numbering examples from `offset` (default: continue)."""
        start = self.written if offset is None else offset
        lines = [
            orjson.dumps(
                SelectionRecord(example_id=start + row, selected_member_indices=chosen, seed=self.seed).dict()
            )
            for row, chosen in enumerate(selections.tolist())
        ]
        with self.path.open("ab") as handle:
            handle.writelines(line + b"\n" for line in lines)
        self.written = start + len(lines)

    @staticmethod
    def read(path: Union[str, Path]) -> List[SelectionRecord]:
        return [SelectionRecord(**orjson.loads(line)) for line in Path(path).read_bytes().splitlines() if line]

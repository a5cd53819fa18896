import csv
from logging import getLogger
from pathlib import Path
from typing import List, Optional, Sequence, Union

import orjson
import torch
from pydantic import BaseModel

from facm.cmpd import cmpd_predict
from facm.correction import sequence_from_taps
from facm.data import ImageDataset
from facm.enums import SystemId
from facm.exceptions import ImproperlyConfiguredException, ValidationException
from facm.harness.evaluation import percent_correct, predict_dataset, system_predictor
from facm.harness.system import FACMSystem

logger = getLogger(__name__)


class TauPoint(BaseModel):
    tau: int
    accuracy: float


def tau_sweep(
    system: FACMSystem,
    data: ImageDataset,
    *,
    seed: int,
    taus: Optional[Sequence[int]] = None,
    replacement: bool = False,
    batch_size: int = 256,
    stream: str = "tau-sweep",
) -> List[TauPoint]:
    """FACM accuracy for every tau, 1..|C| by default."""
    taus = list(taus or range(1, len(system.correction_set) + 1))
    points = []
    for tau in taus:
        predict = system_predictor(
            system, SystemId.FACM, seed=seed, stream=f"{stream}.{tau}", tau=tau, replacement=replacement
        )
        predicted, _ = predict_dataset(predict, data, batch_size, system.device)
        points.append(TauPoint(tau=tau, accuracy=percent_correct(predicted, data.labels)))
        logger.info("tau %d: %.2f%%", tau, points[-1].accuracy)
    return points


def write_tau_sweep(path: Union[str, Path], points: Sequence[TauPoint]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tau", "accuracy"])
        writer.writerows([point.tau, f"{point.accuracy:.4f}"] for point in points)
    return path


class PrefixRecord(BaseModel):
    """How often an attack changes the condition prefix of g_j, and how f∘g_j fares either way."""

    index: int
    mismatch_fraction: float
    matched_accuracy: Optional[float] = None
    """Accuracy of f∘g_j where the adversarial prefix equals the clean one; `None` when there is no such example."""
    mismatched_accuracy: Optional[float] = None


@torch.no_grad()
def condition_prefix_analysis(
    system: FACMSystem, clean: ImageDataset, adversarial: ImageDataset, batch_size: int = 256
) -> List[PrefixRecord]:
    """Compares the classification sequences of clean and adversarial inputs for every conditioned g_j.

    Raises:
        ImproperlyConfiguredException: the system has no autoencoders.
        ValidationException: the two sets are not aligned.
    """
    if system.cae is None:
        raise ImproperlyConfiguredException(detail=f"a {system.mode.value} system has no conditional autoencoders")
    if len(clean) != len(adversarial) or not torch.equal(clean.labels, adversarial.labels):
        raise ValidationException(detail="clean and adversarial sets must be row-aligned")
    n = system.backbone.n
    device = system.device
    mismatched: List[List[torch.Tensor]] = [[] for _ in range(n)]
    correct: List[List[torch.Tensor]] = [[] for _ in range(n)]
    for (x, labels), (x_adv, _) in zip(clean.batches(batch_size), adversarial.batches(batch_size)):
        x, x_adv, labels = x.to(device), x_adv.to(device), labels.to(device)
        clean_taps = system.backbone.forward_with_taps(x)
        adv_taps = system.backbone.forward_with_taps(x_adv)
        for j in range(1, n):
            differs = sequence_from_taps(system.auxs, clean_taps, j) != sequence_from_taps(system.auxs, adv_taps, j)
            mismatched[j].append(differs.any(dim=1).cpu())
            logits = cmpd_predict(system.cae, system.backbone, list(system.auxs), x_adv, j, taps=adv_taps)
            correct[j].append((logits.argmax(dim=1) == labels).cpu())
    records = []
    for j in range(1, n):
        changed = torch.cat(mismatched[j])
        hit = torch.cat(correct[j]).float()
        records.append(
            PrefixRecord(
                index=j,
                mismatch_fraction=float(changed.float().mean()),
                matched_accuracy=float(hit[~changed].mean() * 100) if (~changed).any() else None,
                mismatched_accuracy=float(hit[changed].mean() * 100) if changed.any() else None,
            )
        )
        logger.info("g_%d: condition prefix changed on %.1f%% of examples", j, records[-1].mismatch_fraction * 100)
    return records


def write_prefix_analysis(path: Union[str, Path], records: Sequence[PrefixRecord]) -> Path:
    path = Path(path)
    path.write_bytes(orjson.dumps([record.dict() for record in records], option=orjson.OPT_INDENT_2))
    return path

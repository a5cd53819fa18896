import csv
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Sequence, Union

import numpy as np
import orjson
import torch
from pydantic import BaseModel

from facm.attacks import make_target
from facm.config import AttackSpec
from facm.data import ImageDataset
from facm.decision import CorrectionSet
from facm.enums import AttackFamily, Setting
from facm.exceptions import ValidationException
from facm.harness.evaluation import attack_dataset
from facm.harness.system import FACMSystem

logger = getLogger(__name__)


@torch.no_grad()
def membership_vectors(
    correction_set: CorrectionSet, data: ImageDataset, batch_size: int = 256
) -> Dict[str, torch.Tensor]:
    """Per member, a bool vector over `data` that is true where the member predicts the label."""
    device = next(correction_set.model.parameters()).device
    hits: Dict[str, List[torch.Tensor]] = {member: [] for member in correction_set.member_ids}
    for inputs, labels in data.batches(batch_size):
        inputs, labels = inputs.to(device), labels.to(device)
        predictions = correction_set.all_logits(inputs).argmax(dim=2)
        for j, member in enumerate(correction_set.member_ids):
            hits[member].append((predictions[:, j] == labels).cpu())
    empty = torch.zeros(0, dtype=torch.bool)
    return {member: torch.cat(chunks) if chunks else empty for member, chunks in hits.items()}


def zeta(first: torch.Tensor, second: torch.Tensor) -> float:
    """Difference metric (|v1 or v2| - |v1 and v2|) / |v1 or v2| of two membership vectors, 0 when both are all
    false.

    Raises:
        ValidationException: the vectors have different lengths.
    """
    if first.shape != second.shape:
        raise ValidationException(
            detail=f"membership vectors differ in shape: {tuple(first.shape)} != {tuple(second.shape)}"
        )
    first, second = first.bool(), second.bool()
    union = int((first | second).sum())
    if union == 0:
        return 0.0
    return (union - int((first & second).sum())) / union


def diversity_matrix(vectors: Mapping[str, torch.Tensor]) -> np.ndarray:
    """Symmetric matrix of pairwise zeta values, in the iteration order of `vectors`."""
    members = list(vectors)
    matrix = np.zeros((len(members), len(members)), dtype=np.float64)
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            matrix[a, b] = matrix[b, a] = zeta(vectors[members[a]], vectors[members[b]])
    return matrix


def mean_off_diagonal(matrix: np.ndarray) -> float:
    size = matrix.shape[0]
    if size < 2:
        return 0.0
    return float(matrix.sum() / (size * (size - 1)))


def write_matrix_csv(path: Union[str, Path], member_ids: Sequence[str], matrix: np.ndarray) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["member", *member_ids])
        for member, row in zip(member_ids, matrix):
            writer.writerow([member, *(f"{value:.6f}" for value in row)])
    return path


def read_matrix_csv(path: Union[str, Path]) -> "DiversityResult":
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    members = rows[0][1:]
    return DiversityResult(members, np.array([[float(cell) for cell in row[1:]] for row in rows[1:]]), {})


class DiversityResult(NamedTuple):
    member_ids: List[str]
    matrix: np.ndarray
    accuracy: Dict[str, float]
    """Accuracy of every member in percent."""


class SweepPoint(BaseModel):
    eps: float
    mean_zeta: float
    accuracy: Dict[str, float]


class DiversitySweep(BaseModel):
    """Grey-box FGSM sweep: per radius, member accuracies and the mean pairwise difference."""

    member_ids: List[str]
    points: List[SweepPoint] = []

    def curves(self) -> Dict[str, List[float]]:
        """Accuracy-vs-radius curve of every member."""
        return {member: [point.accuracy[member] for point in self.points] for member in self.member_ids}

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        payload = {"eps": [point.eps for point in self.points], **self.dict(), "curves": self.curves()}
        path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))
        return path


def diversity_on(correction_set: CorrectionSet, data: ImageDataset, batch_size: int = 256) -> DiversityResult:
    vectors = membership_vectors(correction_set, data, batch_size)
    accuracy = {
        member: float(bits.float().mean().item() * 100.0) if bits.numel() else 0.0 for member, bits in vectors.items()
    }
    return DiversityResult(list(vectors), diversity_matrix(vectors), accuracy)


def diversity_sweep(
    system: FACMSystem,
    data: ImageDataset,
    eps_list: Sequence[float],
    *,
    seed: int,
    batch_size: int = 256,
    output_dir: Union[str, Path, None] = None,
) -> DiversitySweep:
    """Attacks `data` with grey-box FGSM at every radius and measures every correction member on the result.

    Writes `diversity_eps<eps>.csv` for every radius into `output_dir` when given.
    """
    target = make_target(system, Setting.GREY_BOX, seed=seed)
    correction_set = system.correction_set
    sweep = DiversitySweep(member_ids=correction_set.member_ids)
    for eps in eps_list:
        spec = AttackSpec(family=AttackFamily.FGSM, eps=eps, alpha=eps, steps=1, name="fgsm")
        attacked, _ = attack_dataset(target, data, spec, seed=seed, batch_size=batch_size, device=system.device)
        result = diversity_on(correction_set, attacked, batch_size)
        point = SweepPoint(eps=float(eps), mean_zeta=mean_off_diagonal(result.matrix), accuracy=result.accuracy)
        sweep.points.append(point)
        if output_dir is not None:
            write_matrix_csv(Path(output_dir) / f"diversity_eps{eps:.4g}.csv", result.member_ids, result.matrix)
        logger.info(
            "diversity eps=%.4g: mean zeta %.4f, best FA %.2f%% vs backbone %.2f%%",
            eps,
            point.mean_zeta,
            max((acc for member, acc in result.accuracy.items() if member.startswith("fa")), default=float("nan")),
            result.accuracy["f"],
        )
    return sweep

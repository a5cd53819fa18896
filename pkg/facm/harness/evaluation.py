import csv
import time
from logging import getLogger
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import torch
from pydantic import BaseModel, confloat, conint
from tqdm.auto import tqdm

from facm.attacks import TargetAdapter, make_target, run_attack
from facm.config import AttackSpec, EvalConfig
from facm.constants import EVAL_REPORT_HEADER, TIMINGS_HEADER
from facm.data import ImageDataset
from facm.decision import SelectionTrace
from facm.enums import AttackFamily, Setting, SystemId
from facm.exceptions import ValidationException
from facm.harness.system import FACMSystem
from facm.utils.seeding import make_generator

logger = getLogger(__name__)

CLEAN = "clean"


class EvalRow(BaseModel):
    """Accuracy of one system under one attack."""

    system_id: str
    setting: Setting
    attack: str
    eps: float
    accuracy: confloat(ge=0, le=100)  # type: ignore[valid-type]
    """Percent of examples classified correctly."""
    n_examples: conint(ge=0)  # type: ignore[valid-type]
    attack_wall_time_s: confloat(ge=0) = 0.0  # type: ignore[valid-type]
    inference_wall_time_s: confloat(ge=0) = 0.0  # type: ignore[valid-type]
    seed: int

    def cells(self, with_times: bool = True) -> List[str]:
        attack_time = self.attack_wall_time_s if with_times else 0.0
        inference_time = self.inference_wall_time_s if with_times else 0.0
        return [
            self.system_id,
            self.setting.value,
            self.attack,
            f"{self.eps:.6g}",
            f"{self.accuracy:.4f}",
            str(self.n_examples),
            f"{attack_time:.6f}",
            f"{inference_time:.6f}",
            str(self.seed),
        ]


class EvalReport(BaseModel):
    rows: List[EvalRow] = []

    def add(self, row: EvalRow) -> None:
        self.rows.append(row)

    def write_csv(self, path: Union[str, Path], reproducible: bool = True) -> Path:
        """Writes the report; with `reproducible` the wall-time columns hold zeros."""
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(EVAL_REPORT_HEADER)
            writer.writerows(row.cells(with_times=not reproducible) for row in self.rows)
        return path

    def write_timings(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TIMINGS_HEADER)
            for row in self.rows:
                writer.writerow(
                    [
                        row.system_id,
                        row.setting.value,
                        row.attack,
                        f"{row.eps:.6g}",
                        f"{row.attack_wall_time_s:.6f}",
                        f"{row.inference_wall_time_s:.6f}",
                    ]
                )
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "EvalReport":
        with Path(path).open(newline="") as handle:
            return cls(rows=[EvalRow(**record) for record in csv.DictReader(handle)])


def evaluation_slice(
    data: ImageDataset, spec: Optional[AttackSpec], setting: Setting, config: EvalConfig
) -> ImageDataset:
    """Examples an evaluation runs on.

    Square sees the first `square_limit` examples and other white-box attacks the first `white_box_limit`; everything
    else runs on the whole split.
    """
    if spec is not None and spec.family == AttackFamily.SQUARE:
        return data.head(config.square_limit)
    if spec is not None and setting == Setting.WHITE_BOX:
        return data.head(config.white_box_limit)
    return data


def attack_dataset(
    target: TargetAdapter,
    data: ImageDataset,
    spec: AttackSpec,
    *,
    seed: int,
    batch_size: int = 256,
    device: torch.device = torch.device("cpu"),
    progress: bool = False,
) -> Tuple[ImageDataset, float]:
    """Attacks every batch of `data`; returns the adversarial split and the attack wall time in seconds.

    Batch `k` draws its randomness from the stream `attack.<label>.<k>`.
    """
    adversarial: List[torch.Tensor] = []
    elapsed = 0.0
    batches = tqdm(
        data.batches(batch_size),
        total=data.num_batches(batch_size),
        desc=f"{spec.label} {target.setting.value}",
        disable=not progress,
        leave=False,
    )
    for index, (inputs, labels) in enumerate(batches):
        generator = make_generator(seed, "attack", spec.label, index)
        started = time.perf_counter()
        result = run_attack(target, inputs.to(device), labels.to(device), spec, generator)
        elapsed += time.perf_counter() - started
        adversarial.append(result.detach().cpu())
    images = torch.cat(adversarial) if adversarial else data.images[:0]
    return ImageDataset(images, data.labels), elapsed


def system_predictor(
    system: FACMSystem,
    system_id: SystemId,
    *,
    seed: int,
    stream: str,
    tau: int = 1,
    replacement: bool = False,
    trace: Optional[SelectionTrace] = None,
) -> Callable[[torch.Tensor, int], torch.Tensor]:
    """Maps (batch, batch index) to class predictions of a system.

    The stochastic predictor draws batch `k` from the stream `eval.<stream>.<k>`, independent of the streams the
    attacks used.
    """
    if system_id == SystemId.BACKBONE:

        @torch.no_grad()
        def predict_backbone(inputs: torch.Tensor, _: int) -> torch.Tensor:
            return system.backbone(inputs).argmax(dim=1)

        return predict_backbone

    def predict_facm(inputs: torch.Tensor, index: int) -> torch.Tensor:
        generator = make_generator(seed, "eval", stream, index)
        prediction = system.predict(inputs, tau=tau, generator=generator, replacement=replacement)
        if trace is not None:
            trace.write(prediction.selections)
        return prediction.probabilities.argmax(dim=1)

    return predict_facm


def predict_dataset(
    predict: Callable[[torch.Tensor, int], torch.Tensor], data: ImageDataset, batch_size: int, device: torch.device
) -> Tuple[torch.Tensor, float]:
    """Predictions over `data` in order and the inference wall time in seconds."""
    outputs: List[torch.Tensor] = []
    elapsed = 0.0
    for index, (inputs, _) in enumerate(data.batches(batch_size)):
        started = time.perf_counter()
        outputs.append(predict(inputs.to(device), index).cpu())
        elapsed += time.perf_counter() - started
    return (torch.cat(outputs) if outputs else torch.empty(0, dtype=torch.long)), elapsed


def percent_correct(predicted: torch.Tensor, labels: torch.Tensor) -> float:
    if labels.numel() == 0:
        raise ValidationException(detail="accuracy of an empty evaluation set is undefined")
    return float((predicted == labels.cpu()).float().mean().item() * 100.0)


def evaluate_accuracy(
    system: FACMSystem,
    data: ImageDataset,
    spec: Optional[AttackSpec],
    setting: Setting,
    *,
    system_id: SystemId = SystemId.FACM,
    seed: int = 0,
    config: Optional[EvalConfig] = None,
    adversarial: Optional[Tuple[ImageDataset, float]] = None,
    trace: Optional[SelectionTrace] = None,
) -> EvalRow:
    """Accuracy of a system on clean or attacked examples.

    The backbone system is always attacked through its own gradient. The FACM system is attacked through the
    backbone in the grey-box setting and through the surrogate in the white-box setting, and then predicts with
    the stochastic selection.

    Args:
        system: trained system.
        data: evaluation examples; already sliced to the protocol size.
        spec: attack, or `None` for clean accuracy.
        setting: adversary knowledge.
        system_id: which predictor is scored.
        seed: root seed of the attack and selection streams.
        config: tau, selection and batch size.
        adversarial: adversarial examples and their attack time, when already generated for `data`.
        trace: selection trace to append to.

    Returns:
        EvalRow
    """
    config = config or EvalConfig()
    system_id = SystemId(system_id)
    device = system.device
    attack_time = 0.0
    if spec is not None:
        if adversarial is None:
            target_setting = Setting.GREY_BOX if system_id == SystemId.BACKBONE else setting
            target = make_target(system, target_setting, seed=seed, tau=config.tau, replacement=config.replacement)
            adversarial = attack_dataset(
                target, data, spec, seed=seed, batch_size=config.batch_size, device=device, progress=config.progress
            )
        data, attack_time = adversarial
    label = CLEAN if spec is None else spec.label
    stream = f"{setting.value}.{label}"
    predict = system_predictor(
        system, system_id, seed=seed, stream=stream, tau=config.tau, replacement=config.replacement, trace=trace
    )
    predicted, inference_time = predict_dataset(predict, data, config.batch_size, device)
    row = EvalRow(
        system_id=system.mode.value if system_id != SystemId.BACKBONE else SystemId.BACKBONE.value,
        setting=setting,
        attack=label,
        eps=0.0 if spec is None else float(spec.eps),
        accuracy=percent_correct(predicted, data.labels),
        n_examples=len(data),
        attack_wall_time_s=attack_time,
        inference_wall_time_s=inference_time,
        seed=seed,
    )
    logger.info(
        "%s %s %s eps=%.4g: %.2f%% on %d examples",
        row.system_id,
        row.setting.value,
        row.attack,
        row.eps,
        row.accuracy,
        row.n_examples,
    )
    return row

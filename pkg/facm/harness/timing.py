from logging import getLogger
from pathlib import Path
from typing import Callable, NamedTuple, Tuple, Union

import orjson
import torch
from pydantic import BaseModel

from facm.attacks import TargetAdapter, make_target
from facm.config import AttackSpec
from facm.data import ImageDataset
from facm.enums import Setting, SystemId
from facm.harness.evaluation import attack_dataset, predict_dataset, system_predictor
from facm.harness.system import FACMSystem

logger = getLogger(__name__)


class Contender(NamedTuple):
    """A predictor together with the adapter an adversary attacks it through."""

    name: str
    target: TargetAdapter
    predict: Callable[[torch.Tensor, int], torch.Tensor]


class TimingRecord(BaseModel):
    attack: str
    n_examples: int
    baseline: str
    defended: str
    baseline_attack_s: float
    defended_attack_s: float
    baseline_inference_s: float
    defended_inference_s: float

    @property
    def attack_ratio(self) -> float:
        return self.defended_attack_s / max(self.baseline_attack_s, 1e-12)

    @property
    def inference_ratio(self) -> float:
        return self.defended_inference_s / max(self.baseline_inference_s, 1e-12)

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        payload = {**self.dict(), "attack_ratio": self.attack_ratio, "inference_ratio": self.inference_ratio}
        path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))
        return path


def system_contenders(system: FACMSystem, *, seed: int, tau: int = 1) -> Tuple[Contender, Contender]:
    """The backbone alone and the full system under white-box access."""
    baseline = Contender(
        SystemId.BACKBONE.value,
        make_target(system, Setting.GREY_BOX, seed=seed),
        system_predictor(system, SystemId.BACKBONE, seed=seed, stream="timing"),
    )
    defended = Contender(
        system.mode.value,
        make_target(system, Setting.WHITE_BOX, seed=seed, tau=tau),
        system_predictor(system, SystemId.FACM, seed=seed, stream="timing", tau=tau),
    )
    return baseline, defended


def timing_report(
    pair: Tuple[Contender, Contender],
    spec: AttackSpec,
    data: ImageDataset,
    *,
    seed: int,
    batch_size: int = 256,
    device: torch.device = torch.device("cpu"),
) -> TimingRecord:
    """Wall-clock attack and inference time of two contenders on the same examples."""
    seconds = []
    for contender in pair:
        _, attack_s = attack_dataset(contender.target, data, spec, seed=seed, batch_size=batch_size, device=device)
        _, inference_s = predict_dataset(contender.predict, data, batch_size, device)
        seconds.append((attack_s, inference_s))
    record = TimingRecord(
        attack=spec.label,
        n_examples=len(data),
        baseline=pair[0].name,
        defended=pair[1].name,
        baseline_attack_s=seconds[0][0],
        defended_attack_s=seconds[1][0],
        baseline_inference_s=seconds[0][1],
        defended_inference_s=seconds[1][1],
    )
    logger.info(
        "%s timing: attack %.1fx, inference %.1fx (%s vs %s)",
        spec.label,
        record.attack_ratio,
        record.inference_ratio,
        record.defended,
        record.baseline,
    )
    return record

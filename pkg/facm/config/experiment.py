from hashlib import sha256
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import orjson
import yaml
from pydantic import BaseModel, ValidationError, conint, validator

from facm.config.attack import AttackSpec
from facm.config.backbone import BackboneSpec, TrainConfig
from facm.config.correction import CMPDConfig, DecisionConfig, FinetuneConfig
from facm.enums import CorrectionMode, DatasetName, FinetuneMode, Setting, Stage, SystemId
from facm.exceptions import ImproperlyConfiguredException
from facm.logging import LoggingConfig
from facm.utils.numbers import parse_fraction

STAGE_SECTIONS: Dict[Stage, List[str]] = {
    Stage.BACKBONE: ["seed", "dataset", "backbone", "train"],
    Stage.FA: ["fa"],
    Stage.CMPD: ["cmpd"],
    Stage.DECISION: ["decision", "correction_mode"],
    Stage.EVALUATE: ["attacks", "eval"],
    Stage.DIVERSITY: [],
    Stage.TIMING: [],
}


class DatasetConfig(BaseModel):
    """Where the image files live and how much of them is used."""

    class Config:
        extra = "forbid"

    name: DatasetName = DatasetName.MNIST
    """Dataset identifier; selects the reader and the hyperparameter presets."""
    path: Path = Path("data")
    """Directory holding the IDX files (MNIST) or the binary batches (CIFAR)."""
    train_limit: Optional[conint(gt=0)] = None  # type: ignore[valid-type]
    """Use only the first N training examples."""
    test_limit: Optional[conint(gt=0)] = None  # type: ignore[valid-type]
    """Use only the first N test examples."""


class EvalConfig(BaseModel):
    """Evaluation protocol."""

    class Config:
        extra = "forbid"

    batch_size: conint(ge=1) = 256  # type: ignore[valid-type]
    tau: conint(ge=1) = 1  # type: ignore[valid-type]
    """Members averaged by the stochastic predictor."""
    replacement: bool = False
    """Draw members with replacement."""
    settings: List[Setting] = [Setting.GREY_BOX, Setting.WHITE_BOX]
    systems: List[SystemId] = [SystemId.BACKBONE, SystemId.FACM]
    white_box_limit: Optional[conint(gt=0)] = 2000  # type: ignore[valid-type]
    """Test examples used for white-box attacks; `None` evaluates the full test set."""
    square_limit: conint(gt=0) = 1000  # type: ignore[valid-type]
    """Test examples attacked by Square."""
    sweep_eps: List[float] = [0.05, 0.1, 0.2, 0.3]
    """Grey-box FGSM radii of the correction and diversity sweeps."""
    sweep_limit: Optional[conint(gt=0)] = None  # type: ignore[valid-type]
    timing_attack: str = "pgd"
    """Attack preset timed against both systems."""
    timing_limit: conint(gt=0) = 500  # type: ignore[valid-type]
    reproducible_report: bool = True
    """Write zeros in the wall-time columns of the report and the measured times to a separate file."""
    write_traces: bool = False
    """Write member selections as JSON lines."""
    tau_sweep: bool = True
    condition_analysis: bool = True
    progress: bool = False

    @validator("sweep_eps", pre=True)
    def sweep_fractions(cls, v: Any) -> Any:  # pylint: disable=no-self-argument
        if isinstance(v, (list, tuple)):
            return [parse_fraction(item) for item in v]
        return v


class ExperimentConfig(BaseModel):
    """Root configuration of an experiment run.

    Load it with [from_file][facm.config.ExperimentConfig.from_file]: keys given in the file are merged over the
    presets of the named dataset, so a file holding only `dataset: {name: mnist, path: ...}` is a complete run.
    """

    class Config:
        extra = "forbid"

    seed: conint(ge=0, lt=2**63) = 0  # type: ignore[valid-type]
    """Root seed; every RNG stream is derived from it."""
    dataset: DatasetConfig = DatasetConfig()
    backbone: BackboneSpec = BackboneSpec()
    train: TrainConfig = TrainConfig()
    fa: FinetuneConfig = FinetuneConfig()
    """Auxiliary classifier and FA module fine-tuning."""
    cmpd: CMPDConfig = CMPDConfig()
    decision: DecisionConfig = DecisionConfig()
    attacks: List[AttackSpec] = []
    """Attacks evaluated against every system and setting."""
    eval: EvalConfig = EvalConfig()
    correction_mode: Optional[CorrectionMode] = None
    """Composition of the correction set; defaults to fast-FACM for TRADES backbones."""
    output_dir: Path = Path("artifacts")
    device: str = "cpu"
    logging: LoggingConfig = LoggingConfig()

    @validator("backbone", always=True)
    def backbone_seed(  # pylint: disable=no-self-argument
        cls, v: BackboneSpec, values: Dict[str, Any]
    ) -> BackboneSpec:
        if v.seed is None and "seed" in values:
            return v.copy(update={"seed": values["seed"]})
        return v

    @validator("fa", always=True)
    def fa_inner_attack(  # pylint: disable=no-self-argument
        cls, v: FinetuneConfig, values: Dict[str, Any]
    ) -> FinetuneConfig:
        if v.mode == FinetuneMode.TRADES and "train" in values:
            return v.resolve(values["train"])
        return v

    @validator("decision")
    def decision_lists(cls, v: DecisionConfig) -> DecisionConfig:  # pylint: disable=no-self-argument
        if not v.eps_list:
            raise ValueError("decision.eps_list must not be empty")
        if len(v.eps_list) != len(v.alpha_list):
            raise ValueError(
                f"decision.eps_list has {len(v.eps_list)} entries but decision.alpha_list has {len(v.alpha_list)}"
            )
        return v

    @property
    def mode(self) -> CorrectionMode:
        if self.correction_mode is not None:
            return self.correction_mode
        return CorrectionMode.FAST_FACM if self.train.is_trades else CorrectionMode.FACM

    def config_hash(self) -> str:
        """Sha256 of the key-sorted JSON rendering of everything but logging and paths."""
        return self._digest(self.dict(exclude={"logging", "output_dir", "device"}))

    def stage_hash(self, stage: Stage) -> str:
        """Hash of the configuration sections a stage and all its predecessors depend on."""
        keys: List[str] = []
        for item in Stage:
            keys.extend(STAGE_SECTIONS[item])
            if item == stage:
                break
        data = self.dict(include=set(keys))
        data.pop("dataset", None)
        data["dataset"] = self.dataset.dict(exclude={"path"})
        return self._digest(data)

    @staticmethod
    def _digest(data: Dict[str, Any]) -> str:
        return sha256(orjson.dumps(data, default=str, option=orjson.OPT_SORT_KEYS)).hexdigest()

    @classmethod
    def preset(
        cls, dataset: Union[DatasetName, str] = DatasetName.MNIST, seed: int = 0, trades: bool = False
    ) -> "ExperimentConfig":
        """The protocol for a dataset: backbone, schedules, decision augmentation and the attack table."""
        dataset = DatasetName(dataset)
        mnist = dataset == DatasetName.MNIST
        return cls(
            seed=seed,
            dataset=DatasetConfig(name=dataset),
            backbone=BackboneSpec.preset(dataset, seed=seed),
            train=TrainConfig.preset(dataset, trades=trades),
            fa=FinetuneConfig(mode=FinetuneMode.TRADES if trades else FinetuneMode.NATURAL),
            cmpd=CMPDConfig(),
            decision=DecisionConfig.preset(dataset),
            attacks=[
                AttackSpec.preset(name, dataset) for name in ("fgsm", "pgd", "mifgsm", "cw", "deepfool_l2", "square")
            ],
            eval=EvalConfig(sweep_eps=[0.05, 0.1, 0.2, 0.3] if mnist else [2 / 255, 4 / 255, 8 / 255, 16 / 255]),
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Loads a YAML or JSON configuration file.

        Args:
            path: file ending in `.yaml`, `.yml` or `.json`.

        Raises:
            ImproperlyConfiguredException: the file cannot be parsed or does not validate.

        Returns:
            ExperimentConfig
        """
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise ImproperlyConfiguredException(detail=f"cannot read configuration file {path}: {e}") from e
        try:
            data = orjson.loads(raw) if path.suffix == ".json" else yaml.safe_load(raw)
        except (orjson.JSONDecodeError, yaml.YAMLError) as e:
            raise ImproperlyConfiguredException(detail=f"cannot parse {path}: {e}") from e
        return cls.from_dict(data or {})

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Validates a mapping merged over the presets of the dataset it names."""
        if not isinstance(data, dict):
            raise ImproperlyConfiguredException(detail="configuration root must be a mapping")
        try:
            dataset = DatasetName((data.get("dataset") or {}).get("name", DatasetName.MNIST))
            base = cls.preset(dataset, seed=int(data.get("seed", 0)), trades=_wants_trades(data))
            merged = _deep_merge(base.dict(exclude_unset=True), data)
            if "backbone" in data and "arch_id" in data["backbone"]:
                merged["backbone"] = data["backbone"]
            return cls(**merged)
        except (ValidationError, ValueError, TypeError) as e:
            raise ImproperlyConfiguredException(detail=str(e)) from e


def _wants_trades(data: Dict[str, Any]) -> bool:
    train = data.get("train") or {}
    return bool(train.get("trades_beta", 0))


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    result = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result

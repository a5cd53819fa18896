"""Staged experiment runner.

Every stage persists its outputs in the artifact directory and records the hash of the configuration sections it
depends on in `manifest.json`. A stage whose recorded hash matches and whose outputs exist is restored instead of
recomputed; once a stage is recomputed, every later stage is recomputed too.
"""
from logging import getLogger
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import orjson
from pydantic import BaseModel

from facm.attacks import make_target
from facm.backbone import train_backbone
from facm.cmpd import finetune_cmpd
from facm.config import AttackSpec, ExperimentConfig
from facm.constants import CHECKPOINT_FORMAT_VERSION, CHECKPOINT_SUFFIX
from facm.correction import finetune_auxiliaries, finetune_fa_modules
from facm.data import ImageDataset, load_dataset
from facm.decision import SelectionTrace, train_decision
from facm.enums import AttackFamily, CorrectionMode, Setting, Stage, SystemId
from facm.exceptions import CheckpointNotFoundException, StageFailedException, create_exception_record
from facm.harness.analysis import condition_prefix_analysis, tau_sweep, write_prefix_analysis, write_tau_sweep
from facm.harness.checkpoint import load_checkpoint, save_checkpoint
from facm.harness.diversity import diversity_sweep
from facm.harness.evaluation import EvalReport, attack_dataset, evaluate_accuracy, evaluation_slice
from facm.harness.system import FACMSystem
from facm.harness.timing import system_contenders, timing_report
from facm.training import TrainHistory

logger = getLogger(__name__)

MODEL_STAGES: Dict[Stage, List[str]] = {
    Stage.BACKBONE: ["backbone"],
    Stage.FA: ["aux", "fa"],
    Stage.CMPD: ["cmpd"],
    Stage.DECISION: ["decision"],
}
RNG_STREAMS = [
    "init.backbone",
    "init.aux",
    "init.fa",
    "init.cmpd",
    "init.decision",
    "data-shuffle.<phase>",
    "trades.<phase>",
    "decision.augment",
    "attack.<label>.<batch>",
    "attack.white-box-predict",
    "eval.<setting>.<label>.<batch>",
]


class StageRecord(BaseModel):
    stage: Stage
    hash: str
    artifacts: List[str] = []


class RunManifest(BaseModel):
    """Everything needed to regenerate the artifacts of a run."""

    seed: int
    config_hash: str
    mode: CorrectionMode
    checkpoint_format_version: int = CHECKPOINT_FORMAT_VERSION
    rng_streams: List[str] = RNG_STREAMS
    stages: Dict[str, StageRecord] = {}


class ExperimentRunner:
    """Runs the stages of one configuration against one artifact directory."""

    def __init__(self, config: ExperimentConfig, *, resume: bool = True):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.resume = resume
        self.system = FACMSystem.build(config)
        self.manifest = self._load_manifest()
        self._splits: Optional[Tuple[ImageDataset, ImageDataset]] = None
        self._recomputed = False
        self._handlers: Dict[Stage, Callable[[str], List[str]]] = {
            Stage.BACKBONE: self._backbone,
            Stage.FA: self._fa,
            Stage.CMPD: self._cmpd,
            Stage.DECISION: self._decision,
            Stage.EVALUATE: self._evaluate,
            Stage.DIVERSITY: self._diversity,
            Stage.TIMING: self._timing,
        }

    @property
    def splits(self) -> Tuple[ImageDataset, ImageDataset]:
        if self._splits is None:
            self._splits = load_dataset(self.config.dataset)
        return self._splits

    def _load_manifest(self) -> RunManifest:
        path = self.output_dir / "manifest.json"
        fresh = RunManifest(seed=self.config.seed, config_hash=self.config.config_hash(), mode=self.config.mode)
        if not self.resume or not path.exists():
            return fresh
        previous = RunManifest(**orjson.loads(path.read_bytes()))
        if previous.seed != fresh.seed or previous.mode != fresh.mode:
            return fresh
        fresh.stages = previous.stages
        return fresh

    def _write_manifest(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        (self.output_dir / "manifest.json").write_bytes(
            orjson.dumps(self.manifest.dict(), option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2)
        )
        (self.output_dir / "config.json").write_bytes(
            orjson.dumps(self.config.dict(), default=str, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2)
        )

    def checkpoint_path(self, stage: Stage) -> Path:
        return self.output_dir / f"{stage.value}{CHECKPOINT_SUFFIX}"

    def _is_current(self, stage: Stage, digest: str) -> bool:
        record = self.manifest.stages.get(stage.value)
        if self._recomputed or record is None or record.hash != digest:
            return False
        return all((self.output_dir / artifact).exists() for artifact in record.artifacts)

    def _restore(self, stage: Stage) -> None:
        if stage in MODEL_STAGES and self._applies(stage):
            load_checkpoint(self.checkpoint_path(stage), self.system, MODEL_STAGES[stage])

    def _applies(self, stage: Stage) -> bool:
        return stage != Stage.CMPD or self.system.mode == CorrectionMode.FACM

    def run(self, stages: Optional[Sequence[Stage]] = None) -> Path:
        """Runs the requested stages, all of them by default.

        Model stages before the last requested one are restored from their checkpoints.

        Raises:
            CheckpointNotFoundException: a prerequisite stage has no checkpoint.
            StageFailedException: a stage aborted; `failure.json` describes it.

        Returns:
            The artifact directory.
        """
        requested = list(Stage) if stages is None else [Stage(stage) for stage in stages]
        if not requested:
            return self.output_dir
        order = list(Stage)
        last = max(order.index(stage) for stage in requested)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        for stage in order[: last + 1]:
            if stage in requested:
                self._run_stage(stage)
            else:
                self._require(stage)
        self._write_manifest()
        return self.output_dir

    def restore_models(self) -> FACMSystem:
        """Loads every trained component from the artifact directory without running a stage.

        Raises:
            CheckpointNotFoundException: a model stage has no checkpoint.
        """
        for stage in MODEL_STAGES:
            self._require(stage)
        return self.system.eval()

    def _require(self, stage: Stage) -> None:
        if stage not in MODEL_STAGES or not self._applies(stage):
            return
        path = self.checkpoint_path(stage)
        if not path.exists():
            raise CheckpointNotFoundException(detail=f"stage '{stage.value}' has not run yet, {path} is missing")
        self._restore(stage)

    def _run_stage(self, stage: Stage) -> None:
        digest = self.config.stage_hash(stage)
        if self._is_current(stage, digest):
            logger.info("stage %s is up to date, restoring", stage.value)
            self._restore(stage)
            return
        logger.info("stage %s: start", stage.value)
        try:
            artifacts = self._handlers[stage](digest) if self._applies(stage) else []
        except Exception as e:
            failure = StageFailedException(stage=stage.value, detail=f"stage '{stage.value}' failed: {e}")
            failure.__cause__ = e
            (self.output_dir / "failure.json").write_bytes(
                orjson.dumps(create_exception_record(failure, include_traceback=True), option=orjson.OPT_INDENT_2)
            )
            self._write_manifest()
            raise failure from e
        self._recomputed = True
        self.manifest.stages[stage.value] = StageRecord(stage=stage, hash=digest, artifacts=artifacts)
        self._write_manifest()
        failure_path = self.output_dir / "failure.json"
        if failure_path.exists():
            failure_path.unlink()
        logger.info("stage %s: done", stage.value)

    def _save(self, stage: Stage, digest: str, history: Optional[TrainHistory] = None) -> List[str]:
        path = save_checkpoint(
            self.checkpoint_path(stage), self.system, MODEL_STAGES[stage], config_hash=digest, stage=stage.value
        )
        artifacts = [path.name]
        if history is not None:
            history_path = self.output_dir / f"history_{stage.value}.json"
            history_path.write_bytes(orjson.dumps(history.dict(), option=orjson.OPT_INDENT_2))
            artifacts.append(history_path.name)
        return artifacts

    def _backbone(self, digest: str) -> List[str]:
        train, test = self.splits
        _, history = train_backbone(self.system.backbone, train, self.config.train, seed=self.config.seed, test=test)
        return self._save(Stage.BACKBONE, digest, history)

    def _fa(self, digest: str) -> List[str]:
        train, test = self.splits
        system, config = self.system, self.config
        _, aux_history = finetune_auxiliaries(
            list(system.auxs), system.backbone, train, config.fa, seed=config.seed, test=test
        )
        _, fa_history = finetune_fa_modules(
            list(system.fas), list(system.auxs), system.backbone, train, config.fa, seed=config.seed, test=test
        )
        history = TrainHistory(
            phase="fa",
            epochs=aux_history.epochs + fa_history.epochs,
            step_losses=aux_history.step_losses + fa_history.step_losses,
        )
        return self._save(Stage.FA, digest, history)

    def _cmpd(self, digest: str) -> List[str]:
        train, _ = self.splits
        system = self.system
        _, history = finetune_cmpd(
            system.cae,  # type: ignore[arg-type]
            system.backbone,
            list(system.auxs),
            train,
            self.config.cmpd,
            seed=self.config.seed,
        )
        return self._save(Stage.CMPD, digest, history)

    def _decision(self, digest: str) -> List[str]:
        train, _ = self.splits
        _, history = train_decision(
            self.system.decision,  # type: ignore[arg-type]
            self.system.correction_set,
            train,
            self.config.decision,
            seed=self.config.seed,
        )
        return self._save(Stage.DECISION, digest, history)

    def _evaluate(self, _: str) -> List[str]:
        _, test = self.splits
        system, config, seed = self.system.eval(), self.config.eval, self.config.seed
        report = EvalReport()
        scored = [SystemId.BACKBONE] if SystemId.BACKBONE in config.systems else []
        if any(system_id != SystemId.BACKBONE for system_id in config.systems):
            scored.append(SystemId.FACM)
        traces_dir = self.output_dir / "traces"

        def trace(system_id: SystemId, name: str) -> Optional[SelectionTrace]:
            if not config.write_traces or system_id == SystemId.BACKBONE:
                return None
            return SelectionTrace(traces_dir / f"{name}.jsonl", seed)

        for system_id in scored:
            report.add(
                evaluate_accuracy(
                    system,
                    test,
                    None,
                    Setting.GREY_BOX,
                    system_id=system_id,
                    seed=seed,
                    config=config,
                    trace=trace(system_id, "clean"),
                )
            )
        for spec in self.config.attacks:
            if Setting.GREY_BOX in config.settings:
                data = evaluation_slice(test, spec, Setting.GREY_BOX, config)
                adversarial = attack_dataset(
                    make_target(system, Setting.GREY_BOX, seed=seed),
                    data,
                    spec,
                    seed=seed,
                    batch_size=config.batch_size,
                    device=system.device,
                    progress=config.progress,
                )
                for system_id in scored:
                    report.add(
                        evaluate_accuracy(
                            system,
                            data,
                            spec,
                            Setting.GREY_BOX,
                            system_id=system_id,
                            seed=seed,
                            config=config,
                            adversarial=adversarial,
                            trace=trace(system_id, f"grey_box_{spec.label}"),
                        )
                    )
            if Setting.WHITE_BOX in config.settings and SystemId.FACM in scored:
                report.add(
                    evaluate_accuracy(
                        system,
                        evaluation_slice(test, spec, Setting.WHITE_BOX, config),
                        spec,
                        Setting.WHITE_BOX,
                        system_id=SystemId.FACM,
                        seed=seed,
                        config=config,
                        trace=trace(SystemId.FACM, f"white_box_{spec.label}"),
                    )
                )
        report.write_csv(self.output_dir / "report.csv", reproducible=config.reproducible_report)
        report.write_timings(self.output_dir / "timings.csv")
        artifacts = ["report.csv", "timings.csv"]
        if config.write_traces:
            artifacts.extend(str(path.relative_to(self.output_dir)) for path in sorted(traces_dir.glob("*.jsonl")))
        return artifacts

    def _diversity(self, _: str) -> List[str]:
        _, test = self.splits
        system, config, seed = self.system.eval(), self.config.eval, self.config.seed
        data = test.head(config.sweep_limit)
        sweep = diversity_sweep(
            system, data, config.sweep_eps, seed=seed, batch_size=config.batch_size, output_dir=self.output_dir
        )
        sweep.write_json(self.output_dir / "accuracy_curves.json")
        artifacts = ["accuracy_curves.json"] + [f"diversity_eps{eps:.4g}.csv" for eps in config.sweep_eps]
        if config.tau_sweep:
            points = tau_sweep(system, data, seed=seed, replacement=config.replacement, batch_size=config.batch_size)
            write_tau_sweep(self.output_dir / "tau_sweep.csv", points)
            artifacts.append("tau_sweep.csv")
        if config.condition_analysis and system.cae is not None:
            eps = max(config.sweep_eps)
            spec = AttackSpec(family=AttackFamily.FGSM, eps=eps, alpha=eps, name="fgsm")
            adversarial, _ = attack_dataset(
                make_target(system, Setting.GREY_BOX, seed=seed),
                data,
                spec,
                seed=seed,
                batch_size=config.batch_size,
                device=system.device,
            )
            records = condition_prefix_analysis(system, data, adversarial, config.batch_size)
            write_prefix_analysis(self.output_dir / "condition_prefix.json", records)
            artifacts.append("condition_prefix.json")
        return artifacts

    def _timing(self, _: str) -> List[str]:
        _, test = self.splits
        config = self.config
        spec = next(
            (attack for attack in config.attacks if attack.label == config.eval.timing_attack),
            None,
        ) or AttackSpec.preset(config.eval.timing_attack, config.dataset.name)
        record = timing_report(
            system_contenders(self.system.eval(), seed=config.seed, tau=config.eval.tau),
            spec,
            test.head(config.eval.timing_limit),
            seed=config.seed,
            batch_size=config.eval.batch_size,
            device=self.system.device,
        )
        record.write_json(self.output_dir / "timing.json")
        return ["timing.json"]


def run_experiment(
    config: Union[ExperimentConfig, str, Path], *, stages: Optional[Sequence[Stage]] = None, resume: bool = True
) -> Path:
    """Runs a configured experiment and returns its artifact directory.

    Args:
        config: configuration, or the path of a YAML or JSON configuration file.
        stages: stages to run; all of them by default.
        resume: reuse the outputs of stages whose configuration did not change.

    Raises:
        StageFailedException: a stage aborted; `failure.json` in the artifact directory describes it.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_file(config)
    return ExperimentRunner(config, resume=resume).run(stages)

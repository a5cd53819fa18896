from pathlib import Path
from typing import Dict, Sequence

import orjson
import pytest

from facm.config import DatasetConfig, ExperimentConfig
from facm.constants import EVAL_REPORT_HEADER
from facm.enums import CorrectionMode, Stage
from facm.exceptions import CheckpointNotFoundException, StageFailedException
from facm.harness import EvalReport, ExperimentRunner, RunManifest, run_experiment
from facm.testing import create_test_config
from facm.utils import parameter_hash

CHECKPOINTS = ["backbone.facm", "fa.facm", "cmpd.facm", "decision.facm"]


def _mtimes(output_dir: Path, names: Sequence[str] = tuple(CHECKPOINTS)) -> Dict[str, int]:
    return {name: (output_dir / name).stat().st_mtime_ns for name in names}


def test_full_run_resumes_and_reproduces(test_config: ExperimentConfig) -> None:
    output_dir = run_experiment(test_config)
    for name in CHECKPOINTS + ["report.csv", "timings.csv", "accuracy_curves.json", "timing.json", "tau_sweep.csv"]:
        assert (output_dir / name).exists(), name
    assert (output_dir / "condition_prefix.json").exists()
    assert not (output_dir / "failure.json").exists()

    manifest = RunManifest(**orjson.loads((output_dir / "manifest.json").read_bytes()))
    assert set(manifest.stages) == {stage.value for stage in Stage}
    assert manifest.config_hash == test_config.config_hash()
    assert manifest.stages["backbone"].hash == test_config.stage_hash(Stage.BACKBONE)

    report = EvalReport.read_csv(output_dir / "report.csv")
    assert (output_dir / "report.csv").read_text().splitlines()[0] == ",".join(EVAL_REPORT_HEADER)
    assert len(report.rows) == 2 + 3 * len(test_config.attacks)
    assert {row.system_id for row in report.rows} == {"backbone", "facm"}
    assert all(row.attack_wall_time_s == 0.0 for row in report.rows)
    white_box = [row for row in report.rows if row.setting.value == "white_box"]
    assert all(row.n_examples == test_config.eval.white_box_limit for row in white_box)

    first_report = (output_dir / "report.csv").read_bytes()
    checkpoints = {name: (output_dir / name).read_bytes() for name in CHECKPOINTS}
    mtimes = _mtimes(output_dir)
    run_experiment(test_config)
    assert _mtimes(output_dir) == mtimes
    assert (output_dir / "report.csv").read_bytes() == first_report

    run_experiment(test_config, resume=False)
    assert (output_dir / "report.csv").read_bytes() == first_report
    assert {name: (output_dir / name).read_bytes() for name in CHECKPOINTS} == checkpoints


def test_changed_sections_recompute_later_stages_only(test_config: ExperimentConfig) -> None:
    runner = ExperimentRunner(test_config)
    output_dir = runner.run([Stage.BACKBONE, Stage.FA])
    mtimes = _mtimes(output_dir, ["backbone.facm", "fa.facm"])
    changed = test_config.copy(update={"fa": test_config.fa.copy(update={"lr": 0.02})})
    ExperimentRunner(changed).run([Stage.BACKBONE, Stage.FA])
    after = _mtimes(output_dir, ["backbone.facm", "fa.facm"])
    assert after["backbone.facm"] == mtimes["backbone.facm"]
    manifest = RunManifest(**orjson.loads((output_dir / "manifest.json").read_bytes()))
    assert manifest.stages["fa"].hash == changed.stage_hash(Stage.FA)
    assert manifest.stages["fa"].hash != test_config.stage_hash(Stage.FA)


def test_restoring_trained_models(test_config: ExperimentConfig) -> None:
    runner = ExperimentRunner(test_config)
    with pytest.raises(CheckpointNotFoundException):
        runner.restore_models()
    with pytest.raises(CheckpointNotFoundException):
        ExperimentRunner(test_config).run([Stage.EVALUATE])
    runner.run([Stage.BACKBONE, Stage.FA, Stage.CMPD, Stage.DECISION])
    restored = ExperimentRunner(test_config).restore_models()
    assert parameter_hash(*restored.modules()) == parameter_hash(*runner.system.modules())
    assert not restored.backbone.training


def test_fast_mode_skips_the_autoencoder(tmp_path: Path, mnist_dir: Path) -> None:
    config = create_test_config(tmp_path / "fast", mnist_dir, correction_mode=CorrectionMode.FAST_FACM)
    output_dir = ExperimentRunner(config).run([Stage.BACKBONE, Stage.FA, Stage.CMPD, Stage.DECISION])
    assert not (output_dir / "cmpd.facm").exists()
    assert (output_dir / "decision.facm").exists()
    ExperimentRunner(config).restore_models()


def test_failures_are_recorded(test_config: ExperimentConfig, tmp_path: Path) -> None:
    broken = test_config.copy(update={"dataset": DatasetConfig(path=tmp_path / "missing")})
    with pytest.raises(StageFailedException) as info:
        run_experiment(broken, stages=[Stage.BACKBONE])
    assert info.value.stage == "backbone"
    failure = orjson.loads((test_config.output_dir / "failure.json").read_bytes())
    assert failure["stage"] == "backbone"
    assert failure["exception"] == "StageFailedException"
    assert "ImproperlyConfiguredException" in failure["cause"]
    run_experiment(test_config, stages=[Stage.BACKBONE])
    assert not (test_config.output_dir / "failure.json").exists()


def test_empty_stage_list_does_nothing(test_config: ExperimentConfig) -> None:
    output_dir = ExperimentRunner(test_config).run([])
    assert not (output_dir / "manifest.json").exists()

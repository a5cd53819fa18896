import logging
from pathlib import Path
from typing import Iterator

import orjson
import pytest

from facm.cli import apply_overrides, build_parser, load_config, main, parse_override
from facm.config import ExperimentConfig
from facm.enums import AttackFamily, DatasetName
from facm.exceptions import ImproperlyConfiguredException
from facm.logging import LoggingConfig


@pytest.fixture(autouse=True)
def restore_logging() -> Iterator[None]:
    yield
    LoggingConfig.shutdown()
    logger = logging.getLogger("facm")
    logger.handlers.clear()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture()
def config_file(test_config: ExperimentConfig, tmp_path: Path) -> Path:
    path = tmp_path / "experiment.json"
    path.write_bytes(orjson.dumps(test_config.dict(exclude={"logging"}), default=str))
    return path


@pytest.mark.parametrize(
    "text, path, value",
    [
        ("seed=3", ["seed"], 3),
        ("decision.eps_list=[0.1, 0.2]", ["decision", "eps_list"], [0.1, 0.2]),
        ("eval.white_box_limit=null", ["eval", "white_box_limit"], None),
        ("attacks.0.eps=8/255", ["attacks", "0", "eps"], "8/255"),
        ("device=cuda:0", ["device"], "cuda:0"),
    ],
)
def test_parse_override(text: str, path: list, value: object) -> None:
    assert parse_override(text) == (path, value)


@pytest.mark.parametrize("text", ["seed", "=3", "train.lr=[0.1"])
def test_malformed_overrides(text: str) -> None:
    with pytest.raises(ImproperlyConfiguredException):
        parse_override(text)


def test_apply_overrides() -> None:
    data = {"seed": 0, "backbone": {"seed": 0, "hidden": 16}}
    apply_overrides(data, ["seed=5", "backbone.hidden=32", "eval.tau=2"])
    assert data == {"seed": 5, "backbone": {"seed": None, "hidden": 32}, "eval": {"tau": 2}}


def test_overrides_index_into_lists() -> None:
    data = {"attacks": [{"eps": 0.3}, {"eps": 0.1}]}
    apply_overrides(data, ["attacks.1.eps=8/255", "attacks.0=null"])
    assert data == {"attacks": [None, {"eps": "8/255"}]}
    with pytest.raises(ImproperlyConfiguredException):
        apply_overrides(data, ["attacks.2.eps=0.1"])
    with pytest.raises(ImproperlyConfiguredException):
        apply_overrides(data, ["attacks.first.eps=0.1"])


def test_parser_knows_every_command() -> None:
    parser = build_parser()
    for command in ["train-backbone", "finetune-fa", "finetune-cmpd", "train-decision", "evaluate", "run"]:
        args = parser.parse_args([command, "--seed", "1"])
        assert args.command == command
        assert args.seed == 1
    args = parser.parse_args(["attack", "pgd", "--eps", "8/255", "--steps", "5", "--setting", "white_box"])
    assert (args.attack, args.eps, args.steps, args.setting) == ("pgd", "8/255", 5, "white_box")
    with pytest.raises(SystemExit):
        parser.parse_args(["attack"])


def test_load_config_from_preset() -> None:
    args = build_parser().parse_args(["run", "--dataset", "cifar10", "--seed", "4", "--full", "--set", "eval.tau=3"])
    config = load_config(args)
    assert config.dataset.name == DatasetName.CIFAR10
    assert config.seed == 4
    assert config.backbone.seed == 4
    assert config.eval.white_box_limit is None
    assert config.eval.tau == 3


def test_load_config_from_file(config_file: Path, tmp_path: Path) -> None:
    args = build_parser().parse_args(
        ["evaluate", "--config", str(config_file), "--output-dir", str(tmp_path / "out"), "--progress"]
    )
    config = load_config(args)
    assert config.output_dir == tmp_path / "out"
    assert [attack.family for attack in config.attacks] == [AttackFamily.FGSM, AttackFamily.PGD]
    assert config.backbone.channels == [4, 4, 8, 8]
    assert config.train.progress and config.eval.progress


def test_invalid_overrides_fail_cleanly(capsys: pytest.CaptureFixture) -> None:
    assert main(["run", "--set", "train.lr=-1"]) == 1
    assert "ImproperlyConfiguredException" in capsys.readouterr().err


def test_stage_commands(config_file: Path, test_config: ExperimentConfig, capsys: pytest.CaptureFixture) -> None:
    assert main(["attack", "fgsm", "--config", str(config_file)]) == 1
    assert "CheckpointNotFoundException" in capsys.readouterr().err
    assert main(["train-backbone", "--config", str(config_file)]) == 0
    assert capsys.readouterr().out.strip() == str(test_config.output_dir)
    assert (test_config.output_dir / "backbone.facm").exists()
    assert not (test_config.output_dir / "fa.facm").exists()


def test_attack_command(config_file: Path, test_config: ExperimentConfig, capsys: pytest.CaptureFixture) -> None:
    assert main(["run", "--config", str(config_file), "--set", "eval.tau_sweep=false"]) == 0
    capsys.readouterr()
    output = test_config.output_dir / "adversarial.npz"
    command = ["attack", "pgd", "--config", str(config_file), "--limit", "4", "--steps", "2", "--output", str(output)]
    assert main(command) == 0
    cells = capsys.readouterr().out.strip().split(",")
    assert cells[:3] == ["facm", "grey_box", "pgd"]
    assert cells[5] == "4"
    assert output.exists()
    assert main(command + ["--alpha", "0.9"]) == 1

"""Command line entry point.

Every subcommand takes the same configuration options; the stage subcommands run one pipeline stage against the
artifact directory, restoring the checkpoints of the stages before it.
"""
import argparse
import sys
from logging import getLogger
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from facm.attacks import make_target
from facm.config import AttackSpec, ExperimentConfig
from facm.enums import DatasetName, Setting, Stage, SystemId
from facm.exceptions import FACMException, ImproperlyConfiguredException
from facm.harness import ExperimentRunner, attack_dataset, evaluate_accuracy, evaluation_slice
from facm.logging import LoggingConfig

logger = getLogger(__name__)

STAGE_COMMANDS: Dict[str, Stage] = {
    "train-backbone": Stage.BACKBONE,
    "finetune-fa": Stage.FA,
    "finetune-cmpd": Stage.CMPD,
    "train-decision": Stage.DECISION,
    "evaluate": Stage.EVALUATE,
    "diversity": Stage.DIVERSITY,
    "timing": Stage.TIMING,
}
ATTACK_FIELDS = (
    "eps",
    "alpha",
    "steps",
    "loss",
    "overshoot",
    "queries",
    "norm",
    "eta",
    "momentum",
    "kappa",
    "p_init",
    "name",
)


def parse_override(text: str) -> Tuple[List[str], Any]:
    """Splits `key.path=value`, parsing the value as YAML so numbers, lists and nulls keep their type."""
    key, separator, value = text.partition("=")
    if not separator or not key:
        raise ImproperlyConfiguredException(detail=f"override '{text}' is not of the form key=value")
    try:
        return key.split("."), yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ImproperlyConfiguredException(detail=f"cannot parse the value of override '{text}': {e}") from e


def _slot(node: Any, key: str, text: str) -> Union[str, int]:
    if isinstance(node, dict):
        return key
    if isinstance(node, list) and key.isdigit() and int(key) < len(node):
        return int(key)
    raise ImproperlyConfiguredException(detail=f"override '{text}': '{key}' does not address a value")


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Sets every `key.path=value` in place; digits index into lists."""
    for text in overrides:
        path, value = parse_override(text)
        node: Any = data
        for key in path[:-1]:
            slot = _slot(node, key, text)
            if isinstance(node, dict) and not isinstance(node.get(key), (dict, list)):
                node[key] = {}
            node = node[slot]
        node[_slot(node, path[-1], text)] = value
        if path == ["seed"] and isinstance(data.get("backbone"), dict):
            data["backbone"]["seed"] = None
    return data


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """The configuration file or dataset preset with every command line override applied."""
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig.preset(args.dataset)
    overrides: List[str] = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.data_dir is not None:
        overrides.append(f"dataset.path={args.data_dir}")
    if args.full:
        overrides.append("eval.white_box_limit=null")
    if args.progress:
        overrides.extend(f"{section}.progress=true" for section in ("train", "fa", "cmpd", "decision", "eval"))
    if not overrides and args.output_dir is None and args.device is None:
        return config
    data = apply_overrides(config.dict(), overrides)
    if args.output_dir is not None:
        data["output_dir"] = args.output_dir
    if args.device is not None:
        data["device"] = args.device
    return ExperimentConfig.from_dict(data)


def configure_logging(config: LoggingConfig, verbose: bool) -> None:
    if verbose:
        config.loggers.setdefault("facm", {})["level"] = "DEBUG"
    config.configure()


def run_stage_command(args: argparse.Namespace) -> int:
    config = load_config(args)
    configure_logging(config.logging, args.verbose)
    output_dir = ExperimentRunner(config, resume=not args.no_resume).run([STAGE_COMMANDS[args.command]])
    print(output_dir)
    return 0


def run_pipeline_command(args: argparse.Namespace) -> int:
    config = load_config(args)
    configure_logging(config.logging, args.verbose)
    print(ExperimentRunner(config, resume=not args.no_resume).run())
    return 0


def attack_spec_from_args(args: argparse.Namespace, config: ExperimentConfig) -> AttackSpec:
    """The named attack of the configuration, or the dataset preset, with command line fields replaced."""
    spec = next((attack for attack in config.attacks if attack.label == args.attack), None)
    if spec is None:
        spec = AttackSpec.preset(args.attack, config.dataset.name)
    updates = {field: getattr(args, field) for field in ATTACK_FIELDS if getattr(args, field) is not None}
    if args.random_start:
        updates["random_start"] = True
    if not updates:
        return spec
    try:
        return AttackSpec(**{**spec.dict(), **updates})
    except ValueError as e:
        raise ImproperlyConfiguredException(detail=str(e)) from e


def run_attack_command(args: argparse.Namespace) -> int:
    config = load_config(args)
    configure_logging(config.logging, args.verbose)
    runner = ExperimentRunner(config)
    system = runner.restore_models()
    spec = attack_spec_from_args(args, config)
    setting, system_id = Setting(args.setting), SystemId(args.system)
    _, test = runner.splits
    data = evaluation_slice(test, spec, setting, config.eval).head(args.limit)
    target = make_target(
        system,
        Setting.GREY_BOX if system_id == SystemId.BACKBONE else setting,
        seed=config.seed,
        tau=config.eval.tau,
        replacement=config.eval.replacement,
    )
    adversarial = attack_dataset(
        target,
        data,
        spec,
        seed=config.seed,
        batch_size=config.eval.batch_size,
        device=system.device,
        progress=config.eval.progress,
    )
    row = evaluate_accuracy(
        system,
        data,
        spec,
        setting,
        system_id=system_id,
        seed=config.seed,
        config=config.eval,
        adversarial=adversarial,
    )
    if args.output is not None:
        images, _ = adversarial
        output = Path(args.output)
        output.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(output, images=images.images.numpy(), labels=images.labels.numpy())
        logger.info("wrote %d adversarial examples to %s", len(images), output)
    print(",".join(row.cells()))
    return 0


def run_plot_command(args: argparse.Namespace) -> int:
    configure_logging(LoggingConfig(), args.verbose)
    from facm.harness.plot import plot_artifacts

    for path in plot_artifacts(args.artifacts):
        print(path)
    return 0


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", type=Path, default=None, help="YAML or JSON experiment configuration.")
    parser.add_argument(
        "--dataset",
        choices=[name.value for name in DatasetName],
        default=DatasetName.MNIST.value,
        help="Preset used when no configuration file is given.",
    )
    parser.add_argument("--data-dir", type=Path, default=None, help="Directory holding the dataset files.")
    parser.add_argument("--output-dir", "-o", type=Path, default=None, help="Artifact directory.")
    parser.add_argument("--seed", type=int, default=None, help="Root seed.")
    parser.add_argument("--device", default=None, help="Torch device, e.g. 'cpu' or 'cuda:0'.")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration key in dot notation, e.g. decision.epochs=5. Repeatable.",
    )
    parser.add_argument("--full", action="store_true", help="Run white-box attacks on the full test split.")
    parser.add_argument("--no-resume", action="store_true", help="Recompute stages even when they are up to date.")
    parser.add_argument("--progress", action="store_true", help="Show progress bars.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level.")


def _add_attack_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("attack", help="Attack label from the configuration or a preset name.")
    parser.add_argument("--setting", choices=[setting.value for setting in Setting], default=Setting.GREY_BOX.value)
    parser.add_argument(
        "--system", choices=[SystemId.BACKBONE.value, SystemId.FACM.value], default=SystemId.FACM.value
    )
    parser.add_argument("--limit", type=int, default=None, help="Attack only the first N test examples.")
    parser.add_argument("--output", type=Path, default=None, help="Write the adversarial examples as .npz.")
    parser.add_argument("--eps", default=None, help="L-infinity budget, e.g. 0.3 or 8/255.")
    parser.add_argument("--alpha", default=None, help="Step size, e.g. 0.01 or 2/255.")
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--loss", choices=["ce", "cw_margin", "kl"], default=None)
    parser.add_argument("--overshoot", type=float, default=None)
    parser.add_argument("--queries", type=int, default=None)
    parser.add_argument("--norm", choices=["linf", "l2"], default=None)
    parser.add_argument("--eta", default=None)
    parser.add_argument("--momentum", type=float, default=None)
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--p-init", dest="p_init", type=float, default=None)
    parser.add_argument("--name", default=None, help="Label used in the report row.")
    parser.add_argument("--random-start", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facm", description="Feature-aware correction defense experiments.")
    commands = parser.add_subparsers(dest="command", required=True)
    handlers: Dict[str, Callable[[argparse.Namespace], int]] = {}
    for name, stage in STAGE_COMMANDS.items():
        sub = commands.add_parser(name, help=f"Run the '{stage.value}' stage.")
        _add_common_options(sub)
        handlers[name] = run_stage_command
    run = commands.add_parser("run", help="Run every stage of the pipeline.")
    _add_common_options(run)
    handlers["run"] = run_pipeline_command
    attack = commands.add_parser("attack", help="Attack the trained system and score one report row.")
    _add_common_options(attack)
    _add_attack_options(attack)
    handlers["attack"] = run_attack_command
    plot = commands.add_parser("plot", help="Render the curve and heatmap data of an artifact directory.")
    plot.add_argument("artifacts", type=Path, nargs="?", default=Path("artifacts"))
    plot.add_argument("--verbose", "-v", action="store_true")
    handlers["plot"] = run_plot_command
    parser.set_defaults(handlers=handlers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handlers[args.command](args)
    except FACMException as e:
        logger.error("%s", e)
        print(f"facm: {e.__class__.__name__}: {e}", file=sys.stderr)
        return 1
    finally:
        LoggingConfig.shutdown()

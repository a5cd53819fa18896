from pathlib import Path
from typing import List, Union

import orjson

from facm.exceptions import MissingDependencyException
from facm.harness.diversity import read_matrix_csv

try:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt
except ImportError as e:  # pragma: no cover
    raise MissingDependencyException("matplotlib is not installed, install the 'plot' extra") from e


def plot_accuracy_curves(sweep_json: Union[str, Path], output: Union[str, Path]) -> Path:
    """Accuracy of every correction member against the attack radius."""
    payload = orjson.loads(Path(sweep_json).read_bytes())
    figure, axes = plt.subplots(figsize=(6, 4))
    for member, curve in payload["curves"].items():
        axes.plot(payload["eps"], curve, marker="o", label=member, linestyle="--" if member == "f" else "-")
    axes.set_xlabel("eps")
    axes.set_ylabel("accuracy (%)")
    axes.legend(fontsize="small", ncol=2)
    figure.tight_layout()
    figure.savefig(output)
    plt.close(figure)
    return Path(output)


def plot_diversity_heatmap(matrix_csv: Union[str, Path], output: Union[str, Path]) -> Path:
    result = read_matrix_csv(matrix_csv)
    figure, axes = plt.subplots(figsize=(5, 4.5))
    image = axes.imshow(result.matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ticks: List[int] = list(range(len(result.member_ids)))
    axes.set_xticks(ticks)
    axes.set_xticklabels(result.member_ids, rotation=90)
    axes.set_yticks(ticks)
    axes.set_yticklabels(result.member_ids)
    figure.colorbar(image, ax=axes)
    figure.tight_layout()
    figure.savefig(output)
    plt.close(figure)
    return Path(output)


def plot_artifacts(output_dir: Union[str, Path]) -> List[Path]:
    """Renders every curve and heatmap data file found in an artifact directory."""
    output_dir = Path(output_dir)
    written = []
    sweep = output_dir / "accuracy_curves.json"
    if sweep.exists():
        written.append(plot_accuracy_curves(sweep, output_dir / "accuracy_curves.png"))
    for matrix in sorted(output_dir.glob("diversity_eps*.csv")):
        written.append(plot_diversity_heatmap(matrix, matrix.with_suffix(".png")))
    return written

from .analysis import PrefixRecord, TauPoint, condition_prefix_analysis, tau_sweep, write_prefix_analysis, write_tau_sweep
from .checkpoint import CheckpointMetadata, load_checkpoint, read_checkpoint, save_checkpoint
from .diversity import (
    DiversityResult,
    DiversitySweep,
    diversity_matrix,
    diversity_on,
    diversity_sweep,
    mean_off_diagonal,
    membership_vectors,
    read_matrix_csv,
    write_matrix_csv,
    zeta,
)
from .evaluation import (
    EvalReport,
    EvalRow,
    attack_dataset,
    evaluate_accuracy,
    evaluation_slice,
    percent_correct,
    predict_dataset,
    system_predictor,
)
from .pipeline import ExperimentRunner, RunManifest, run_experiment
from .system import FACMSystem
from .timing import Contender, TimingRecord, system_contenders, timing_report

__all__ = [
    "CheckpointMetadata",
    "Contender",
    "DiversityResult",
    "DiversitySweep",
    "EvalReport",
    "EvalRow",
    "ExperimentRunner",
    "FACMSystem",
    "PrefixRecord",
    "RunManifest",
    "TauPoint",
    "TimingRecord",
    "attack_dataset",
    "condition_prefix_analysis",
    "diversity_matrix",
    "diversity_on",
    "diversity_sweep",
    "evaluate_accuracy",
    "evaluation_slice",
    "load_checkpoint",
    "mean_off_diagonal",
    "membership_vectors",
    "percent_correct",
    "predict_dataset",
    "read_checkpoint",
    "read_matrix_csv",
    "save_checkpoint",
    "system_contenders",
    "system_predictor",
    "tau_sweep",
    "timing_report",
    "write_matrix_csv",
    "write_prefix_analysis",
    "write_tau_sweep",
    "zeta",
]

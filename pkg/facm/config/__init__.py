from .attack import AttackSpec
from .backbone import BackboneSpec, TrainConfig
from .base import OptimizationConfig
from .correction import CMPDConfig, DecisionConfig, FinetuneConfig
from .experiment import DatasetConfig, EvalConfig, ExperimentConfig

__all__ = (
    "AttackSpec",
    "BackboneSpec",
    "CMPDConfig",
    "DatasetConfig",
    "DecisionConfig",
    "EvalConfig",
    "ExperimentConfig",
    "FinetuneConfig",
    "OptimizationConfig",
    "TrainConfig",
)

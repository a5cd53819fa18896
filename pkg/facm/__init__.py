from .attacks import TargetAdapter, make_target, run_attack
from .backbone import FeatureTaps, MNISTNet, SmallCNN, TappableClassifier, build_backbone, forward_with_taps
from .cmpd import Autoencoder, ConditionalAutoencoder, cmpd_predict, mpd_predict
from .config import (
    AttackSpec,
    BackboneSpec,
    CMPDConfig,
    DatasetConfig,
    DecisionConfig,
    EvalConfig,
    ExperimentConfig,
    FinetuneConfig,
    TrainConfig,
)
from .correction import AuxiliaryClassifier, FACorrectionModule, classification_sequence
from .data import ImageDataset, load_dataset
from .decision import CorrectionSet, DecisionModule, FACMPrediction, facm_predict, facm_surrogate, focal_loss
from .enums import (
    ArchId,
    AttackFamily,
    AttackLoss,
    CorrectionMode,
    DatasetName,
    FinetuneMode,
    Norm,
    Setting,
    Stage,
    SystemId,
)
from .exceptions import (
    CapabilityException,
    CheckpointNotFoundException,
    FACMException,
    ImproperlyConfiguredException,
    IntegrityException,
    InternalException,
    MigrationException,
    MissingDependencyException,
    NumericException,
    StageFailedException,
    ValidationException,
)
from .harness import (
    EvalReport,
    ExperimentRunner,
    FACMSystem,
    diversity_matrix,
    evaluate_accuracy,
    load_checkpoint,
    run_experiment,
    save_checkpoint,
    timing_report,
    zeta,
)
from .logging import LoggingConfig

__all__ = [
    "ArchId",
    "AttackFamily",
    "AttackLoss",
    "AttackSpec",
    "AuxiliaryClassifier",
    "Autoencoder",
    "BackboneSpec",
    "CMPDConfig",
    "CapabilityException",
    "CheckpointNotFoundException",
    "ConditionalAutoencoder",
    "CorrectionMode",
    "CorrectionSet",
    "DatasetConfig",
    "DatasetName",
    "DecisionConfig",
    "DecisionModule",
    "EvalConfig",
    "EvalReport",
    "ExperimentConfig",
    "ExperimentRunner",
    "FACMException",
    "FACMPrediction",
    "FACMSystem",
    "FACorrectionModule",
    "FeatureTaps",
    "FinetuneConfig",
    "FinetuneMode",
    "ImageDataset",
    "ImproperlyConfiguredException",
    "IntegrityException",
    "InternalException",
    "LoggingConfig",
    "MNISTNet",
    "MigrationException",
    "MissingDependencyException",
    "Norm",
    "NumericException",
    "Setting",
    "SmallCNN",
    "Stage",
    "StageFailedException",
    "SystemId",
    "TappableClassifier",
    "TargetAdapter",
    "TrainConfig",
    "ValidationException",
    "build_backbone",
    "classification_sequence",
    "cmpd_predict",
    "diversity_matrix",
    "evaluate_accuracy",
    "facm_predict",
    "facm_surrogate",
    "focal_loss",
    "forward_with_taps",
    "load_checkpoint",
    "load_dataset",
    "make_target",
    "mpd_predict",
    "run_attack",
    "run_experiment",
    "save_checkpoint",
    "timing_report",
    "zeta",
]

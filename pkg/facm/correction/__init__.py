from .modules import (
    AuxiliaryClassifier,
    FACorrectionModule,
    aux_forward,
    build_auxiliaries,
    build_fa_modules,
    classification_sequence,
    fa_forward,
    sequence_from_taps,
)
from .training import finetune_aux, finetune_auxiliaries, finetune_fa, finetune_fa_modules

__all__ = [
    "AuxiliaryClassifier",
    "FACorrectionModule",
    "aux_forward",
    "build_auxiliaries",
    "build_fa_modules",
    "classification_sequence",
    "fa_forward",
    "finetune_aux",
    "finetune_auxiliaries",
    "finetune_fa",
    "finetune_fa_modules",
    "sequence_from_taps",
]

from .correction_set import CorrectionSet
from .modules import DecisionModule, build_decision_module, focal_loss, label_vector, weights
from .predict import FACMPrediction, SelectionRecord, SelectionTrace, facm_predict, facm_surrogate
from .training import augment_decision_inputs, decision_targets, member_cross_entropy, train_decision

__all__ = [
    "CorrectionSet",
    "DecisionModule",
    "FACMPrediction",
    "SelectionRecord",
    "SelectionTrace",
    "augment_decision_inputs",
    "build_decision_module",
    "decision_targets",
    "facm_predict",
    "facm_surrogate",
    "focal_loss",
    "label_vector",
    "member_cross_entropy",
    "train_decision",
]

from enum import Enum


class ArchId(str, Enum):
    """Backbone architectures that can be tapped."""

    MNISTNET = "mnistnet"
    SMALLCNN_CIFAR = "smallcnn_cifar"


class DatasetName(str, Enum):
    """Datasets with an ingestion reader and hyperparameter presets."""

    MNIST = "mnist"
    CIFAR10 = "cifar10"
    CIFAR100 = "cifar100"


class OptimizerName(str, Enum):
    SGD = "sgd"


class FinetuneMode(str, Enum):
    """Objective used to fine-tune auxiliary classifiers and FA modules."""

    NATURAL = "natural"
    TRADES = "trades"


class CorrectionMode(str, Enum):
    """Composition of the correction set.

    Notes:
        - 'fast_facm' drops every CMPD member.
    """

    FACM = "facm"
    FAST_FACM = "fast_facm"


class AttackFamily(str, Enum):
    FGSM = "fgsm"
    PGD = "pgd"
    MIFGSM = "mifgsm"
    DEEPFOOL_L2 = "deepfool_l2"
    SQUARE = "square"


class AttackLoss(str, Enum):
    """Objective an iterative attack ascends."""

    CE = "ce"
    CW_MARGIN = "cw_margin"
    KL = "kl"


class Norm(str, Enum):
    LINF = "linf"
    L2 = "l2"


class Setting(str, Enum):
    """What the adversary knows.

    Notes:
        - 'grey_box' differentiates the backbone only.
        - 'white_box' differentiates the full assembly.
    """

    GREY_BOX = "grey_box"
    WHITE_BOX = "white_box"


class SystemId(str, Enum):
    """Predictors that can be evaluated."""

    BACKBONE = "backbone"
    FACM = "facm"
    FAST_FACM = "fast_facm"


class Stage(str, Enum):
    """Pipeline stages, in execution order."""

    BACKBONE = "backbone"
    FA = "fa"
    CMPD = "cmpd"
    DECISION = "decision"
    EVALUATE = "evaluate"
    DIVERSITY = "diversity"
    TIMING = "timing"

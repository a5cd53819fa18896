from .gradient import cw_margin, make_objective, projected_gradient_ascent, random_start
from .kernels import DeepFoolResult, SquareResult, deepfool_l2, fgsm, mifgsm, pgd, run_attack, square
from .targets import TargetAdapter, make_target

__all__ = [
    "DeepFoolResult",
    "SquareResult",
    "TargetAdapter",
    "cw_margin",
    "deepfool_l2",
    "fgsm",
    "make_objective",
    "make_target",
    "mifgsm",
    "pgd",
    "projected_gradient_ascent",
    "random_start",
    "run_attack",
    "square",
]

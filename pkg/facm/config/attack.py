from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, confloat, conint, validator

from facm.enums import AttackFamily, AttackLoss, DatasetName, Norm
from facm.exceptions import ImproperlyConfiguredException
from facm.utils.numbers import parse_fraction


class AttackSpec(BaseModel):
    """One attack configuration.

    Budgets are pixel fractions of images in [0, 1] and may be written as fraction strings, e.g. `eps: "8/255"`.
    """

    class Config:
        extra = "forbid"

    family: AttackFamily
    """Attack kernel."""
    eps: confloat(ge=0, le=1) = 0.3  # type: ignore[valid-type]
    """L-infinity budget."""
    alpha: confloat(ge=0) = 0.0  # type: ignore[valid-type]
    """Step size of iterative attacks."""
    steps: conint(ge=1) = 1  # type: ignore[valid-type]
    """Iterations T."""
    loss: AttackLoss = AttackLoss.CE
    """Objective ascended by gradient attacks."""
    overshoot: float = 0.02
    """DeepFool overshoot."""
    queries: conint(ge=0) = 5000  # type: ignore[valid-type]
    """Square query budget per example."""
    norm: Norm = Norm.LINF
    eta: Optional[confloat(gt=0)] = None  # type: ignore[valid-type]
    """CW learning rate; replaces `alpha` as the step when `loss` is 'cw_margin'."""
    momentum: confloat(ge=0) = 1.0  # type: ignore[valid-type]
    """MIFGSM decay factor."""
    kappa: confloat(ge=0) = 0.0  # type: ignore[valid-type]
    """Confidence of the CW margin."""
    random_start: bool = False
    """Start PGD from a uniform point in the ball."""
    p_init: confloat(gt=0, le=1) = 0.8  # type: ignore[valid-type]
    """Initial fraction of pixels altered by a Square proposal."""
    name: Optional[str] = None
    """Label used in reports; defaults to the family."""

    @validator("eps", "alpha", "eta", pre=True)
    def budget_fraction(cls, v: Union[str, float, None]) -> Optional[float]:  # pylint: disable=no-self-argument
        return None if v is None else parse_fraction(v)

    @validator("alpha")
    def step_within_budget(cls, v: float, values: Dict[str, Any]) -> float:  # pylint: disable=no-self-argument
        if values.get("family") == AttackFamily.PGD and "eps" in values and v > values["eps"]:
            raise ValueError(f"pgd step {v} exceeds budget {values['eps']}")
        return v

    @property
    def label(self) -> str:
        return self.name or self.family.value

    @property
    def step_size(self) -> float:
        """Step actually taken per iteration."""
        if self.loss == AttackLoss.CW_MARGIN and self.eta is not None:
            return self.eta
        return self.alpha

    @classmethod
    def preset(cls, name: str, dataset: Union[DatasetName, str] = DatasetName.MNIST) -> "AttackSpec":
        """Default hyperparameters of an attack on a dataset.

        Args:
            name: 'fgsm', 'pgd', 'mifgsm', 'cw', 'deepfool_l2' or 'square'.
            dataset: dataset the presets are taken for.

        Raises:
            ImproperlyConfiguredException: unknown attack name.

        Returns:
            AttackSpec
        """
        mnist = DatasetName(dataset) == DatasetName.MNIST
        presets: Dict[str, Dict[str, Any]] = {
            "fgsm": {"family": "fgsm", "eps": 0.3 if mnist else 8 / 255, "alpha": 0.3 if mnist else 8 / 255},
            "pgd": {
                "family": "pgd",
                "eps": 0.3 if mnist else 8 / 255,
                "alpha": 0.03 if mnist else 0.8 / 255,
                "steps": 40 if mnist else 20,
            },
            "mifgsm": {
                "family": "mifgsm",
                "eps": 0.3 if mnist else 8 / 255,
                "alpha": 0.1 if mnist else 2 / 255,
                "steps": 5,
            },
            "cw": {
                "family": "pgd",
                "name": "cw",
                "loss": "cw_margin",
                "eps": 0.3 if mnist else 8 / 255,
                "alpha": 0.01,
                "eta": 0.01,
                "steps": 50 if mnist else 10,
            },
            "deepfool_l2": {"family": "deepfool_l2", "eps": 0.0, "steps": 50, "overshoot": 0.02, "norm": "l2"},
            "square": {"family": "square", "eps": 0.3 if mnist else 0.05, "queries": 5000},
        }
        if name not in presets:
            raise ImproperlyConfiguredException(detail=f"no preset for attack '{name}'")
        return cls(**presets[name])

import pytest
import torch
import torch.nn.functional as F

from facm.attacks import (
    TargetAdapter,
    cw_margin,
    deepfool_l2,
    fgsm,
    make_target,
    mifgsm,
    pgd,
    random_start,
    run_attack,
    square,
)
from facm.config import AttackSpec
from facm.enums import AttackFamily, AttackLoss, Norm, Setting
from facm.exceptions import CapabilityException, ImproperlyConfiguredException
from facm.harness import FACMSystem
from facm.testing import synthetic_dataset
from facm.utils.seeding import make_generator

EPS = 0.3


def _within_budget(adversarial: torch.Tensor, clean: torch.Tensor, eps: float) -> bool:
    return (
        float((adversarial - clean).abs().max()) <= eps + 1e-6
        and float(adversarial.min()) >= 0.0
        and float(adversarial.max()) <= 1.0
    )


def _linear_target() -> TargetAdapter:
    """Two classes separated by the hyperplane sum(x) = 1.5."""

    def logits(inputs: torch.Tensor) -> torch.Tensor:
        score = inputs.flatten(start_dim=1).sum(dim=1) - 1.5
        return torch.stack([torch.zeros_like(score), score], dim=1)

    return TargetAdapter(
        Setting.GREY_BOX,
        lambda inputs: F.softmax(logits(inputs), dim=1),
        lambda inputs: F.log_softmax(logits(inputs), dim=1),
    )


def test_cw_margin() -> None:
    scores = torch.tensor([[2.0, 1.0, 0.5], [0.0, 3.0, 1.0]])
    labels = torch.tensor([0, 0])
    assert torch.allclose(cw_margin(scores, labels), torch.tensor([1.0, 0.0]))
    assert torch.allclose(cw_margin(scores, labels, kappa=1.0), torch.tensor([1.0, -1.0]))
    shifted = scores + torch.tensor([[4.0], [-2.0]])
    assert torch.allclose(cw_margin(shifted, labels, kappa=5.0), cw_margin(scores, labels, kappa=5.0))


def test_fgsm_is_single_step_pgd(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(8)
    target = make_target(test_system, Setting.GREY_BOX)
    one_step = fgsm(target, dataset.images, dataset.labels, AttackSpec(family=AttackFamily.FGSM, eps=EPS))
    projected = pgd(
        target, dataset.images, dataset.labels, AttackSpec(family=AttackFamily.PGD, eps=EPS, alpha=EPS, steps=1)
    )
    assert torch.equal(one_step, projected)
    assert _within_budget(one_step, dataset.images, EPS)


@pytest.mark.parametrize("loss", list(AttackLoss))
@pytest.mark.parametrize("setting", [Setting.GREY_BOX, Setting.WHITE_BOX])
def test_pgd_stays_within_budget(test_system: FACMSystem, loss: AttackLoss, setting: Setting) -> None:
    dataset = synthetic_dataset(6)
    spec = AttackSpec(family=AttackFamily.PGD, eps=EPS, alpha=0.1, steps=3, loss=loss, random_start=True)
    target = make_target(test_system, setting)
    adversarial = pgd(target, dataset.images, dataset.labels, spec, make_generator(0, "attack"))
    assert adversarial.shape == dataset.images.shape
    assert _within_budget(adversarial, dataset.images, EPS)
    assert target.gradient_calls == spec.steps + (1 if loss == AttackLoss.KL else 0)


def test_cw_steps_by_eta(test_system: FACMSystem) -> None:
    spec = AttackSpec.preset("cw")
    assert spec.loss == AttackLoss.CW_MARGIN
    assert spec.step_size == spec.eta
    dataset = synthetic_dataset(4)
    adversarial = run_attack(make_target(test_system, Setting.GREY_BOX), dataset.images, dataset.labels, spec)
    assert _within_budget(adversarial, dataset.images, spec.eps)


def test_mifgsm_stays_within_budget(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(6)
    spec = AttackSpec(family=AttackFamily.MIFGSM, eps=EPS, alpha=0.1, steps=4, momentum=1.0)
    adversarial = mifgsm(make_target(test_system, Setting.GREY_BOX), dataset.images, dataset.labels, spec)
    assert _within_budget(adversarial, dataset.images, EPS)


def test_mifgsm_without_momentum_is_pgd(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(6)
    target = make_target(test_system, Setting.GREY_BOX)
    spec = AttackSpec(family=AttackFamily.MIFGSM, eps=EPS, alpha=0.1, steps=3, momentum=0.0)
    momentum_free = mifgsm(target, dataset.images, dataset.labels, spec)
    projected = pgd(
        target, dataset.images, dataset.labels, AttackSpec(family=AttackFamily.PGD, eps=EPS, alpha=0.1, steps=3)
    )
    assert torch.equal(momentum_free, projected)


@pytest.mark.parametrize(
    "spec",
    [
        AttackSpec(family=AttackFamily.FGSM, eps=0.02),
        AttackSpec(family=AttackFamily.PGD, eps=0.02, alpha=0.005, steps=4),
        AttackSpec(family=AttackFamily.MIFGSM, eps=0.02, alpha=0.005, steps=4, momentum=1.0),
    ],
    ids=["fgsm", "pgd", "mifgsm"],
)
def test_gradient_attacks_raise_the_loss(test_system: FACMSystem, spec: AttackSpec) -> None:
    dataset = synthetic_dataset(8)
    adversarial = run_attack(make_target(test_system, Setting.GREY_BOX), dataset.images, dataset.labels, spec)
    with torch.no_grad():
        before = F.cross_entropy(test_system.backbone(dataset.images), dataset.labels)
        after = F.cross_entropy(test_system.backbone(adversarial), dataset.labels)
    assert float(after) >= float(before)


def test_pgd_walks_to_the_budget_on_a_linear_model() -> None:
    batch = torch.full((1, 1, 1, 1), 0.5)
    labels = torch.tensor([0])
    short = pgd(_linear_target(), batch, labels, AttackSpec(family=AttackFamily.PGD, eps=EPS, alpha=0.07, steps=4))
    assert float((short - batch).max()) == pytest.approx(0.28, abs=1e-6)
    full = pgd(_linear_target(), batch, labels, AttackSpec(family=AttackFamily.PGD, eps=EPS, alpha=0.07, steps=5))
    assert float((full - batch).max()) == pytest.approx(EPS, abs=1e-6)


def test_random_start() -> None:
    inputs = synthetic_dataset(4).images
    first = random_start(inputs, EPS, make_generator(0, "start"))
    assert _within_budget(first, inputs, EPS)
    assert torch.equal(first, random_start(inputs, EPS, make_generator(0, "start")))
    assert not torch.equal(first, random_start(inputs, EPS, make_generator(1, "start")))


@pytest.mark.parametrize("family", [AttackFamily.FGSM, AttackFamily.PGD, AttackFamily.MIFGSM, AttackFamily.DEEPFOOL_L2])
def test_gradient_attacks_need_gradients(test_system: FACMSystem, family: AttackFamily) -> None:
    dataset = synthetic_dataset(2)
    target = make_target(test_system, Setting.GREY_BOX, black_box=True)
    assert not target.differentiable
    with pytest.raises(CapabilityException):
        run_attack(target, dataset.images, dataset.labels, AttackSpec(family=family, eps=EPS, alpha=0.1))
    with pytest.raises(CapabilityException):
        target.log_probs(dataset.images)


def test_white_box_needs_a_decision_module(test_system: FACMSystem) -> None:
    test_system.decision = None
    with pytest.raises(ImproperlyConfiguredException):
        make_target(test_system, Setting.WHITE_BOX)
    make_target(test_system, Setting.GREY_BOX)


def test_target_counters_and_reset(test_system: FACMSystem) -> None:
    batch = synthetic_dataset(5).images
    target = make_target(test_system, Setting.WHITE_BOX, seed=3, tau=2)
    first = target.predict(batch)
    target.log_probs(batch)
    assert target.queries == 5
    assert target.gradient_calls == 1
    target.reset()
    assert (target.queries, target.gradient_calls) == (0, 0)
    assert torch.equal(target.predict(batch), first)
    assert target.black_box().setting == Setting.WHITE_BOX


def test_square_uses_queries_only(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(6)
    spec = AttackSpec(family=AttackFamily.SQUARE, eps=EPS, queries=20)
    target = make_target(test_system, Setting.GREY_BOX)
    result = square(target, dataset.images, dataset.labels, spec, make_generator(0, "attack", "square"))
    assert target.gradient_calls == 0
    assert _within_budget(result.adversarial, dataset.images, EPS)
    assert int(result.queries.max()) <= spec.queries
    assert int(result.queries.min()) >= 1
    assert target.queries == int(result.queries.sum())


def test_square_runs_against_black_box_targets(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(4)
    spec = AttackSpec(family=AttackFamily.SQUARE, eps=EPS, queries=10)
    target = make_target(test_system, Setting.WHITE_BOX, black_box=True)
    first = square(target, dataset.images, dataset.labels, spec, make_generator(0, "attack", "square"))
    target.reset()
    second = square(target, dataset.images, dataset.labels, spec, make_generator(0, "attack", "square"))
    assert torch.equal(first.adversarial, second.adversarial)
    assert torch.equal(first.queries, second.queries)


def test_square_edge_cases(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(3)
    target = make_target(test_system, Setting.GREY_BOX)
    result = square(target, dataset.images, dataset.labels, AttackSpec(family=AttackFamily.SQUARE, queries=0))
    assert torch.equal(result.adversarial, dataset.images)
    assert int(result.queries.sum()) == 0
    with pytest.raises(ImproperlyConfiguredException):
        square(target, dataset.images, dataset.labels, AttackSpec(family=AttackFamily.SQUARE, norm=Norm.L2))


def test_deepfool_reaches_a_linear_boundary() -> None:
    batch = torch.full((1, 1, 2, 2), 0.25)
    spec = AttackSpec(family=AttackFamily.DEEPFOOL_L2, eps=0.0, steps=10, overshoot=0.02, norm=Norm.L2)
    result = deepfool_l2(_linear_target(), batch, spec)
    assert bool(result.flipped.all())
    assert float(result.norms[0]) == pytest.approx((0.25 + 1e-4) * 1.02, rel=1e-4)
    assert float(result.adversarial.flatten(start_dim=1).sum()) > 1.5


def test_deepfool_against_the_backbone(test_system: FACMSystem) -> None:
    dataset = synthetic_dataset(6)
    target = make_target(test_system, Setting.GREY_BOX)
    spec = AttackSpec.preset("deepfool_l2")
    result = deepfool_l2(target, dataset.images, spec)
    assert float(result.adversarial.min()) >= 0.0 and float(result.adversarial.max()) <= 1.0
    with torch.no_grad():
        clean = test_system.backbone(dataset.images).argmax(dim=1)
        now = test_system.backbone(result.adversarial).argmax(dim=1)
    assert bool((now != clean)[result.flipped].all())

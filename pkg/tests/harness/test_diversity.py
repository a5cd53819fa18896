from pathlib import Path
from typing import List

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from facm.exceptions import ValidationException
from facm.harness import (
    FACMSystem,
    diversity_matrix,
    diversity_on,
    diversity_sweep,
    mean_off_diagonal,
    membership_vectors,
    read_matrix_csv,
    write_matrix_csv,
    zeta,
)
from facm.testing import synthetic_dataset

pairs = st.integers(min_value=1, max_value=40).flatmap(
    lambda size: st.tuples(
        st.lists(st.booleans(), min_size=size, max_size=size), st.lists(st.booleans(), min_size=size, max_size=size)
    )
)


@pytest.mark.parametrize(
    "first, second, expected",
    [
        ([1, 1, 0, 0], [1, 0, 1, 0], 2 / 3),
        ([1, 1, 0, 0], [0, 0, 1, 1], 1.0),
        ([1, 0, 1, 0], [1, 0, 1, 0], 0.0),
        ([0, 0, 0, 0], [0, 0, 0, 0], 0.0),
        ([1, 1, 1, 1], [1, 0, 0, 0], 0.75),
    ],
)
def test_zeta_values(first: List[int], second: List[int], expected: float) -> None:
    assert zeta(torch.tensor(first), torch.tensor(second)) == pytest.approx(expected)


@given(pair=pairs)
def test_zeta_is_a_bounded_symmetric_difference(pair: tuple) -> None:
    first, second = torch.tensor(pair[0]), torch.tensor(pair[1])
    value = zeta(first, second)
    assert 0.0 <= value <= 1.0
    assert value == zeta(second, first)
    assert zeta(first, first) == 0.0


def test_zeta_needs_aligned_vectors() -> None:
    with pytest.raises(ValidationException):
        zeta(torch.ones(3, dtype=torch.bool), torch.ones(4, dtype=torch.bool))


def test_matrix_and_mean() -> None:
    vectors = {
        "f": torch.tensor([1, 1, 0, 0]),
        "fa1": torch.tensor([1, 0, 1, 0]),
        "cmpd0": torch.tensor([0, 0, 1, 1]),
    }
    matrix = diversity_matrix(vectors)
    assert matrix.shape == (3, 3)
    assert np.allclose(matrix, matrix.T)
    assert np.all(np.diag(matrix) == 0.0)
    assert matrix[0, 1] == pytest.approx(2 / 3)
    assert matrix[0, 2] == pytest.approx(1.0)
    assert mean_off_diagonal(matrix) == pytest.approx((2 / 3 + 1.0 + 2 / 3) / 3)
    assert mean_off_diagonal(np.zeros((1, 1))) == 0.0


def test_matrix_csv(tmp_path: Path) -> None:
    members = ["f", "fa1"]
    path = write_matrix_csv(tmp_path / "matrix.csv", members, np.array([[0.0, 0.25], [0.25, 0.0]]))
    assert path.read_text().splitlines() == ["member,f,fa1", "f,0.000000,0.250000", "fa1,0.250000,0.000000"]
    result = read_matrix_csv(path)
    assert result.member_ids == members
    assert result.matrix[0, 1] == pytest.approx(0.25)


def test_membership_of_every_member(test_system: FACMSystem) -> None:
    data = synthetic_dataset(20)
    vectors = membership_vectors(test_system.correction_set, data, batch_size=8)
    assert list(vectors) == test_system.correction_set.member_ids
    assert all(bits.shape == (20,) and bits.dtype == torch.bool for bits in vectors.values())
    with torch.no_grad():
        expected = test_system.backbone(data.images).argmax(dim=1) == data.labels
    assert torch.equal(vectors["f"], expected)
    result = diversity_on(test_system.correction_set, data, batch_size=8)
    assert result.matrix.shape == (8, 8)
    assert result.accuracy["f"] == pytest.approx(float(expected.float().mean()) * 100)


def test_sweep_writes_one_matrix_per_radius(test_system: FACMSystem, tmp_path: Path) -> None:
    sweep = diversity_sweep(test_system, synthetic_dataset(12), [0.1, 0.3], seed=0, batch_size=8, output_dir=tmp_path)
    assert [point.eps for point in sweep.points] == [0.1, 0.3]
    assert (tmp_path / "diversity_eps0.1.csv").exists()
    assert (tmp_path / "diversity_eps0.3.csv").exists()
    curves = sweep.curves()
    assert set(curves) == set(test_system.correction_set.member_ids)
    assert all(len(curve) == 2 for curve in curves.values())
    assert all(0.0 <= point.mean_zeta <= 1.0 for point in sweep.points)
    assert sweep.write_json(tmp_path / "curves.json").exists()

import numpy as np
import pytest

from app.depth import eigenvalue_magnitudes, estimate_depth, has_repeated_eigenvalues


def test_slow_decay_needs_deep_memory():
    one_step = np.array([[0.9, 0.1], [0.1, 0.9]])
    estimate = estimate_depth(one_step, 0.05, d_max=20)
    assert estimate.depth == 13
    assert not estimate.capped
    # direct power arithmetic
    assert 0.8 ** 14 < 0.05 <= 0.8 ** 13


def test_three_symbol_spectrum():
    one_step = np.array([
        [16 / 30, 7 / 30, 7 / 30],
        [7 / 30, 29 / 60, 17 / 60],
        [7 / 30, 17 / 60, 29 / 60],
    ])
    np.testing.assert_allclose(eigenvalue_magnitudes(one_step), [1.0, 0.3, 0.2], atol=1e-12)
    assert estimate_depth(one_step, 0.05).depth == 2


def test_iid_rows_give_depth_floor():
    one_step = np.tile([0.2, 0.3, 0.5], (3, 1))
    assert estimate_depth(one_step, 0.05).depth == 1
    assert estimate_depth(one_step, 0.05, d_max=5, depth_floor=3).depth == 3


def test_unit_magnitude_is_capped():
    estimate = estimate_depth(np.array([[0.0, 1.0], [1.0, 0.0]]), 0.05, d_max=6)
    assert estimate.depth == 6
    assert estimate.capped


def test_cap_when_sum_stays_large():
    estimate = estimate_depth(np.array([[0.99, 0.01], [0.01, 0.99]]), 0.05, d_max=4)
    assert estimate.depth == 4
    assert estimate.capped


def test_repeated_eigenvalue_flag():
    assert has_repeated_eigenvalues(np.tile([0.2, 0.3, 0.5], (3, 1)))
    assert not has_repeated_eigenvalues(np.array([[0.7, 0.2, 0.1], [0.1, 0.7, 0.2], [0.2, 0.1, 0.7]]))


@pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
def test_epsilon_range(epsilon):
    with pytest.raises(ValueError):
        estimate_depth(np.eye(2), epsilon)


def test_depth_floor_above_cap():
    with pytest.raises(ValueError):
        estimate_depth(np.eye(2), 0.05, d_max=2, depth_floor=3)


def test_report_serializes():
    data = estimate_depth(np.array([[0.9, 0.1], [0.1, 0.9]]), 0.05, d_max=20).to_dict()
    assert data["depth"] == 13
    assert data["eigen_magnitudes"][0] == pytest.approx(1.0)


def test_circulant_magnitudes():
    one_step = np.array([[0.7, 0.2, 0.1], [0.1, 0.7, 0.2], [0.2, 0.1, 0.7]])
    m = np.sqrt(0.7 ** 2 + 0.2 ** 2 + 0.1 ** 2 - 0.7 * 0.2 - 0.2 * 0.1 - 0.1 * 0.7)
    np.testing.assert_allclose(eigenvalue_magnitudes(one_step), [1.0, m, m], atol=1e-12)
    assert m == pytest.approx(0.557, abs=1e-3)

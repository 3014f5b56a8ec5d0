"""Finite-difference checks of every differentiable op and the composed cascade."""

from __future__ import annotations

import numpy as np
import pytest

from graphseg.exceptions import NumericalCheckError
from graphseg.gradcheck import (
    GradCheckResult,
    assert_suite,
    check_gradients,
    numeric_gradient,
    relative_error,
    run_suite,
)
from graphseg.tensor import Tensor, make_result, parameter


@pytest.mark.parametrize("seed", [0, 1])
def test_whole_suite_passes(seed: int) -> None:
    results = run_suite(seed)
    assert {r.name for r in results} >= {"conv2d", "bilinear_up", "weighted_bce", "cascade_2level"}
    failed = [(r.name, r.max_error) for r in results if not r.passed]
    assert failed == []


def test_numeric_gradient_of_sum_of_squares() -> None:
    values = np.array([1.0, -2.0, 0.5])
    grad = numeric_gradient(lambda: float(np.sum(values**2)), values)
    np.testing.assert_allclose(grad, 2.0 * values, atol=1e-8)
    assert values.tolist() == [1.0, -2.0, 0.5]


def test_relative_error_floor() -> None:
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.0 + 1e-9])) < 1e-8


def test_wrong_backward_is_caught() -> None:
    def doubled_wrong(t: list[Tensor]) -> Tensor:
        x = t[0]
        return make_result(2.0 * x.data, (x,), lambda g: (g,))

    result = check_gradients("wrong", doubled_wrong, [parameter(np.ones((2, 2)))], np.random.default_rng(0))
    assert not result.passed
    assert result.max_error > 0.1


def test_assert_suite_raises_on_failure() -> None:
    results = [GradCheckResult("conv2d", 1e-9, True), GradCheckResult("relu", 0.3, False)]
    with pytest.raises(NumericalCheckError, match="relu"):
        assert_suite(results)
    assert_suite(results[:1])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linescale.errors import DomainError, InvariantViolation
from linescale.matrix import (
    Axis,
    DiagonalAccumulator,
    NonNegMatrix,
    ScheduleStep,
    apply_step,
    distances,
    marginal_deviation,
    normalize_step,
    transpose_duality_check,
)

I2 = np.eye(2)
TWO = np.array([[2.0, 0.0], [0.0, 2.0]])
A11 = np.array([[1.0, 1.0], [1.0, 0.0]])


def test_rejects_bad_inputs():
    with pytest.raises(DomainError, match="row 2 is null"):
        NonNegMatrix([[1, 1], [0, 0]])
    with pytest.raises(DomainError, match="column 1 is null"):
        NonNegMatrix([[0, 1], [0, 1]])
    with pytest.raises(DomainError, match="nonnegative"):
        NonNegMatrix([[1, -1], [1, 1]])
    with pytest.raises(DomainError, match="finite"):
        NonNegMatrix([[1, np.nan], [1, 1]])
    with pytest.raises(DomainError, match="square"):
        NonNegMatrix(np.ones((2, 3)))


def test_matrix_is_read_only():
    W = NonNegMatrix(A11)
    with pytest.raises(ValueError):
        W.entries[0, 0] = 5.0


def test_schedule_step_validation():
    assert ScheduleStep("r", 1).axis is Axis.ROW
    assert ScheduleStep(Axis.COL, 2).axis is Axis.COL
    with pytest.raises(DomainError):
        ScheduleStep("x", 1)
    with pytest.raises(DomainError):
        ScheduleStep("r", 0)
    with pytest.raises(DomainError, match="out of range"):
        normalize_step(I2, ScheduleStep("r", 3))


@pytest.mark.parametrize(
    "W, axis, l, expected",
    [(I2, "r", 1, 0.0), (TWO, "r", 1, 1.0), (A11, "c", 2, 0.0)],
)
def test_marginal_deviation_examples(W, axis, l, expected):
    assert marginal_deviation(W, axis, l) == expected


@pytest.mark.parametrize(
    "W, expected",
    [(np.eye(3), (0.0, 0.0, 0.0)), (TWO, (2.0, 2.0, 4.0)), (A11, (1.0, 1.0, 2.0))],
)
def test_distances_examples(W, expected):
    assert distances(W) == expected


@pytest.mark.parametrize("W", [I2, TWO, A11])
def test_transpose_duality_examples(W):
    assert transpose_duality_check(W)


def test_normalize_step_examples():
    W, f = normalize_step(TWO, ScheduleStep("r", 1))
    assert np.array_equal(W.entries, [[1, 0], [0, 2]]) and f == 0.5
    W, f = normalize_step(I2, ScheduleStep("c", 2))
    assert np.array_equal(W.entries, I2) and f == 1.0
    W, f = normalize_step(A11, ScheduleStep("r", 1))
    assert np.array_equal(W.entries, [[0.5, 0.5], [1, 0]]) and f == 0.5


def test_apply_step_examples():
    acc = DiagonalAccumulator.identity(2)
    W, acc = apply_step(TWO, acc, TWO, ScheduleStep("r", 1))
    assert np.array_equal(acc.row_factors, [0.5, 1.0]) and np.array_equal(acc.col_factors, [1.0, 1.0])
    W2, acc2 = apply_step(TWO, acc, W, ScheduleStep("r", 1))
    assert np.array_equal(acc2.row_factors, acc.row_factors)

    W0 = np.array([[1.0, 2.0], [2.0, 1.0]])
    acc = DiagonalAccumulator.identity(2)
    W = W0
    for step in (ScheduleStep("r", 1), ScheduleStep("c", 2)):
        W, acc = apply_step(W0, acc, W, step)
    np.testing.assert_allclose(acc.row_factors, [1 / 3, 1.0], rtol=1e-15)
    np.testing.assert_allclose(acc.col_factors, [1.0, 3 / 5], rtol=1e-15)
    np.testing.assert_allclose(acc.reconstruct(W0), W.entries, rtol=1e-15)


def test_apply_step_detects_corrupted_accumulator():
    acc = DiagonalAccumulator(np.array([2.0, 1.0]), np.ones(2))
    with pytest.raises(InvariantViolation):
        apply_step(A11, acc, A11, ScheduleStep("r", 1))


def test_accumulator_rejects_nonpositive_factors():
    with pytest.raises(InvariantViolation):
        DiagonalAccumulator(np.array([0.0, 1.0]), np.ones(2))


def test_accumulator_extended_range_is_exact():
    acc = DiagonalAccumulator.identity(2)
    for _ in range(40):
        acc = acc.scaled(ScheduleStep("r", 1), 2.0**-60)
        acc = acc.scaled(ScheduleStep("c", 2), 2.0**60)
    # row 1 factor is 2**-2400, column 2 factor 2**2400; their product is 1
    assert acc.row_exp[0] != 0 and acc.col_exp[1] != 0
    log_r, log_c = acc.log2_factors()
    assert log_r[0] == -2400 and log_c[1] == 2400
    np.testing.assert_array_equal(acc.reconstruct(np.ones((2, 2)))[0, 1], 1.0)


square = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0.01, 100.0))
)


@settings(max_examples=60, deadline=None)
@given(square, st.data())
def test_single_step_properties(W, data):
    n = W.shape[0]
    axis = data.draw(st.sampled_from(["r", "c"]))
    l = data.draw(st.integers(1, n))
    step = ScheduleStep(axis, l)
    W2, f = normalize_step(W, step)
    # the normalized line sums to one, the rest is untouched
    assert abs(marginal_deviation(W2, axis, l)) <= 1e-12
    mask = np.ones_like(W, dtype=bool)
    if axis == "r":
        mask[l - 1, :] = False
    else:
        mask[:, l - 1] = False
    assert np.array_equal(W2.entries[mask], W[mask])
    assert distances(W2)[2] <= distances(W)[2] + 1e-12
    assert transpose_duality_check(W)

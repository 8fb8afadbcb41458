import numpy as np
import pytest

from src.exceptions import ContractError, DimensionError, InputError, NumericDomainError
from src.utils.allocation import AllocationTracker
from src.utils.matrix_engine import (
    Tape, as_matrix, elementwise, finite_diff_check, hadamard, matmul, row_sum
)


def _loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_matches_loop(rng):
    a = as_matrix(rng.normal(size=(5, 4)))
    b = as_matrix(rng.normal(size=(4, 3)))
    np.testing.assert_allclose(matmul(a, b), _loop_matmul(a, b), atol=1e-12)


def test_matmul_rejects_nonconforming():
    with pytest.raises(DimensionError):
        matmul(as_matrix(np.ones((2, 3))), as_matrix(np.ones((2, 3))))


def test_results_are_read_only(rng):
    out = matmul(as_matrix(rng.normal(size=(2, 2))), as_matrix(np.eye(2)))
    with pytest.raises(ValueError):
        out[0, 0] = 1.0


def test_hadamard_identity_and_annihilator(rng):
    m = as_matrix(rng.normal(size=(3, 4)))
    np.testing.assert_array_equal(hadamard(m, as_matrix(np.ones((3, 4)))), m)
    np.testing.assert_array_equal(hadamard(m, as_matrix(np.zeros((3, 4)))), np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        hadamard(m, as_matrix(np.ones((4, 3))))


def test_row_sum():
    np.testing.assert_array_equal(row_sum(as_matrix([[1.0, 2.0], [3.0, 4.0]])), [[3.0], [7.0]])


def test_elementwise_cases():
    m = as_matrix([[1.0, 2.0], [3.0, 4.0]])
    zeros = as_matrix(np.zeros((2, 2)))
    np.testing.assert_array_equal(elementwise(zeros, "divide-safe", zeros), np.zeros((2, 2)))
    np.testing.assert_array_equal(elementwise(as_matrix([[4.0, 9.0]]), "sqrt"), [[2.0, 3.0]])
    assert elementwise(m, "mean-all") == 2.5
    np.testing.assert_array_equal(elementwise(m, "scale", factor=2.0), 2.0 * m)
    np.testing.assert_array_equal(elementwise(m, "subtract", m), np.zeros((2, 2)))
    with pytest.raises(ContractError):
        elementwise(m, "log")
    with pytest.raises(ContractError):
        elementwise(m, "add")


def test_sqrt_clamps_rounding_noise_and_rejects_negatives():
    np.testing.assert_array_equal(elementwise(as_matrix([[-1e-13]]), "sqrt"), [[0.0]])
    with pytest.raises(NumericDomainError):
        elementwise(as_matrix([[-1.0, 4.0]]), "sqrt")


def test_as_matrix_validation():
    assert as_matrix([1.0, 2.0, 3.0]).shape == (3, 1)
    with pytest.raises(DimensionError):
        as_matrix(np.ones((2, 2, 2)))
    with pytest.raises(InputError):
        as_matrix([[np.nan]])


def test_backward_of_mean_all():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(2, 3))
    tape.backward(tape.mean_all(x))
    np.testing.assert_allclose(tape.grad(x), np.full((2, 3), 1.0 / 6.0))


def test_backward_of_mean_of_square(rng):
    m = rng.normal(size=(3, 4))
    tape = Tape()
    x = tape.leaf(m)
    tape.backward(tape.mean_all(x * x))
    np.testing.assert_allclose(tape.grad(x), 2.0 * m / m.size, atol=1e-15)


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ContractError):
        tape.backward(x * x)


def test_constant_leaves_get_zero_gradient(rng):
    tape = Tape()
    x = tape.leaf(rng.normal(size=(3, 3)))
    c = tape.constant(rng.normal(size=(3, 3)))
    tape.backward(tape.mean_all(x * c))
    np.testing.assert_array_equal(tape.grad(c), np.zeros((3, 3)))
    np.testing.assert_allclose(tape.grad(x), c.value / 9.0)


def test_grad_before_backward_raises():
    tape = Tape()
    x = tape.leaf(np.ones((1, 1)))
    with pytest.raises(ContractError):
        tape.grad(x)


def test_finite_diff_linear_is_exact_at_origin():
    assert finite_diff_check(lambda t, x: t.mean_all(x), np.zeros((2, 2))) < 1e-10


def test_finite_diff_quadratic(rng):
    at = rng.uniform(0.5, 1.5, size=(3, 3))
    assert finite_diff_check(lambda t, x: t.mean_all(x * x), at) < 1e-8


def test_finite_diff_softmax_and_pdist(rng):
    at = rng.normal(size=(5, 2))
    mix = rng.normal(size=(2, 5))

    def f(t, x):
        return t.mean_all(t.pdist(x) * t.softmax(x @ t.constant(mix)))

    assert finite_diff_check(f, at) < 1e-5


def test_divide_safe_has_zero_gradient_on_zero_denominator():
    tape = Tape()
    a = tape.leaf([[1.0, 2.0]])
    b = tape.leaf([[0.0, 4.0]])
    out = tape.divide_safe(a, b)
    np.testing.assert_array_equal(out.value, [[0.0, 0.5]])
    tape.backward(tape.sum_all(out))
    np.testing.assert_allclose(tape.grad(a), [[0.0, 0.25]])
    np.testing.assert_allclose(tape.grad(b), [[0.0, -2.0 / 16.0]])


def test_allocation_tracker_counts_recorded_buffers():
    a = as_matrix(np.ones((4, 4)))
    with AllocationTracker() as tracker:
        matmul(a, a)
        hadamard(a, a)
    assert tracker.stats.buffers == 2
    assert tracker.stats.peak_floats == 32

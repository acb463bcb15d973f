import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from signsym.errors import DimensionError, NonFiniteError, RangeError
from signsym.tensor import SeededRng, hadamard, matmul, sample_uniform, sign_of


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    np.testing.assert_array_equal(matmul(np.eye(2), [[3, 4], [5, 6]]), [[3, 4], [5, 6]])


def test_matmul_row_by_column():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
       st.integers(0, 2**31))
def test_matmul_associative(m, k, n, p, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(m, k)), rng.normal(size=(k, n)), rng.normal(size=(n, p))
    left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
    assert np.max(np.abs(left - right)) <= 1e-9 * max(1.0, np.max(np.abs(left)))


def test_hadamard_examples():
    assert hadamard([1, 2, 3], [0, 0, 0]).tolist() == [0, 0, 0]
    assert hadamard([2, -3], [4, 5]).tolist() == [8, -15]
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    np.testing.assert_array_equal(hadamard(a, b), hadamard(b, a))


def test_hadamard_shape_mismatch():
    with pytest.raises(DimensionError):
        hadamard(np.ones(3), np.ones(4))


def test_sign_of_examples():
    assert sign_of([[2, -3], [0, 1]]).tolist() == [[1, -1], [0, 1]]
    assert sign_of(-np.arange(1, 7.0)).tolist() == [-1.0] * 6
    x = np.random.default_rng(2).normal(size=(3, 4))
    np.testing.assert_array_equal(sign_of(sign_of(x)), sign_of(x))


@given(arrays(np.float64, st.integers(1, 30),
              elements=st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v != 0)))
def test_sign_reconstructs_with_abs(a):
    s = sign_of(a)
    assert set(np.unique(s)) <= {-1.0, 1.0}
    np.testing.assert_array_equal(hadamard(np.abs(a), s), a)


@pytest.mark.parametrize("op", [
    lambda x: matmul(x, np.ones((2, 2))),
    lambda x: hadamard(x, np.ones((2, 2))),
    sign_of,
])
def test_nan_inputs_raise(op):
    x = np.ones((2, 2))
    x[0, 1] = np.nan
    with pytest.raises(NonFiniteError):
        op(x)


def test_sample_uniform_mean():
    draws = sample_uniform(SeededRng(7), (10_000,), 0.0, 1.0)
    assert abs(draws.mean() - 0.5) < 0.02
    assert draws.min() >= 0.0 and draws.max() < 1.0


def test_sample_uniform_deterministic():
    a = sample_uniform(SeededRng(11, 3), (4, 5), -1, 1)
    b = sample_uniform(SeededRng(11, 3), (4, 5), -1, 1)
    np.testing.assert_array_equal(a, b)


def test_sample_uniform_degenerate_range():
    with pytest.raises(RangeError):
        sample_uniform(SeededRng(0), (3,), 1.0, 1.0)


def test_streams_are_distinct_and_stateless():
    a = SeededRng(5, 1).uniform((8,))
    b = SeededRng(5, 2).uniform((8,))
    assert not np.array_equal(a, b)
    rng = SeededRng(5, 1)
    rng.child(9).uniform((100,))
    np.testing.assert_array_equal(rng.uniform((8,)), a)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hydrodi.errors import ParameterError, ShapeError
from hydrodi.numerics import activate, as_matrix, bernoulli_mask, make_rng, matmul, relu, sigmoid

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_rng_is_reproducible():
    a = make_rng(3).random(5)
    b = make_rng(3).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(4).random(5))


def test_matmul_shape_checks():
    assert matmul(np.ones((2, 3)), np.ones((3, 4))).shape == (2, 4)
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        matmul(np.ones(3), np.ones((3, 1)))


def test_as_matrix_rejects_wrong_shape():
    assert as_matrix([[1, 2]], 1, 2).shape == (1, 2)
    assert as_matrix([1, 2, 3]).shape == (1, 3)
    with pytest.raises(ShapeError):
        as_matrix(np.ones((2, 2, 2)))
    with pytest.raises(ShapeError):
        as_matrix([[1, 2]], 2, 1)


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_sigmoid_matches_logistic(x):
    ref = np.array([1 / (1 + np.exp(-v)) if v > -700 else 0.0 for v in x])
    assert np.allclose(sigmoid(x), ref, rtol=1e-12, atol=1e-15)


def test_sigmoid_saturates_without_overflow():
    with np.errstate(all="raise"):
        s = sigmoid(np.array([-1e4, 0.0, 1e4]))
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0


def test_activate_dispatch():
    x = np.array([-1.0, 0.5])
    assert np.array_equal(activate("relu", x), relu(x))
    assert np.allclose(activate("tanh", x), np.tanh(x))
    with pytest.raises(ParameterError):
        activate("swish", x)


@settings(max_examples=30)
@given(st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_bernoulli_mask_values(keep, seed):
    m = bernoulli_mask(make_rng(seed), 40, 30, keep)
    assert set(np.unique(m)) <= {0.0, 1.0 / keep}


def test_bernoulli_mask_is_unbiased():
    m = bernoulli_mask(make_rng(0), 500, 400, 0.5)
    assert abs(m.mean() - 1.0) < 0.01


def test_bernoulli_mask_keep_one_and_invalid():
    assert np.array_equal(bernoulli_mask(make_rng(0), 2, 3, 1.0), np.ones((2, 3)))
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            bernoulli_mask(make_rng(0), 2, 3, bad)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddn.errors import DimensionError, NumericError, ParameterError
from ddn.tensor import RngStream, bernoulli_mask, matmul, softmax

from oracles import naive_matmul


def test_matmul_identity():
    np.testing.assert_array_equal(matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]]), [[3, 4], [5, 6]])


def test_matmul_hand():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_nonfinite():
    with pytest.raises(NumericError):
        matmul([[np.inf]], [[1.0]])


def test_matmul_random_pairs_match_triple_loop():
    gen = np.random.default_rng(0)
    a, b = gen.standard_normal((5, 7)), gen.standard_normal((7, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a.tolist(), b.tolist()), rtol=0, atol=1e-12)
    for _ in range(100):
        m, k, n = gen.integers(1, 9, 3)
        a, b = gen.standard_normal((m, k)), gen.standard_normal((k, n))
        ref = naive_matmul(a.tolist(), b.tolist())
        assert np.max(np.abs(matmul(a, b) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([0, 0, 0]), [1 / 3] * 3, atol=1e-15)


def test_softmax_matches_high_precision():
    # mpmath at 40 digits: exp(z_i) / sum_j exp(z_j) for z = [1, 2, 3]
    expected = [0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953]
    np.testing.assert_allclose(softmax([1, 2, 3], 1.0), expected, rtol=0, atol=1e-12)


def test_softmax_high_temperature_is_uniform():
    assert np.all(np.abs(softmax([1, 2, 3], 1e6) - 1 / 3) < 1e-5)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_softmax_rejects_nonpositive_temperature(t):
    with pytest.raises(ParameterError):
        softmax([1.0, 2.0], t)


finite_vec = arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50))


# spread / T stays below ~700 so exp() of the smallest component does not underflow
@settings(max_examples=200, deadline=None)
@given(finite_vec, st.floats(0.15, 100.0))
def test_softmax_on_simplex(z, t):
    p = softmax(z, t)
    assert np.all(p > 0) and np.all(p <= 1)
    assert abs(p.sum() - 1) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(finite_vec, st.floats(-100, 100), st.floats(0.1, 10.0))
def test_softmax_shift_invariant(z, c, t):
    np.testing.assert_allclose(softmax(z + c, t), softmax(z, t), rtol=0, atol=1e-12)


def test_bernoulli_mask_degenerate():
    np.testing.assert_array_equal(bernoulli_mask((4, 5), 1.0, RngStream(3)), np.ones((4, 5)))


def test_bernoulli_mask_rate():
    m = bernoulli_mask((10_000,), 0.8, RngStream(0, 0))
    assert set(np.unique(m)) <= {0.0, 1.0}
    assert abs(m.mean() - 0.8) < 0.01
    means = [bernoulli_mask((10_000,), 0.8, RngStream(s, 1)).mean() for s in range(200)]
    assert abs(np.mean(means) - 0.8) < 0.001


def test_bernoulli_mask_deterministic():
    a = bernoulli_mask((50, 20), 0.5, RngStream(5, 9))
    b = bernoulli_mask((50, 20), 0.5, RngStream(5, 9))
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_bernoulli_mask_bad_prob(p):
    with pytest.raises(ParameterError):
        bernoulli_mask((3,), p, RngStream(0))


def test_rng_stream_reproducible():
    a = RngStream(123, 456).uniform(10_000)
    b = RngStream(123, 456).uniform(10_000)
    assert a.tobytes() == b.tobytes()


def test_rng_stream_ids_independent():
    a = RngStream(123, 1).uniform(20_000)
    b = RngStream(123, 2).uniform(20_000)
    assert not np.array_equal(a, b)
    # uncorrelated to within ~5 standard errors
    assert abs(np.corrcoef(a, b)[0, 1]) < 5 / np.sqrt(a.size)


def test_rng_children_distinct_and_stable():
    root = RngStream(9, 0)
    ids = {root.child(i).stream_id for i in range(1000)}
    assert len(ids) == 1000
    assert root.child(3, 4) == RngStream(9, 0).child(3, 4)
    assert root.child(3, 4) != root.child(4, 3)


def test_rng_rejects_out_of_range_seed():
    with pytest.raises(ParameterError):
        RngStream(-1)
    with pytest.raises(ParameterError):
        RngStream(2**64)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fishercov.errors import (
    ConvergenceError,
    DimensionError,
    FactorizationError,
    InsufficientDataError,
)
from fishercov.matcore import (
    SampleMatrix,
    center_columns,
    check_symmetric,
    cholesky,
    min_eigenvalue,
    sample_covariance,
)

from oracles import qr_eigenvalues

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def _random_symmetric(rng, p):
    a = rng.standard_normal((p, p))
    return (a + a.T) / 2


class TestSampleMatrix:
    def test_shape_and_names(self):
        x = SampleMatrix(np.ones((3, 2)), ["a", "b"])
        assert (x.n, x.p) == (3, 2)
        assert x.name_of(1) == "b"

    def test_read_only_copy(self):
        raw = np.zeros((2, 2))
        x = SampleMatrix(raw)
        raw[0, 0] = 5.0
        assert x.data[0, 0] == 0.0
        with pytest.raises(ValueError):
            x.data[0, 0] = 1.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="row 1, column 0"):
            SampleMatrix(np.array([[1.0], [np.nan]]))

    def test_name_count(self):
        with pytest.raises(DimensionError):
            SampleMatrix(np.ones((2, 2)), ["a"])


class TestCenter:
    def test_hand_example(self):
        np.testing.assert_array_equal(center_columns([[1.0], [3.0]]).data, [[-1.0], [1.0]])

    def test_idempotent(self):
        x = np.random.default_rng(0).standard_normal((7, 3))
        once = center_columns(x).data
        np.testing.assert_allclose(center_columns(once).data, once, atol=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            center_columns([[1.0, 2.0]])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 9), st.integers(1, 5)), elements=finite))
    def test_zero_means(self, x):
        assert np.all(np.abs(center_columns(x).data.mean(axis=0)) <= 1e-12 * max(1.0, np.abs(x).max()))


class TestSampleCovariance:
    def test_hand_example(self):
        assert sample_covariance([[1.0], [-1.0]])[0, 0] == 1.0
        assert sample_covariance([[1.0], [-1.0]], divisor="n-1")[0, 0] == 2.0

    def test_identical_rows(self):
        np.testing.assert_array_equal(sample_covariance(np.tile([1.0, 2.0, 3.0], (4, 1))), np.zeros((3, 3)))

    def test_brute_force(self):
        x = np.random.default_rng(1).standard_normal((6, 3))
        n, p = x.shape
        means = [sum(x[k, j] for k in range(n)) / n for j in range(p)]
        for i in range(p):
            for j in range(p):
                ref = sum((x[k, i] - means[i]) * (x[k, j] - means[j]) for k in range(n)) / n
                assert sample_covariance(x)[i, j] == pytest.approx(ref, abs=1e-12)

    def test_bad_divisor(self):
        with pytest.raises(ValueError):
            sample_covariance(np.eye(3), divisor="n+1")

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 9), st.integers(1, 5)), elements=finite),
           arrays(np.float64, 5, elements=st.floats(-1, 1)))
    def test_psd_and_symmetric(self, x, v):
        s = sample_covariance(x)
        np.testing.assert_array_equal(s, s.T)
        v = v[: s.shape[0]]
        if np.linalg.norm(v) > 1e-3:
            v = v / np.linalg.norm(v)
            assert v @ s @ v >= -1e-10 * max(1.0, np.abs(s).max())


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))

    def test_hand_example(self):
        np.testing.assert_allclose(cholesky([[4.0, 2.0], [2.0, 5.0]]), [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)

    def test_pivot_index(self):
        a = np.diag([1.0, 2.0, -1.0, 3.0])
        with pytest.raises(FactorizationError) as err:
            cholesky(a)
        assert err.value.pivot == 2

    def test_asymmetric(self):
        with pytest.raises(ValueError):
            cholesky([[1.0, 0.5], [0.0, 1.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_round_trip(self, p, seed):
        b = np.random.default_rng(seed).standard_normal((p, p))
        a = b @ b.T + p * np.eye(p)
        factor = cholesky(a)
        np.testing.assert_allclose(factor @ factor.T, a, rtol=1e-12, atol=1e-12)
        assert np.all(np.triu(factor, 1) == 0)


@pytest.mark.parametrize("method", ["lapack", "power"])
class TestMinEigenvalue:
    @pytest.mark.parametrize("p", [1, 3, 10])
    def test_identity(self, method, p):
        assert min_eigenvalue(np.eye(p), method=method) == pytest.approx(1.0, abs=1e-10)

    def test_two_by_two(self, method):
        assert min_eigenvalue([[1.0, 0.5], [0.5, 1.0]], method=method) == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_qr_oracle(self, method, seed):
        a = _random_symmetric(np.random.default_rng(seed), 8)
        assert min_eigenvalue(a, method=method) == pytest.approx(qr_eigenvalues(a)[0], abs=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
    def test_shift(self, method, seed, s):
        a = _random_symmetric(np.random.default_rng(seed), 6)
        shifted = min_eigenvalue(a + s * np.eye(6), method=method)
        assert shifted == pytest.approx(min_eigenvalue(a, method=method) + s, abs=1e-8)


def test_power_iteration_cap():
    a = _random_symmetric(np.random.default_rng(3), 30)
    with pytest.raises(ConvergenceError) as err:
        min_eigenvalue(a, method="power", max_iter=2)
    assert err.value.residual > 0


def test_check_symmetric_shape():
    with pytest.raises(DimensionError):
        check_symmetric(np.ones((2, 3)))

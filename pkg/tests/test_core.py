import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab.core import (
    Sample,
    SpdMatrix,
    frobenius_distance,
    mahalanobis_distances,
    spd_inverse,
    trace_normalize,
)
from scatterlab.distributions import StandardNormal, sample
from scatterlab.errors import DimensionMismatch, SingularMatrix
from scatterlab.scatter import cov

from conftest import random_spd


def test_sample_shape_and_immutability():
    s = Sample([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert (s.n, s.p) == (3, 2)
    with pytest.raises(ValueError):
        s.data[0, 0] = 9.0
    assert Sample([1.0, 2.0]).p == 1


@pytest.mark.parametrize("bad", [[[np.nan, 1.0]], [[np.inf]], np.empty((0, 2))])
def test_sample_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        Sample(bad)


def test_spd_rejects_asymmetric_and_indefinite():
    with pytest.raises(ValueError):
        SpdMatrix([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        SpdMatrix([[1.0, 2.0], [2.0, 1.0]])
    semi = SpdMatrix([[1.0, 1.0], [1.0, 1.0]])
    assert not semi.is_strict


def test_inverse_identity_and_diagonal():
    np.testing.assert_array_equal(np.asarray(spd_inverse(np.eye(3))), np.eye(3))
    np.testing.assert_allclose(np.asarray(spd_inverse(np.diag([2.0, 4.0]))), np.diag([0.5, 0.25]), rtol=0, atol=1e-15)


def test_inverse_residual(gen):
    m = random_spd(gen, 4)
    inv = np.asarray(spd_inverse(m))
    assert np.max(np.abs(m @ inv - np.eye(4))) <= 1e-10
    np.testing.assert_array_equal(inv, inv.T)


def test_inverse_singular():
    with pytest.raises(SingularMatrix):
        spd_inverse(np.diag([1.0, 0.0]))


@pytest.mark.parametrize("cond", [1.0, 1e3, 1e6])
def test_inverse_is_involution(gen, cond):
    m = random_spd(gen, 5, cond)
    back = np.asarray(spd_inverse(spd_inverse(m)))
    assert frobenius_distance(back, m) <= 1e-8


def test_mahalanobis_basic():
    np.testing.assert_allclose(mahalanobis_distances(np.eye(2), np.eye(2)), [1.0, 1.0])
    np.testing.assert_allclose(mahalanobis_distances([[2.0, 0.0]], np.diag([4.0, 1.0])), [1.0])
    with pytest.raises(DimensionMismatch):
        mahalanobis_distances(np.ones((3, 2)), np.eye(3))
    with pytest.raises(SingularMatrix):
        mahalanobis_distances(np.ones((3, 2)), np.diag([1.0, 0.0]))


def test_mahalanobis_mean_is_p():
    # E(x^T Sigma^-1 x) = trace(I_p) = p
    s = sample(StandardNormal(3), 100_000, 5)
    d = mahalanobis_distances(s, cov(s).matrix)
    assert abs(d.mean() - 3) <= 0.02 * 3
    assert np.all(d >= 0)


def test_mahalanobis_orthogonal_invariance(gen):
    x = gen.standard_normal((50, 4))
    m = random_spd(gen, 4)
    u, _ = np.linalg.qr(gen.standard_normal((4, 4)))
    d1 = mahalanobis_distances(x, m)
    d2 = mahalanobis_distances(x @ u.T, u @ m @ u.T)
    assert np.max(np.abs(d1 - d2)) <= 1e-10


def test_frobenius_examples():
    assert frobenius_distance(np.eye(2), np.eye(2)) == 0
    assert frobenius_distance(np.eye(2), np.zeros((2, 2))) == pytest.approx(np.sqrt(2))
    m = np.array([[2.0, 0.3], [0.3, 1.0]])
    e = np.zeros((2, 2))
    e[0, 0] = 1e-3
    assert frobenius_distance(m, m + e) == pytest.approx(1e-3)
    with pytest.raises(DimensionMismatch):
        frobenius_distance(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_frobenius_triangle_inequality(seed, p):
    gen = np.random.default_rng(seed)
    a, b, c = (random_spd(gen, p) for _ in range(3))
    assert frobenius_distance(a, c) <= frobenius_distance(a, b) + frobenius_distance(b, c) + 1e-12


def test_trace_normalize():
    np.testing.assert_allclose(np.trace(trace_normalize(np.diag([1.0, 3.0, 8.0]))), 3.0)

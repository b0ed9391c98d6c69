import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from scatterlab.core import frobenius_distance
from scatterlab.distributions import (
    Affine,
    Elliptical,
    IndependentSum,
    Marginal,
    Product,
    Radial,
    StandardNormal,
    child_seed,
    gaussian,
    product,
    sample,
    spec_from_dict,
    spec_to_dict,
    standardized_sum_spec,
    true_covariance,
)
from scatterlab.errors import ConfigError, MissingCertificate
from scatterlab.distributions import require_independent

LAPLACE3 = product(*(Marginal.laplace(1.0),) * 3)

SPECS = {
    "normal3": StandardNormal(3),
    "laplace3": LAPLACE3,
    "mixed": product(Marginal.uniform(2.0), Marginal.exponential(0.5), Marginal.student_t(6)),
    "affine": Affine([[1.0, 0.5], [0.0, 2.0]], [1.0, -1.0], product(Marginal.laplace(0.5), Marginal.uniform())),
    "sum": IndependentSum(gaussian([[2.0, 1.0], [1.0, 3.0]]), product(Marginal.exponential(), Marginal.laplace())),
    "elliptical_t": Elliptical([[1.0, 0.3], [0.3, 2.0]], Radial("student_t", 7.0)),
    "sphere": Elliptical(np.eye(3), Radial("sphere", 2.0)),
    "clt": standardized_sum_spec(product(Marginal.exponential(), Marginal.exponential()), 4),
}


def test_marginal_variances():
    # closed forms: 2 b^2, a^2 / 3, 1 / rate^2, df / (df - 2)
    assert Marginal.laplace(1.5).variance == pytest.approx(4.5)
    assert Marginal.uniform(3.0).variance == pytest.approx(3.0)
    assert Marginal.exponential(2.0).variance == pytest.approx(0.25)
    assert Marginal.student_t(5).variance == pytest.approx(5 / 3)
    assert Marginal.normal().variance == 1.0


@pytest.mark.parametrize("m", [Marginal.laplace(0.7), Marginal.uniform(2.0), Marginal.exponential(3.0),
                               Marginal.student_t(8), Marginal.normal()])
def test_marginal_against_scipy(m):
    ref = {
        "laplace": lambda: stats.laplace(scale=m.param),
        "uniform": lambda: stats.uniform(loc=-m.param, scale=2 * m.param),
        "centered_exponential": lambda: stats.expon(loc=-1 / m.param, scale=1 / m.param),
        "student_t": lambda: stats.t(m.param),
        "standard_normal": lambda: stats.norm(),
    }[m.kind]()
    assert ref.mean() == pytest.approx(0.0, abs=1e-12)
    assert ref.var() == pytest.approx(m.variance)
    x = m.draw(np.random.default_rng(3), 20_000)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


@pytest.mark.parametrize("bad", [("laplace", 0.0), ("student_t", 2.0), ("uniform", None), ("gamma", 1.0)])
def test_marginal_rejects(bad):
    with pytest.raises(ValueError):
        Marginal(*bad)


def test_sampling_is_deterministic():
    a = np.asarray(sample(StandardNormal(3), 5, 42))
    b = np.asarray(sample(StandardNormal(3), 5, 42))
    assert a.shape == (5, 3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, np.asarray(sample(StandardNormal(3), 5, 43)))


def test_affine_scaling_matches_base_draws():
    base = np.asarray(sample(StandardNormal(2), 100, 9))
    img = np.asarray(sample(Affine(np.diag([2.0, 3.0]), None, StandardNormal(2)), 100, 9))
    np.testing.assert_array_equal(img, base * [2.0, 3.0])


@pytest.mark.parametrize("name", SPECS)
def test_affine_closure_bitwise(name):
    inner = SPECS[name]
    gen = np.random.default_rng(1)
    A = gen.standard_normal((2, inner.dim))
    b = gen.standard_normal(2)
    img = np.asarray(sample(Affine(A, b, inner), 50, 77))
    np.testing.assert_array_equal(img, np.asarray(sample(inner, 50, 77)) @ A.T + b)


def test_laplace_empirical_covariance():
    x = np.asarray(sample(LAPLACE3, 100_000, 11))
    emp = np.cov(x, rowvar=False, bias=True)
    assert frobenius_distance(emp, 2 * np.eye(3)) <= 0.05


def test_true_covariance_examples():
    np.testing.assert_allclose(np.asarray(true_covariance(IndependentSum(StandardNormal(2), StandardNormal(2)))),
                               2 * np.eye(2))
    np.testing.assert_allclose(np.asarray(true_covariance(Affine([[1.0, 1.0]], None, StandardNormal(2)))), [[2.0]])
    tl = product(Marginal.student_t(5), Marginal.laplace(1.0))
    np.testing.assert_allclose(np.asarray(true_covariance(tl)), np.diag([5 / 3, 2.0]))
    # Monte Carlo cross-check; t(5) has a heavy fourth moment so the tolerance is loose
    x = np.asarray(sample(tl, 200_000, 8))
    assert frobenius_distance(np.cov(x, rowvar=False, bias=True), np.diag([5 / 3, 2.0])) <= 0.08


@pytest.mark.parametrize("name", SPECS)
def test_empirical_covariance_matches_truth(name):
    spec = SPECS[name]
    sigma = np.asarray(true_covariance(spec))
    for seed in (1, 2, 3):
        x = np.asarray(sample(spec, 100_000, seed))
        emp = np.cov(x, rowvar=False, bias=True)
        assert frobenius_distance(emp, sigma) <= 0.05 * (1 + np.linalg.norm(sigma))


def test_standardized_sum_identity_and_covariance():
    spec = LAPLACE3
    np.testing.assert_array_equal(np.asarray(sample(standardized_sum_spec(spec, 1), 40, 5)),
                                  np.asarray(sample(spec, 40, 5)))
    for n in (1, 3, 50):
        np.testing.assert_allclose(np.asarray(true_covariance(standardized_sum_spec(spec, n))),
                                   np.asarray(true_covariance(spec)))


def test_standardized_sum_skewness_decays():
    exp2 = product(Marginal.exponential(1.0), Marginal.exponential(1.0))
    x = np.asarray(sample(standardized_sum_spec(exp2, 256), 100_000, 12))
    # skewness of the exponential is 2, of the scaled sum 2 / sqrt(256)
    assert np.all(np.abs(stats.skew(x, axis=0)) <= 0.2)
    raw = np.asarray(sample(exp2, 100_000, 12))
    assert np.all(np.abs(stats.skew(raw, axis=0)) > 1.5)


def test_seed_streams_uncorrelated():
    n = 20_000
    for r in range(3):
        a = np.asarray(sample(StandardNormal(3), n, child_seed(7, r)))
        b = np.asarray(sample(StandardNormal(3), n, child_seed(7, r + 1)))
        for j in range(3):
            assert abs(np.corrcoef(a[:, j], b[:, j])[0, 1]) <= 3 / np.sqrt(n)


def test_child_seed_contract():
    assert child_seed(5, 3) == child_seed(5, 3)
    assert len({child_seed(5, i) for i in range(10_000)}) == 10_000
    assert all(0 <= child_seed(2**64 - 1, i) < 2**64 for i in range(5))
    with pytest.raises(ValueError):
        child_seed(-1, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_child_seed_distinct_indices(seed, i, j):
    assert (child_seed(seed, i) == child_seed(seed, j)) == (i == j)


@pytest.mark.parametrize("name", SPECS)
def test_json_round_trip(name):
    spec = SPECS[name]
    d = json.loads(json.dumps(spec_to_dict(spec)))
    back = spec_from_dict(d)
    assert spec_to_dict(back) == d
    np.testing.assert_array_equal(np.asarray(sample(back, 20, 4)), np.asarray(sample(spec, 20, 4)))


def test_json_examples_and_errors():
    spec = spec_from_dict({"kind": "product", "marginals": [{"kind": "laplace", "scale": 1.0}, {"kind": "uniform", "halfwidth": 1.0}]})
    assert spec.dim == 2
    g = spec_from_dict({"kind": "gaussian", "sigma": [[1.0, 0.5], [0.5, 1.0]]})
    np.testing.assert_allclose(np.asarray(true_covariance(g)), [[1.0, 0.5], [0.5, 1.0]])
    for bad in [{"kind": "product", "marginals": [], "extra": 1},
                {"kind": "nope"},
                {"kind": "product", "marginals": [{"kind": "laplace", "scale": -1}]},
                {"kind": "affine", "A": [[1.0, 0.0]], "inner": {"kind": "standard_normal", "p": 3}},
                {"kind": "standard_normal"},
                [1, 2]]:
        with pytest.raises(ConfigError):
            spec_from_dict(bad)


def test_dimension_checks():
    with pytest.raises(ValueError):
        IndependentSum(StandardNormal(2), StandardNormal(3))
    with pytest.raises(ValueError):
        Affine(np.eye(3), None, StandardNormal(2))


def test_independence_blocks():
    assert LAPLACE3.independence_blocks() == [frozenset({0}), frozenset({1}), frozenset({2})]
    g = gaussian([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 2.0]])
    assert g.certifies_independent(0, 2) and not g.certifies_independent(0, 1)
    mixed = Affine([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]], None, LAPLACE3)
    assert mixed.certifies_independent(0, 1)
    rot = Affine([[1.0, 1.0], [1.0, -1.0]], None, product(Marginal.laplace(), Marginal.laplace()))
    assert not rot.certifies_independent(0, 1)
    ell = Elliptical(np.eye(2), Radial("student_t", 5.0))
    assert not ell.certifies_independent(0, 1)
    with pytest.raises(MissingCertificate):
        require_independent(ell, [(0, 1)])


def test_elliptical_radial_moments():
    assert Radial("gaussian").second_moment(3) == 3
    assert Radial("student_t", 5.0).second_moment(2) == pytest.approx(10 / 3)
    x = np.asarray(sample(Elliptical(np.eye(3), Radial("sphere", 2.0)), 1000, 1))
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 2.0)


def test_pairwise_certificate_is_not_transitive():
    chain = Affine([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]], None, LAPLACE3)
    assert chain.certifies_independent(0, 1)
    assert not chain.certifies_independent(0, 2) and not chain.certifies_independent(1, 2)
    assert chain.independence_blocks() == [frozenset({0, 1, 2})]
    summed = IndependentSum(chain, Affine(np.eye(3), None, StandardNormal(3)))
    assert summed.certifies_independent(0, 1) and not summed.certifies_independent(0, 2)
    with pytest.raises(IndexError):
        chain.certifies_independent(0, 3)

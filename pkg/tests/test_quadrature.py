import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlgmp.errors import EvaluationError
from nlgmp.gaussian import GaussianMoments
from nlgmp.quadrature import (
    RuleSpec,
    expect,
    gauss_hermite_rule,
    hermite_1d,
    make_rule,
    rule_for,
    spherical_radial_rule,
    transform_points,
    unscented_rule,
)

SQ3 = math.sqrt(3.0)


def std_normal_moment(k):
    """E[Z^k] for Z ~ N(0, 1): (k-1)!! for even k, else 0."""
    if k % 2:
        return 0.0
    return float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0


def shifted_moment(mu, sigma, k):
    """E[(mu + sigma Z)^k] by the binomial expansion."""
    return sum(comb(k, j) * mu ** (k - j) * sigma**j * std_normal_moment(j) for j in range(k + 1))


def sorted_rule(rule):
    order = np.lexsort(rule.points.T[::-1])
    return rule.points[order], rule.weights[order]


def test_unscented_n1_kappa2():
    r = unscented_rule(1, 2.0)
    pts, w = sorted_rule(r)
    np.testing.assert_allclose(pts.ravel(), [-SQ3, 0, SQ3], atol=1e-15)
    np.testing.assert_allclose(w, [1 / 6, 2 / 3, 1 / 6], atol=1e-15)
    assert r.degree == 3


def test_unscented_n2_kappa1():
    r = unscented_rule(2, 1.0)
    assert r.size == 5
    assert r.weights[0] == pytest.approx(1 / 3)
    np.testing.assert_allclose(np.abs(r.points[1:]).max(axis=1), SQ3)


def test_unscented_bad_kappa():
    with pytest.raises(ValueError):
        unscented_rule(1, -1.0)


def test_unscented_default_kappa_and_negative_weight_flag():
    assert unscented_rule(2).weights[0] == pytest.approx(1 / 3)
    r = unscented_rule(5)
    assert r.has_negative_weights
    assert all(e < 1e-12 for e in r.moment_errors()[:2])


def test_hermite_closed_forms():
    x, w = hermite_1d(2)
    np.testing.assert_allclose(x, [-1, 1], atol=1e-15)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)
    x, w = hermite_1d(3)
    np.testing.assert_allclose(x, [-SQ3, 0, SQ3], atol=1e-14)
    np.testing.assert_allclose(w, [1 / 6, 2 / 3, 1 / 6], atol=1e-14)


def test_hermite_matches_numpy_reference():
    # independent check: numpy's physicists' rule, rescaled
    for m in (4, 7, 12, 20):
        ref_x, ref_w = np.polynomial.hermite_e.hermegauss(m)
        x, w = hermite_1d(m)
        np.testing.assert_allclose(x, ref_x, atol=1e-12)
        np.testing.assert_allclose(w, ref_w / ref_w.sum(), atol=1e-13)


def test_hermite_tensor_n2_m3():
    r = gauss_hermite_rule(2, 3)
    assert r.size == 9
    k = np.flatnonzero(np.all(np.isclose(r.points, [SQ3, SQ3]), axis=1))
    assert len(k) == 1
    assert r.weights[k[0]] == pytest.approx(1 / 36, abs=1e-15)


def test_hermite_size_guard():
    with pytest.raises(ValueError, match="points"):
        gauss_hermite_rule(8, 10)
    with pytest.raises(ValueError):
        gauss_hermite_rule(1, 21)
    with pytest.raises(ValueError):
        gauss_hermite_rule(1, 0)


def test_spherical_radial_examples():
    r = spherical_radial_rule(2)
    pts, w = sorted_rule(r)
    s = math.sqrt(2)
    np.testing.assert_allclose(pts, [[-s, 0], [0, -s], [0, s], [s, 0]], atol=1e-15)
    np.testing.assert_allclose(w, 0.25)
    r1 = spherical_radial_rule(1)
    np.testing.assert_allclose(sorted(r1.points.ravel()), [-1, 1])
    r3 = spherical_radial_rule(3)
    assert r3.size == 6
    np.testing.assert_allclose(np.linalg.norm(r3.points, axis=1), SQ3)


ALL_RULES = [
    lambda n: unscented_rule(n),
    lambda n: unscented_rule(n, 1.0),
    lambda n: spherical_radial_rule(n),
    lambda n: gauss_hermite_rule(n, 2),
    lambda n: gauss_hermite_rule(n, 5),
]


@pytest.mark.parametrize("make", ALL_RULES)
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_moment_identities(make, n):
    e0, e1, e2 = make(n).moment_errors()
    assert e0 <= 1e-12
    assert e1 <= 1e-12
    assert e2 <= 1e-10


def test_transform_points_examples():
    rule = spherical_radial_rule(2)
    g = GaussianMoments([1, 1], np.diag([4.0, 9.0]))
    sp = transform_points(rule, g)
    k = np.flatnonzero(np.all(np.isclose(rule.points, [math.sqrt(2), 0]), axis=1))[0]
    np.testing.assert_allclose(sp.points[k], [1 + 2 * math.sqrt(2), 1])
    np.testing.assert_array_equal(sp.weights, rule.weights)

    sp = transform_points(unscented_rule(2), GaussianMoments([3, -1], np.zeros((2, 2))))
    np.testing.assert_array_equal(sp.points, np.tile([3, -1], (5, 1)))

    sp = transform_points(unscented_rule(1, 2.0), GaussianMoments([2.0], [[0.25]]))
    assert sp.points[1, 0] == pytest.approx(2 + 0.5 * SQ3, abs=1e-15)


def test_transform_points_unit_node_example():
    # a rule whose node is (1, 0) moves to (3, 1) under mean (1, 1), cov diag(4, 9)
    from nlgmp.quadrature import QuadratureRule

    rule = QuadratureRule([[1.0, 0.0]], [1.0], degree=0)
    sp = transform_points(rule, GaussianMoments([1, 1], np.diag([4.0, 9.0])))
    np.testing.assert_allclose(sp.points[0], [3, 1])


def test_expect_examples():
    g = GaussianMoments([0.7, -2.0], [[2.0, 0.3], [0.3, 0.5]])
    for make in ALL_RULES:
        np.testing.assert_allclose(expect(make(2), lambda x: x, g), g.mean, atol=1e-12)
    r3 = gauss_hermite_rule(1, 3)
    unit = GaussianMoments([0.0], [[1.0]])
    assert expect(r3, lambda x: x**2, unit)[0] == pytest.approx(1.0, abs=1e-14)
    assert expect(r3, lambda x: x**4, unit)[0] == pytest.approx(3.0, abs=1e-13)


def test_expect_reports_non_finite_node():
    with pytest.raises(EvaluationError, match="node"), np.errstate(divide="ignore"):
        expect(gauss_hermite_rule(1, 3), lambda x: 1.0 / x, GaussianMoments([0.0], [[1.0]]))


@st.composite
def monomial_case(draw):
    n = draw(st.integers(1, 3))
    m = draw(st.integers(1, 6))
    degree = 2 * m - 1
    total = draw(st.integers(0, degree))
    cuts = sorted(draw(st.lists(st.integers(0, total), min_size=n - 1, max_size=n - 1)))
    powers = np.diff([0, *cuts, total])
    mu = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
    sig = draw(st.lists(st.floats(0.2, 2), min_size=n, max_size=n))
    return n, m, powers, np.array(mu), np.array(sig)


@settings(max_examples=150, deadline=None)
@given(monomial_case())
def test_hermite_polynomial_exactness(case):
    n, m, powers, mu, sig = case
    rule = gauss_hermite_rule(n, m)
    g = GaussianMoments(mu, np.diag(sig**2))
    got = expect(rule, lambda x: np.prod(x**powers), g)[0]
    want = float(np.prod([shifted_moment(mu[j], sig[j], int(powers[j])) for j in range(n)]))
    assert abs(got - want) <= 1e-9 * max(abs(want), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31))
def test_third_degree_rules_exact_to_degree_three(n, seed):
    rng = np.random.default_rng(seed)
    powers = rng.multinomial(rng.integers(0, 4), np.ones(n) / n)
    unit = GaussianMoments(np.zeros(n), np.eye(n))
    want = float(np.prod([std_normal_moment(int(k)) for k in powers]))
    for rule in (unscented_rule(n), spherical_radial_rule(n)):
        got = expect(rule, lambda x: np.prod(x**powers), unit)[0]
        assert abs(got - want) <= 1e-9 * max(abs(want), 1.0)


@pytest.mark.parametrize("make", ALL_RULES)
def test_affine_exactness(make, rng):
    n = 3
    A = rng.standard_normal((2, n))
    b = rng.standard_normal(2)
    M = rng.standard_normal((n, n))
    g = GaussianMoments(rng.standard_normal(n), M @ M.T + np.eye(n))
    np.testing.assert_allclose(expect(make(n), lambda x: A @ x + b, g), A @ g.mean + b, atol=1e-12)


def test_documented_inexactness_of_third_degree_rules():
    unit = GaussianMoments(np.zeros(2), np.eye(2))
    second_moment = lambda x: (x[0] * x[1]) ** 2
    assert expect(spherical_radial_rule(2), second_moment, unit)[0] == 0.0
    for m in range(2, 6):
        assert expect(gauss_hermite_rule(2, m), second_moment, unit)[0] == pytest.approx(1.0, abs=1e-12)


def test_rule_spec_and_make_rule():
    spec = RuleSpec("ut", kappa=2.0)
    assert rule_for(spec, 1).size == 3
    assert rule_for(spec, 1) is rule_for(spec, 1)
    with pytest.raises(ValueError):
        make_rule("smolyak", 2)
    with pytest.raises(ValueError):
        rule_for(unscented_rule(2), 3)

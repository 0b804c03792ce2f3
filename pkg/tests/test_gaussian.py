import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pipeyield import DomainError, GaussianMoments, clark_corr_propagate, clark_max_pair, max_reduce
from pipeyield.gaussian import (
    ConsistencyWarning,
    fold_order,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)

G = GaussianMoments


# ---------------------------------------------------------------- kernels


def test_pdf_peak():
    assert std_normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)


def test_pdf_at_one():
    assert std_normal_pdf(1.0) == pytest.approx(0.2419707245, abs=1e-10)


@given(st.floats(-30, 30))
def test_pdf_even(x):
    assert std_normal_pdf(x) == std_normal_pdf(-x)


def test_cdf_median():
    assert std_normal_cdf(0.0) == 0.5


def test_cdf_against_series_oracle():
    assert std_normal_cdf(1.6449) == pytest.approx(oracles.cdf_oracle(1.6449), abs=1e-12)
    assert std_normal_cdf(1.6449) == pytest.approx(0.95, abs=1e-4)
    for x in (-5.0, -2.3, -0.4, 0.7, 3.1):
        assert std_normal_cdf(x) == pytest.approx(oracles.cdf_oracle(x), abs=1e-10)


@given(st.floats(-37, 37))
def test_cdf_reflection(x):
    assert std_normal_cdf(x) == pytest.approx(1 - std_normal_cdf(-x), abs=1e-15)


def test_cdf_vectorised_matches_scalar():
    xs = np.linspace(-8, 8, 41)
    np.testing.assert_allclose(std_normal_cdf(xs), [std_normal_cdf(float(x)) for x in xs],
                               rtol=1e-14, atol=0)


def test_quantile_median():
    assert std_normal_quantile(0.5) == 0.0


def test_quantile_against_bisection_oracle():
    assert std_normal_quantile(0.9283) == pytest.approx(oracles.quantile_oracle(0.9283), abs=1e-9)
    assert std_normal_quantile(0.9283) == pytest.approx(1.4633, abs=2e-4)
    assert std_normal_quantile(0.8) == pytest.approx(oracles.quantile_oracle(0.8), abs=1e-9)


@given(st.floats(1e-12, 1 - 1e-12))
def test_quantile_round_trip(p):
    assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, abs=1e-8)


# Above x = 5 the cdf itself rounds towards 1 and the inverse is ill-posed.
@given(st.floats(-8, 5))
def test_quantile_inverts_cdf(x):
    assert std_normal_quantile(std_normal_cdf(x)) == pytest.approx(x, abs=1e-7)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)


def test_quantile_array():
    ps = np.array([1e-10, 0.01, 0.3, 0.5, 0.97, 1 - 1e-10])
    np.testing.assert_allclose(std_normal_cdf(std_normal_quantile(ps)), ps, rtol=1e-12)


# ---------------------------------------------------------------- moments


def test_moments_reject_negative_sigma():
    with pytest.raises(DomainError):
        G(1.0, -0.1)
    with pytest.raises(DomainError):
        G(float("inf"), 1.0)


# ---------------------------------------------------------------- pair max


def test_pair_with_itself():
    r = clark_max_pair(G(7.0, 2.0), G(7.0, 2.0), 1.0)
    assert r.moments == G(7.0, 2.0)


def test_pair_iid_closed_form():
    r = clark_max_pair(G(0, 1), G(0, 1), 0.0)
    assert r.moments.mean == pytest.approx(1 / math.sqrt(math.pi), abs=1e-14)
    assert r.moments.std_dev == pytest.approx(math.sqrt(1 - 1 / math.pi), abs=1e-14)
    assert r.moments.mean == pytest.approx(0.5642, abs=1e-4)
    assert r.moments.std_dev == pytest.approx(0.8257, abs=1e-4)


def test_pair_iid_monte_carlo():
    m1, m2, se1, se2 = oracles.mc_pair(0, 1, 0, 1, 0.0, n=10_000_000, seed=3)
    r = clark_max_pair(G(0, 1), G(0, 1), 0.0).moments
    assert abs(r.mean - m1) < 4 * se1
    assert abs(r.variance + r.mean ** 2 - m2) < 4 * se2


def test_pair_separated_means():
    m1, _, se1, _ = oracles.mc_pair(0, 1, 3, 1, 0.0, n=10_000_000, seed=4)
    r = clark_max_pair(G(0, 1), G(3, 1), 0.0).moments
    assert r.mean == pytest.approx(3.009, abs=1e-3)
    assert abs(r.mean - m1) < 4 * se1


@given(st.floats(-50, 50), st.floats(0.01, 10), st.floats(-50, 50), st.floats(0.01, 10),
       st.floats(-0.99, 0.99))
def test_pair_matches_longhand(mu_a, s_a, mu_b, s_b, rho):
    r = clark_max_pair(G(mu_a, s_a), G(mu_b, s_b), rho).moments
    m1, sd = oracles.clark_pair_longhand(mu_a, s_a, mu_b, s_b, rho)
    assert r.mean == pytest.approx(m1, rel=1e-9, abs=1e-9)
    assert r.std_dev == pytest.approx(sd, rel=1e-6, abs=1e-6 * max(s_a, s_b))


@given(st.floats(-50, 50), st.floats(0, 10), st.floats(-50, 50), st.floats(0, 10),
       st.floats(-1, 1))
def test_pair_jensen(mu_a, s_a, mu_b, s_b, rho):
    r = clark_max_pair(G(mu_a, s_a), G(mu_b, s_b), rho).moments
    assert r.mean >= max(mu_a, mu_b) - 1e-9 * (1 + abs(mu_a) + abs(mu_b))


@given(st.floats(-50, 50), st.floats(0, 10), st.floats(-50, 50), st.floats(0, 10),
       st.floats(-1, 1))
def test_pair_symmetric(mu_a, s_a, mu_b, s_b, rho):
    r1 = clark_max_pair(G(mu_a, s_a), G(mu_b, s_b), rho).moments
    r2 = clark_max_pair(G(mu_b, s_b), G(mu_a, s_a), rho).moments
    assert r1.mean == pytest.approx(r2.mean, rel=1e-12, abs=1e-12)
    assert r1.std_dev == pytest.approx(r2.std_dev, rel=1e-9, abs=1e-9)


def test_pair_degenerate_spread_returns_dominant():
    r = clark_max_pair(G(5.0, 1.0), G(3.0, 1.0), 1.0)
    assert r.moments == G(5.0, 1.0)
    assert r.alpha == -math.inf
    r = clark_max_pair(G(3.0, 1.0), G(5.0, 1.0), 1.0)
    assert r.moments == G(5.0, 1.0)
    assert r.alpha == math.inf


def test_pair_deterministic_inputs():
    r = clark_max_pair(G(2.0, 0.0), G(4.0, 0.0), 0.0)
    assert r.moments == G(4.0, 0.0)


# ------------------------------------------------------ correlation update


def test_propagate_independence():
    pair = clark_max_pair(G(0, 1), G(0.3, 1.2), 0.2)
    assert clark_corr_propagate(1.0, 0.0, 0.0, pair, 1.0, 1.2) == 0.0


def test_propagate_full_correlation_symmetric_pair():
    pair = clark_max_pair(G(0, 1), G(0, 1), 0.0)
    # rho_ka = rho_kb = 1 is only consistent with rho_ab = 1, so the clamp kicks in.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConsistencyWarning)
        v = clark_corr_propagate(1.0, 1.0, 1.0, pair, 1.0, 1.0)
    assert v == pytest.approx(1.0, abs=1e-6)
    pair = clark_max_pair(G(0, 1), G(0, 1), 0.999999)
    assert clark_corr_propagate(1.0, 0.9999995, 0.9999995, pair, 1.0, 1.0) == pytest.approx(1, abs=1e-6)


def test_propagate_against_sampled_correlation():
    pair = clark_max_pair(G(0, 1), G(0, 1), 0.0)
    v = clark_corr_propagate(1.0, 0.5, 0.5, pair, 1.0, 1.0)
    assert v == pytest.approx(oracles.mc_max_with_third(0.5, 0.5), abs=2e-3)
    assert v == pytest.approx(0.6055, abs=1e-4)


def test_propagate_overshoot_warns():
    pair = clark_max_pair(G(0, 1), G(0, 1), -0.9)
    with pytest.warns(ConsistencyWarning):
        v = clark_corr_propagate(1.0, 0.99, 0.99, pair, 1.0, 1.0)
    assert v == 1.0


def test_propagate_zero_sigma_k():
    pair = clark_max_pair(G(0, 1), G(1, 1), 0.3)
    assert clark_corr_propagate(0.0, 0.5, 0.5, pair, 1.0, 1.0) == 0.0


def test_propagate_vectorised():
    pair = clark_max_pair(G(0, 1), G(0.5, 2), 0.3)
    ra, rb = np.array([0.1, 0.4, -0.2]), np.array([0.2, 0.3, 0.5])
    vec = clark_corr_propagate(np.ones(3), ra, rb, pair, 1.0, 2.0)
    scal = [clark_corr_propagate(1.0, a, b, pair, 1.0, 2.0) for a, b in zip(ra, rb)]
    np.testing.assert_allclose(vec, scal, rtol=1e-14)


# --------------------------------------------------------------- max reduce


def test_reduce_single():
    assert max_reduce([G(4.0, 0.5)], [[1.0]]) == G(4.0, 0.5)


def test_reduce_fully_correlated_identical():
    n = 6
    out = max_reduce([G(10.0, 1.0)] * n, np.ones((n, n)))
    assert out.mean == pytest.approx(10.0, abs=1e-12)
    assert out.std_dev == pytest.approx(1.0, abs=1e-12)


def test_reduce_empty():
    with pytest.raises(DomainError):
        max_reduce([], np.zeros((0, 0)))


def test_reduce_five_iid_scaled_mean():
    # Five stages at a 198/5 scale; exact iid max from quadrature.
    mu, sigma = 39.6, 1.98
    out = max_reduce([G(mu, sigma)] * 5, np.eye(5))
    m, _ = oracles.iid_max_moments(5)
    assert out.mean == pytest.approx(mu + sigma * m, rel=2e-3)


@pytest.mark.xfail(strict=True, reason="Clark sigma for a 5-way iid max is 3.16 % low")
def test_reduce_five_iid_scaled_sigma():
    mu, sigma = 39.6, 1.98
    out = max_reduce([G(mu, sigma)] * 5, np.eye(5))
    _, s = oracles.iid_max_moments(5)
    assert out.std_dev == pytest.approx(sigma * s, rel=0.03)


def test_reduce_two_is_exact_pair():
    out = max_reduce([G(1.0, 2.0), G(1.5, 1.0)], [[1, 0.4], [0.4, 1]])
    assert out == clark_max_pair(G(1.0, 2.0), G(1.5, 1.0), 0.4).moments


def test_reduce_matches_longhand_in_fold_order():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        means = rng.uniform(90, 110, n)
        sig = rng.uniform(1, 5, n)
        b = rng.normal(size=(n, 2))
        c = b @ b.T + np.diag(rng.uniform(0.5, 1.5, n))
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        np.fill_diagonal(c, 1.0)
        stages = [G(m, s) for m, s in zip(means, sig)]
        order = fold_order(stages)
        out = max_reduce(stages, c)
        ref = oracles.clark_max_longhand(means[order], sig[order], c[np.ix_(order, order)])
        assert out.mean == pytest.approx(ref[0], rel=1e-10)
        assert out.std_dev == pytest.approx(ref[1], rel=1e-8)


def test_fold_order_rule():
    stages = [G(5, 1), G(3, 1), G(5, 2), G(3, 1)]
    assert fold_order(stages) == [1, 3, 2, 0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 200), st.floats(0, 20)), min_size=1, max_size=8),
       st.floats(0, 0.95))
def test_reduce_jensen_bound(stages, rho):
    n = len(stages)
    c = np.full((n, n), rho)
    np.fill_diagonal(c, 1.0)
    out = max_reduce([G(m, s) for m, s in stages], c)
    assert out.mean >= max(m for m, _ in stages) - 1e-9 * 200
    assert out.std_dev >= 0


def test_reduce_rejects_bad_matrix():
    from pipeyield import ModelError
    with pytest.raises(ModelError):
        max_reduce([G(0, 1), G(0, 1)], [[1, 0.2], [0.3, 1]])
    with pytest.raises(ModelError):
        max_reduce([G(0, 1), G(0, 1)], [[1, 1.2], [1.2, 1]])

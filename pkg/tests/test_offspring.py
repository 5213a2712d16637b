import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpre.offspring import (
    FiniteSupportDistribution,
    GeometricParametrization,
    LinearFractionalDistribution,
    from_dict,
)

S_GRID = np.linspace(0.0, 1.0, 101)

LAWS = [
    FiniteSupportDistribution([0.25, 0.25, 0.5]),
    FiniteSupportDistribution([0.1, 0.0, 0.3, 0.0, 0.6]),
    LinearFractionalDistribution.pure_geometric(2.0),
    LinearFractionalDistribution(1.5, 2.0),
    LinearFractionalDistribution(0.9, 1.62),
    LinearFractionalDistribution.from_geometric(0.5, 0.5),
]


def pgf_from_pmf(dist, s, kmax=4000):
    k = np.arange(kmax + 1)
    p = np.array([dist.pmf(int(i)) for i in k])
    return np.array([np.sum(p * si**k) for si in s])


def test_finite_support_moments():
    d = FiniteSupportDistribution([0.25, 0.25, 0.5])
    assert d.mean == pytest.approx(1.25, abs=1e-15)
    assert d.factorial_moment2 == pytest.approx(1.0)
    assert d.second_moment == pytest.approx(2.25)


def test_lf_derivatives_are_parameters():
    d = LinearFractionalDistribution(2.0, 8.0)
    h = 1e-6
    assert d.pgf_prime(1.0) == pytest.approx(2.0, rel=1e-12)
    second = (d.pgf_prime(1.0) - d.pgf_prime(1.0 - h)) / h
    assert second == pytest.approx(8.0, rel=1e-4)
    assert d.second_moment == pytest.approx(10.0)


def test_lf_rejects_negative_p0():
    # mean 2 with f''(1) = 3 would need p0 < 0
    with pytest.raises(ValueError):
        LinearFractionalDistribution(2.0, 3.0)


def test_geometric_mean_by_partial_sums():
    g = GeometricParametrization(0.5, 0.5)
    k = np.arange(10_001)
    p = np.array([g.pmf(int(i)) for i in k])
    assert p.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.sum(k * p) == pytest.approx(g.mean, rel=1e-12)
    lf = g.to_linear_fractional()
    assert lf.mean == pytest.approx(g.mean, rel=1e-14)
    for i in range(60):
        assert lf.pmf(i) == pytest.approx(g.pmf(i), abs=1e-15)


@pytest.mark.parametrize("dist", LAWS, ids=repr)
def test_pgf_matches_pmf(dist):
    np.testing.assert_allclose(dist.pgf(S_GRID), pgf_from_pmf(dist, S_GRID), atol=1e-12, rtol=0)


@pytest.mark.parametrize("dist", LAWS, ids=repr)
def test_pgf_derivative_at_one(dist):
    h = 1e-6
    fd = (dist.pgf(1.0) - dist.pgf(1.0 - h)) / h
    assert fd == pytest.approx(dist.moments()[0], rel=1e-4)


def test_pgf_domain():
    with pytest.raises(ValueError):
        LAWS[0].pgf(1.5)


@pytest.mark.parametrize(
    "dist",
    [LinearFractionalDistribution(1.0, 0.0), FiniteSupportDistribution([0.0, 1.0])],
    ids=repr,
)
def test_degenerate_one(dist, rng):
    assert dist.is_degenerate_one
    assert np.all(dist.sample(rng, size=1000) == 1)
    assert np.all(dist.sample_total(np.full(50, 7), rng) == 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.mark.parametrize("dist", LAWS[:4], ids=repr)
def test_empirical_pmf_within_4_sigma(dist, rng):
    n = 1_000_000
    draws = dist.sample(rng, size=n)
    for k in range(8):
        p = dist.pmf(k)
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(np.mean(draws == k) - p) <= 4 * sigma + 1e-12


def test_geometric_empirical_p0(rng):
    d = LinearFractionalDistribution.from_geometric(0.5, 0.5)
    draws = d.sample(rng, size=1_000_000)
    assert abs(np.mean(draws == 0) - 0.5) <= 0.002


@pytest.mark.parametrize("dist", LAWS, ids=repr)
@pytest.mark.parametrize("z", [1, 10, 1000])
def test_sample_total_mean(dist, z, rng):
    reps = 100_000
    totals = dist.sample_total(np.full(reps, z), rng)
    se = math.sqrt(z * dist.variance / reps)
    assert abs(totals.mean() - z * dist.mean) <= 4 * se


def test_sample_total_single_matches_sample_law(rng):
    d = LinearFractionalDistribution(1.5, 2.0)
    totals = d.sample_total(np.ones(200_000, dtype=np.int64), rng)
    for k in range(5):
        p = d.pmf(k)
        assert abs(np.mean(totals == k) - p) <= 4 * math.sqrt(p * (1 - p) / 200_000)


def test_geometric_total_z100(rng):
    d = LinearFractionalDistribution.from_geometric(0.5, 0.5)
    totals = d.sample_total(np.full(100_000, 100), rng)
    se = math.sqrt(100 * d.variance / 100_000)
    assert abs(totals.mean() - 100 * d.mean) <= 4 * se


def test_large_z_finite_support_is_exact_in_mean(rng):
    d = FiniteSupportDistribution([0.25, 0.25, 0.5])
    z = 3_000_000
    totals = d.sample_total(np.full(200, z), rng)
    se = math.sqrt(z * d.variance / 200)
    assert abs(totals.mean() - z * d.mean) <= 4 * se


def test_extinction_examples():
    assert FiniteSupportDistribution([0.25, 0.25, 0.5]).extinction_fixed_point() == pytest.approx(0.5, abs=1e-10)
    assert FiniteSupportDistribution([0.5, 0.5]).extinction_fixed_point() == 1.0
    assert FiniteSupportDistribution([0.5, 0.0, 0.5]).extinction_fixed_point() == 1.0
    assert FiniteSupportDistribution([0.0, 0.0, 1.0]).extinction_fixed_point() == 0.0
    assert LinearFractionalDistribution(1.0, 0.0).extinction_fixed_point() == 1.0


@st.composite
def finite_laws(draw):
    raw = draw(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8))
    if sum(raw) <= 1e-6:
        raw[-1] = 1.0
    p = np.array(raw) / sum(raw)
    p[-1] = 1.0 - p[:-1].sum()
    if p[-1] < 0:
        p[-1] = 0.0
        p /= p.sum()
    return FiniteSupportDistribution(p.tolist())


@settings(max_examples=200, deadline=None)
@given(finite_laws())
def test_fixed_point_property(dist):
    pe = dist.extinction_fixed_point()
    assert 0.0 <= pe <= 1.0
    assert abs(dist.pgf(pe) - pe) <= 1e-10
    grid = np.linspace(0.0, pe, 200, endpoint=False)
    assert np.all(dist.pgf(grid) - grid > -1e-12)
    if dist.mean <= 1.0 and not dist.is_degenerate_one:
        assert pe == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.0, 4.0))
def test_lf_normalization_and_thinning(m, extra):
    b = 2 * m * max(m - 1.0, 0.0) + extra
    d = LinearFractionalDistribution(m, b)
    assert 0.0 <= d.p0 <= 1.0
    if d.ratio < 1.0:
        # geometric tail from k = 1
        assert d.p0 + d.pmf(1) / (1.0 - d.ratio) == pytest.approx(1.0, abs=1e-12)
    s = np.linspace(0.0, 1.0, 11)
    p = 0.37
    thinned = LinearFractionalDistribution(p * m, p * p * b)
    np.testing.assert_allclose(d.pgf(1 - p + p * s), thinned.pgf(s), atol=1e-12)


def test_from_dict_round_trip():
    for dist in LAWS:
        back = from_dict(dist.to_dict())
        np.testing.assert_allclose(back.pgf(S_GRID), dist.pgf(S_GRID), atol=1e-15)
    g = from_dict({"family": "geometric", "a": 0.2, "q": 0.5})
    assert isinstance(g, LinearFractionalDistribution)
    with pytest.raises(ValueError):
        from_dict({"family": "poisson", "mean": 1.0})


def test_finite_support_validation():
    with pytest.raises(ValueError):
        FiniteSupportDistribution([0.5, 0.6])
    with pytest.raises(ValueError):
        FiniteSupportDistribution([-0.1, 1.1])

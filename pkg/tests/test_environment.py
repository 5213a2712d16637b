import math
from fractions import Fraction

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from bpre.environment import EnvironmentLaw
from bpre.offspring import FiniteSupportDistribution, LinearFractionalDistribution

from conftest import gw_env, lf_env, small_support_env, two_mean_env


def test_cumulant_examples(two_mean):
    assert two_mean.cumulant(0.0) == 0.0
    assert two_mean.cumulant(-0.5) == pytest.approx(math.log(2 * math.sqrt(2) / 3), abs=1e-14)
    det = EnvironmentLaw.deterministic(FiniteSupportDistribution([0.0, 0.0, 1.0]))
    assert det.cumulant(3.0) == pytest.approx(3 * math.log(2), abs=1e-14)


def test_cumulant_minimum_by_grid(two_mean):
    # phi is convex with its minimum on lambda <= 0 at -1/2
    grid = np.linspace(-1.0, 0.0, 100_001)
    vals = np.array([two_mean.cumulant(x) for x in grid])
    assert grid[np.argmin(vals)] == pytest.approx(-0.5, abs=1e-5)
    assert vals.min() == pytest.approx(-math.log(3 / (2 * math.sqrt(2))), abs=1e-9)


@pytest.mark.parametrize("make", [two_mean_env, lf_env, small_support_env])
def test_cumulant_convexity(make):
    env = make()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        l1, l2, l3 = np.sort(rng.uniform(-8, 4, size=3))
        if l3 - l1 < 1e-9:
            continue
        t = (l2 - l1) / (l3 - l1)
        chord = (1 - t) * env.cumulant(l1) + t * env.cumulant(l3)
        assert env.cumulant(l2) <= chord + 1e-12 * max(1.0, abs(chord))


@pytest.mark.parametrize("make", [two_mean_env, lf_env, small_support_env, gw_env])
def test_cumulant_slope_at_zero(make):
    env = make()
    h = 1e-6
    fd = (env.cumulant(h) - env.cumulant(-h)) / (2 * h)
    assert fd == pytest.approx(env.mean_x(), abs=1e-6)
    assert env.cumulant_derivatives(0.0)[1] == pytest.approx(env.mean_x(), abs=1e-14)


def test_expectations_lf(lf):
    ex = lf.expectations()
    assert ex.mean_exp_neg_x == pytest.approx(0.25 + 1 / 1.8, abs=1e-15)
    target = 0.5 * (math.log(2) / 2 + math.log(0.9) / 0.9)
    assert ex.mean_x_exp_neg_x == pytest.approx(target, abs=1e-15)
    assert ex.mean_x_exp_neg_x == pytest.approx(0.11475, abs=5e-6)


def test_expectations_trivial():
    det = EnvironmentLaw.deterministic(FiniteSupportDistribution([0.0, 1.0]))
    assert det.mean_x() == 0.0
    one = EnvironmentLaw.deterministic(LinearFractionalDistribution(1.0, 0.0))
    assert one.expectations().mean_q1 == 1.0


def test_expectations_by_sampling(small_support):
    rng = np.random.default_rng(3)
    n = 1_000_000
    comp = small_support.sample_components(rng, n)
    x = small_support.log_means[comp]
    q1 = np.array([d.p1 for d in small_support.distributions])[comp]
    ex = small_support.expectations()
    for sample, exact in [
        (x, ex.mean_x),
        (np.exp(-x), ex.mean_exp_neg_x),
        (x * np.exp(-x), ex.mean_x_exp_neg_x),
        (q1, ex.mean_q1),
    ]:
        assert abs(sample.mean() - exact) <= 4 * sample.std() / math.sqrt(n) + 1e-12


def test_tilt_examples(two_mean):
    assert np.array_equal(two_mean.tilt(0.0).weights, two_mean.weights)
    np.testing.assert_allclose(two_mean.tilt(-1.0).weights, [1 / 3, 2 / 3], atol=1e-15)
    assert two_mean.tilt(-1.0).distributions == two_mean.distributions


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 2), st.floats(-5, 2))
def test_tilt_composition(l1, l2):
    env = small_support_env()
    np.testing.assert_allclose(env.tilt(l1).tilt(l2).weights, env.tilt(l1 + l2).weights, atol=1e-12)


def test_tilted_mean_of_x(lf):
    lam = -0.7
    tilted = lf.tilt(lam)
    rng = np.random.default_rng(11)
    n = 1_000_000
    x = lf.log_means[tilted.sample_components(rng, n)]
    target = lf.cumulant_derivatives(lam)[1]
    assert abs(x.mean() - target) <= 4 * x.std() / math.sqrt(n)


def test_diagnostics_two_mean(two_mean):
    d = two_mean.diagnostics()
    assert d.mean_X == pytest.approx(math.log(2) / 3, abs=1e-15)
    assert d.is_supercritical
    assert d.prob_X_negative == pytest.approx(1 / 3)
    assert d.lattice_flag
    assert d.assumption1_ok and d.assumption2_ok
    assert d.regime() == "extinction-possible+negative-steps"


def test_diagnostics_gw(gw):
    d = gw.diagnostics()
    assert d.extinction_possible and d.prob_extinction_one_step == 0.25
    assert d.lattice_flag
    assert d.regime() == "extinction-possible"
    law = gw.distributions[0]
    assert d.assumption3_bound == pytest.approx(law.factorial_moment2 / (law.mean + law.mean**2))


def test_diagnostics_no_extinction(no_extinction):
    d = no_extinction.diagnostics()
    assert not d.extinction_possible
    assert d.q1_mean == pytest.approx(0.5)
    assert d.regime() == "no-extinction"


def test_lattice_detection():
    lf = lf_env()
    # log 2 / log 0.9 is irrational
    assert not lf.lattice_flag()
    env = EnvironmentLaw(
        [
            (0.5, LinearFractionalDistribution.pure_geometric(4.0)),
            (0.5, LinearFractionalDistribution.pure_geometric(8.0)),
        ]
    )
    assert env.lattice_flag()
    assert Fraction(math.log(8) / math.log(4)).limit_denominator(10) == Fraction(3, 2)


def test_validation():
    d = FiniteSupportDistribution([0.25, 0.25, 0.5])
    with pytest.raises(ValueError):
        EnvironmentLaw([(0.5, d), (0.6, d)])
    with pytest.raises(ValueError):
        EnvironmentLaw([(1.0, FiniteSupportDistribution([1.0]))])


@pytest.mark.parametrize("make", [two_mean_env, lf_env, small_support_env, gw_env])
def test_yaml_round_trip(make):
    env = make()
    back = EnvironmentLaw.from_list(yaml.safe_load(yaml.safe_dump(env.to_list())))
    assert back == env

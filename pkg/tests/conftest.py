"""Shared environments and independent oracles."""

import itertools
import math

import numpy as np
import pytest

from bpre.environment import EnvironmentLaw
from bpre.offspring import FiniteSupportDistribution, LinearFractionalDistribution

GW_PROBS = (0.25, 0.25, 0.5)
LOG43 = math.log(4.0 / 3.0)


def gw_env():
    return EnvironmentLaw.deterministic(FiniteSupportDistribution(GW_PROBS))


def lf_env():
    """Two geometric laws with means 2 and 0.9, equally likely."""
    return EnvironmentLaw(
        [
            (0.5, LinearFractionalDistribution.pure_geometric(2.0)),
            (0.5, LinearFractionalDistribution.pure_geometric(0.9)),
        ]
    )


def two_mean_env():
    """Means 2 and 1/2 with weights 2/3 and 1/3, no extinction in the first."""
    return EnvironmentLaw(
        [
            (2.0 / 3.0, FiniteSupportDistribution([0.0, 0.0, 1.0])),
            (1.0 / 3.0, FiniteSupportDistribution([0.5, 0.5])),
        ]
    )


def small_support_env():
    """Two components on {0, 1, 2}, one of them subcritical."""
    return EnvironmentLaw(
        [
            (0.6, FiniteSupportDistribution([0.1, 0.3, 0.6])),
            (0.4, FiniteSupportDistribution([0.5, 0.3, 0.2])),
        ]
    )


def no_extinction_env():
    """Support {1, 2} in both components; E[Q(1)] = 1/2."""
    return EnvironmentLaw(
        [
            (0.5, FiniteSupportDistribution([0.0, 0.3, 0.7])),
            (0.5, FiniteSupportDistribution([0.0, 0.7, 0.3])),
        ]
    )


def walk_env():
    """LF laws with rho = Lambda(0): lower deviations come from the walk alone."""
    return EnvironmentLaw(
        [
            (0.5, LinearFractionalDistribution(3.0, 12.0)),
            (0.5, LinearFractionalDistribution(0.5, 0.5)),
        ]
    )


@pytest.fixture
def gw():
    return gw_env()


@pytest.fixture
def lf():
    return lf_env()


@pytest.fixture
def two_mean():
    return two_mean_env()


@pytest.fixture
def small_support():
    return small_support_env()


@pytest.fixture
def no_extinction():
    return no_extinction_env()


def compose_pmf(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Coefficients of ``outer(inner(s))`` for polynomial pgfs."""
    out = np.zeros(1)
    power = np.ones(1)
    for c in outer:
        if len(out) < len(power):
            out = np.pad(out, (0, len(power) - len(out)))
        out[: len(power)] += c * power
        power = np.convolve(power, inner)
    return out


def exact_band_prob(env: EnvironmentLaw, z0: int, n: int, lower: int, upper: int) -> float:
    """``P_{z0}(lower <= Z_n <= upper)`` by enumerating every environment sequence.

    Only for finite-support components. Given the sequence, the pgf of
    ``Z_n`` started from one individual is ``f_1(f_2(...f_n(s)))``.
    """
    pmfs = [np.array([d.pmf(k) for k in range(int(d._k[-1]) + 1)]) for d in env.distributions]
    total = 0.0
    for seq in itertools.product(range(len(env)), repeat=n):
        weight = float(np.prod([env.weights[i] for i in seq]))
        g = np.array([0.0, 1.0])
        for i in reversed(seq):
            g = compose_pmf(pmfs[i], g)
        dist = np.array([1.0])
        for _ in range(z0):
            dist = np.convolve(dist, g)
        total += weight * float(dist[lower : upper + 1].sum())
    return total


def lf_conditional_band_prob(ms, bs, upper: int) -> np.ndarray:
    """``P(1 <= Z_n <= upper | environment)`` for LF laws, one row per sequence.

    ``ms`` and ``bs`` have shape ``(reps, n)``. Uses
    ``1/(1 - f_{0,n}(s)) = e^{-S_n}/(1 - s) + sum_k b_k/(2 m_k^2) e^{-S_{k-1}}``,
    so that given the environment ``Z_n`` is zero or geometric on the
    positive integers.
    """
    s = np.cumsum(np.log(ms), axis=1)
    s_prev = np.concatenate([np.zeros((ms.shape[0], 1)), s[:, :-1]], axis=1)
    a = np.sum(bs / (2.0 * ms**2) * np.exp(-s_prev), axis=1)
    d = np.exp(-s[:, -1]) + a
    r = a / d
    return (1.0 - r**upper) / d


# ---- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def report(label: str, ok: bool, detail: str) -> bool:
    line = f"{label:<40} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

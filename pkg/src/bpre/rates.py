"""Lower-deviation rate functions of a supercritical BPRE.

``RateFunction`` is the Legendre transform of the environment's cumulant
restricted to ``lam <= 0``. ``chi`` combines it with the survival rate
``rho`` into the rate of ``{1 <= Z_n <= exp(theta n)}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .environment import EnvironmentLaw
from .offspring import LinearFractionalDistribution

__all__ = [
    "RateFunction",
    "RateFunctionTable",
    "ChiResult",
    "SurvivalRate",
    "lambda_at",
    "chi",
    "theta_star",
    "survival_rate",
    "most_probable_path",
    "rate_table",
    "default_theta_grid",
    "golden_section_min",
    "growth_tilt",
]

INF = math.inf
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LAMBDA_LIMIT = 1e4


def golden_section_min(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10):
    """Minimise a convex (possibly extended-valued) function on ``[a, b]``.

    Ties go left, and an infinite plateau is assumed to sit on the left of
    the finite region, which is the case for every objective in this module.
    Returns ``(argmin, min)``.
    """
    fa, fb = f(a), f(b)
    lo, hi = a, b
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd or (fc == fd and fc < INF):
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    mid = 0.5 * (lo + hi)
    candidates = [(fa, a), (f(mid), mid), (fb, b)]
    best = min(candidates, key=lambda vt: (vt[0], vt[1]))
    return best[1], best[0]


class RateFunction:
    """``Lambda(theta) = sup_{lam <= 0} {lam theta - phi(lam)}`` for an environment.

    Calling the object returns the value; :meth:`solve` also returns the
    maximising ``lam``.
    """

    def __init__(self, env: EnvironmentLaw):
        self.env = env
        self.mean_x = env.mean_x()
        self._min_x = env.min_x

    def __call__(self, theta: float) -> float:
        return self.solve(theta)[0]

    def solve(self, theta: float) -> tuple[float, float]:
        if theta >= self.mean_x:
            return 0.0, 0.0
        if theta < self._min_x:
            # S_n >= n min(X) surely
            return INF, -INF
        if theta == self._min_x:
            return -math.log(self.env.prob_x_equals_min()), -INF
        phi = self.env.cumulant_derivatives
        # phi' is increasing with phi'(0) = E[X] > theta; grow the bracket down
        hi = 0.0
        lo = -1.0
        while phi(lo)[1] > theta:
            hi = lo
            lo *= 2.0
            if lo < -_LAMBDA_LIMIT:
                lam = -_LAMBDA_LIMIT
                return lam * theta - self.env.cumulant(lam), lam
        lam = 0.5 * (lo + hi)
        for _ in range(200):
            _, d1, d2 = phi(lam)
            g = d1 - theta
            if g > 0.0:
                hi = lam
            else:
                lo = lam
            step = g / d2 if d2 > 0.0 else 0.0
            new = lam - step
            if not (lo < new < hi):
                new = 0.5 * (lo + hi)
            if abs(new - lam) <= 1e-14 * max(1.0, abs(lam)) or hi - lo <= 1e-15:
                lam = new
                break
            lam = new
        return lam * theta - self.env.cumulant(lam), lam

    def derivative(self, theta: float) -> float:
        """``Lambda'(theta) = lam_theta`` inside the smooth range."""
        return self.solve(theta)[1]


def lambda_at(env: EnvironmentLaw, theta: float) -> tuple[float, float]:
    """Return ``(Lambda(theta), lam_theta)``."""
    return RateFunction(env).solve(theta)


@dataclass(frozen=True)
class ChiResult:
    theta: float
    rho: float
    value: float
    t_theta: float
    theta_star: float
    regime: str

    @property
    def growth_slope(self) -> float:
        """Slope ``theta / (1 - t_theta)`` of the growth phase."""
        if self.t_theta >= 1.0:
            return INF
        return self.theta / (1.0 - self.t_theta)


def _chi_objective(theta: float, rho: float, rate: Callable[[float], float], mean_x=None):
    def g(t: float) -> float:
        if t >= 1.0:
            return rho
        u = theta / (1.0 - t)
        if mean_x is not None and u >= mean_x * (1.0 - 1e-12):
            # right limit at the jump of Lambda to zero
            u = max(u, mean_x)
        lam_val = rate(u)
        if lam_val == INF:
            return INF
        return t * rho + (1.0 - t) * lam_val

    return g


def chi(
    theta: float,
    rho: float,
    rate: Callable[[float], float],
    theta_star_value: Optional[float] = None,
    tol: float = 1e-10,
) -> ChiResult:
    """``inf_{t in [0,1]} {t rho + (1-t) Lambda(theta/(1-t))}`` with ``0 * inf = 0``.

    ``rate`` is any convex nonincreasing callable; if it carries a
    ``mean_x`` attribute the search is confined to ``t <= 1 - theta/mean_x``,
    beyond which the objective is ``t rho`` and only increases.
    """
    if not theta > 0.0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    if rho < 0.0:
        raise ValueError(f"rho must be nonnegative, got {rho!r}")
    mean_x = getattr(rate, "mean_x", None)
    t_max = 1.0 if mean_x is None else max(0.0, 1.0 - theta / mean_x)
    g = _chi_objective(theta, rho, rate, mean_x)
    t_opt, value = golden_section_min(g, 0.0, t_max, tol)
    if value == INF:
        t_opt, value = 1.0, rho
    if theta_star_value is None and mean_x is not None:
        theta_star_value = theta_star(rho, rate, mean_x)
    if theta_star_value is None:
        regime = "survival-dominated" if t_opt > 0.0 else "walk-dominated"
    else:
        regime = "survival-dominated" if theta < theta_star_value else "walk-dominated"
    return ChiResult(
        theta=theta,
        rho=rho,
        value=value,
        t_theta=t_opt,
        theta_star=math.nan if theta_star_value is None else theta_star_value,
        regime=regime,
    )


def theta_star(rho: float, rate: Callable[[float], float], mean_x: float, grid: int = 512) -> float:
    """Tangency point of the line from ``(0, rho)`` to the graph of ``Lambda``.

    Minimises the chord slope ``(Lambda(theta) - rho) / theta`` over
    ``(0, mean_x]``. Returns 0 when ``rho >= Lambda(0)``: the survival phase
    then has zero length for every ``theta``.
    """
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    if rho >= rate(0.0):
        return 0.0

    def slope(th: float) -> float:
        v = rate(th)
        return INF if v == INF else (v - rho) / th

    thetas = np.unique(
        np.concatenate(
            [
                np.geomspace(1e-6 * mean_x, mean_x, grid // 2),
                np.linspace(mean_x / grid, mean_x, grid // 2),
            ]
        )
    )
    vals = [slope(float(t)) for t in thetas]
    i = int(np.argmin(vals))
    lo = float(thetas[max(i - 1, 0)])
    hi = float(thetas[min(i + 1, len(thetas) - 1)])
    if i == 0:
        lo = 0.5 * lo
    t_opt, _ = golden_section_min(slope, lo, hi, tol=1e-13)
    return t_opt


@dataclass(frozen=True)
class SurvivalRate:
    value: float
    regime: str
    start_state: int = 1
    stderr: float = 0.0


def _lf_rate(env: EnvironmentLaw, rate: RateFunction) -> float:
    ex = env.expectations()
    if ex.mean_x_exp_neg_x >= 0.0:
        return -math.log(ex.mean_exp_neg_x)
    return rate(0.0)


def survival_rate(
    env: EnvironmentLaw,
    z: int = 1,
    regime: Optional[str] = None,
    mc_budget: Optional[dict] = None,
    seed: int = 0,
) -> SurvivalRate:
    """Rate ``rho`` at which ``P_z(1 <= Z_n <= k)`` decays, for bounded ``k``.

    Explicit in three cases: no extinction (``-z log E[Q(1)]``), one
    deterministic law (``-log f'(p_e)``) and linear-fractional laws. Any other
    environment is estimated by the particle scheme when ``mc_budget`` (keyword
    arguments of :func:`bpre.simulator.estimate_rho`) is given.
    """
    if not env.is_supercritical():
        raise ValueError("survival rate needs a supercritical environment")
    active = [d for w, d in env.components if w > 0]
    if regime is None:
        if all(d.p0 == 0.0 for d in active):
            regime = "no-extinction"
        elif len(set(active)) == 1:
            regime = "gw-explicit"
        elif all(isinstance(d, LinearFractionalDistribution) for d in active):
            regime = "lf-explicit"
        else:
            regime = "monte-carlo"

    if regime == "no-extinction":
        q1 = env.expectations().mean_q1
        value = INF if q1 == 0.0 else -z * math.log(q1)
        return SurvivalRate(value, regime, z)
    if regime == "gw-explicit":
        dist = active[0]
        pe = dist.extinction_fixed_point()
        return SurvivalRate(-math.log(dist.pgf_prime(pe)), regime, z)
    if regime == "lf-explicit":
        return SurvivalRate(_lf_rate(env, RateFunction(env)), regime, z)
    if regime == "monte-carlo":
        if mc_budget is None:
            return SurvivalRate(math.nan, "unavailable-analytically", z)
        from .simulator import estimate_rho

        est = estimate_rho(env, z=z, seed=seed, **mc_budget)
        return SurvivalRate(est.rate_hat, regime, z, est.stderr)
    raise ValueError(f"unknown survival-rate regime {regime!r}")


def most_probable_path(theta: float, chi_result: ChiResult, grid) -> list[tuple[float, float]]:
    """Limit of ``log(Z_[tn]) / n`` given ``1 <= Z_n <= exp(theta n)``.

    Zero during the survival phase ``t < t_theta``, then linear up to
    ``theta`` at ``t = 1``.
    """
    t0 = chi_result.t_theta
    out = []
    for t in grid:
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"path time outside [0, 1]: {t!r}")
        if t < t0:
            out.append((t, 0.0))
        elif t0 >= 1.0:
            out.append((t, theta))
        else:
            out.append((t, theta / (1.0 - t0) * (t - t0)))
    return out


def default_theta_grid(mean_x: float, size: int = 256) -> np.ndarray:
    """Log-spaced grid on ``(1e-4 mean_x, mean_x]``."""
    return np.geomspace(1e-4 * mean_x, mean_x, size)


@dataclass
class RateFunctionTable:
    env: EnvironmentLaw
    rho: float
    theta_star: float
    thetas: np.ndarray
    lambda_values: np.ndarray
    argmax_lambdas: np.ndarray
    chi_values: np.ndarray
    t_thetas: np.ndarray
    regimes: list


def rate_table(env: EnvironmentLaw, rho: float, thetas=None) -> RateFunctionTable:
    rate = RateFunction(env)
    if thetas is None:
        thetas = default_theta_grid(rate.mean_x)
    thetas = np.asarray(thetas, dtype=float)
    ts = theta_star(rho, rate, rate.mean_x)
    lam_vals, lams, chis, tts, regimes = [], [], [], [], []
    for th in thetas:
        v, lam = rate.solve(float(th))
        res = chi(float(th), rho, rate, theta_star_value=ts)
        lam_vals.append(v)
        lams.append(lam)
        chis.append(res.value)
        tts.append(res.t_theta)
        regimes.append(res.regime)
    return RateFunctionTable(
        env=env,
        rho=rho,
        theta_star=ts,
        thetas=thetas,
        lambda_values=np.array(lam_vals),
        argmax_lambdas=np.array(lams),
        chi_values=np.array(chis),
        t_thetas=np.array(tts),
        regimes=regimes,
    )


def growth_tilt(env: EnvironmentLaw, theta: float, rho: float) -> float:
    """Tilt matching the growth phase of the most probable path.

    Returns ``lam`` at the slope ``theta / (1 - t_theta)``; below the
    transition this is ``lam_{theta*}`` instead of ``lam_theta``.
    """
    rate = RateFunction(env)
    res = chi(theta, rho, rate)
    slope = res.growth_slope
    if slope >= rate.mean_x * (1.0 - 1e-12):
        return 0.0
    return rate.solve(slope)[1]

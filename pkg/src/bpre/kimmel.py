"""Cell division with parasite infection (Kimmel's branching model).

Cells split in two every generation. Inside a cell the parasites reproduce
with a zero-modified geometric law; at division each parasite joins the
first daughter with probability ``P``, drawn afresh for every cell from a law
symmetric about 1/2. Following one random cell line gives a BPRE whose
environment is ``P``, and ``E[N_n[a, b]] = 2^n P(a <= Z_n <= b)`` where
``N_n[a, b]`` counts cells of generation ``n`` carrying between ``a`` and
``b`` parasites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .environment import EnvironmentLaw
from .offspring import GeometricParametrization, LinearFractionalDistribution
from .rates import RateFunction, chi, survival_rate, theta_star

__all__ = [
    "KimmelModel",
    "induced_environment",
    "expected_infected",
    "theta_window",
    "simulate_tree",
    "MAX_TREE_GENERATIONS",
]

LOG2 = math.log(2.0)
MAX_TREE_GENERATIONS = 14
_SYM_TOL = 1e-12


def _merge_splitting(values: Sequence[tuple[float, float]]) -> dict[float, float]:
    merged: dict[float, float] = {}
    for w, p in values:
        key = next((k for k in merged if abs(k - p) <= _SYM_TOL), p)
        merged[key] = merged.get(key, 0.0) + w
    return merged


@dataclass(frozen=True)
class KimmelModel:
    parasite: GeometricParametrization
    splitting: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "splitting", tuple((float(w), float(p)) for w, p in self.splitting))
        if not self.splitting:
            raise ValueError("splitting law is empty")
        for w, p in self.splitting:
            if not 0.0 < p < 1.0:
                raise ValueError(f"splitting value {p!r} outside (0, 1)")
            if w < 0.0:
                raise ValueError("splitting weights must be nonnegative")
        total = math.fsum(w for w, _ in self.splitting)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"splitting weights sum to {total!r}, not 1")
        merged = _merge_splitting(self.splitting)
        for p, w in merged.items():
            partner = next((v for k, v in merged.items() if abs(k - (1.0 - p)) <= _SYM_TOL), None)
            if partner is None or abs(partner - w) > 1e-12:
                raise ValueError(f"splitting law is not symmetric about 1/2 at p={p!r}")

    @property
    def parasite_mean(self) -> float:
        return self.parasite.mean

    def mean_x(self) -> float:
        """``E[X] = log(sum k p_k) + E[log P]``."""
        if self.parasite_mean <= 0.0:
            return -math.inf
        return math.log(self.parasite_mean) + math.fsum(w * math.log(p) for w, p in self.splitting)

    def is_supercritical(self) -> bool:
        return self.mean_x() > 0.0

    def to_dict(self) -> dict:
        return {
            "parasite": {"a": self.parasite.a, "q": self.parasite.q},
            "splitting": [{"weight": w, "p": p} for w, p in self.splitting],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "KimmelModel":
        par = spec["parasite"]
        split = tuple((float(s["weight"]), float(s["p"])) for s in spec["splitting"])
        return cls(GeometricParametrization(float(par["a"]), float(par["q"])), split)


def induced_environment(model: KimmelModel) -> EnvironmentLaw:
    """Offspring law of one parasite line, mixed over the splitting values.

    Thinning a linear-fractional law keeps it linear fractional:
    ``f(1 - p + p s)`` has mean ``p m`` and ``f''(1) = p^2 b``. Components are
    sorted by ``p``; a value ``1/2`` shows up once with its full weight.
    """
    if model.parasite.a >= 1.0:
        raise ValueError("a = 1: parasites never reproduce, no infected line survives")
    base = model.parasite.to_linear_fractional()
    merged = _merge_splitting(model.splitting)
    comps = []
    for p in sorted(merged):
        w = merged[p]
        if w == 0.0:
            continue
        comps.append((w, LinearFractionalDistribution(p * base.m, p * p * base.b)))
    return EnvironmentLaw(comps)


@dataclass(frozen=True)
class KimmelRates:
    env: EnvironmentLaw
    rate: RateFunction
    rho: float
    theta_star: float

    @property
    def mean_x(self) -> float:
        return self.rate.mean_x

    def chi(self, theta: float) -> float:
        return chi(theta, self.rho, self.rate, theta_star_value=self.theta_star).value


def model_rates(model: KimmelModel) -> KimmelRates:
    env = induced_environment(model)
    if not env.is_supercritical():
        raise ValueError("induced environment is not supercritical")
    rate = RateFunction(env)
    rho = survival_rate(env).value
    return KimmelRates(env, rate, rho, theta_star(rho, rate, rate.mean_x))


def expected_infected(model: KimmelModel, theta: float, n: int, rates: Optional[KimmelRates] = None) -> float:
    """Leading order of ``log E[N_n[1, exp(n theta)]]``: ``n (log 2 - chi)``."""
    rates = rates or model_rates(model)
    if not 0.0 < theta <= rates.mean_x:
        raise ValueError(f"theta must lie in (0, E[X]] = (0, {rates.mean_x}]")
    return n * (LOG2 - rates.chi(theta))


def theta_window(model: KimmelModel, rates: Optional[KimmelRates] = None, tol: float = 1e-12):
    """Interval of ``theta`` in ``(0, E[X]]`` where ``chi(theta) < log 2``.

    There the number of cells with between 1 and ``exp(n theta)`` parasites
    grows exponentially in expectation. ``chi`` is nonincreasing and vanishes
    at ``E[X]``, so the set is ``(theta_low, E[X]]``; ``theta_low = 0`` when
    already ``chi(0+) < log 2``. Returns ``None`` if the set is empty.
    """
    rates = rates or model_rates(model)
    hi = rates.mean_x
    if rates.chi(hi) >= LOG2:
        return None
    lo = min(1e-12 * hi, hi)
    if rates.chi(lo) < LOG2:
        return 0.0, hi
    a, b = lo, hi
    while b - a > tol * max(1.0, hi):
        mid = 0.5 * (a + b)
        if rates.chi(mid) < LOG2:
            b = mid
        else:
            a = mid
    return b, hi


def simulate_tree(model: KimmelModel, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Parasite counts of all ``2^n`` cells of generation ``n``, per replicate.

    The root cell holds one parasite. Returns an array of shape
    ``(reps, 2**n)``.
    """
    if not 0 <= n <= MAX_TREE_GENERATIONS:
        raise ValueError(f"tree simulation supports 0 <= n <= {MAX_TREE_GENERATIONS}")
    law = model.parasite.to_linear_fractional()
    ps = np.array([p for _, p in model.splitting])
    ws = np.array([w for w, _ in model.splitting])
    cells = np.ones((reps, 1), dtype=np.int64)
    for _ in range(n):
        grown = law.sample_total(cells, rng)
        split = ps[rng.choice(len(ps), size=cells.shape, p=ws)]
        first = rng.binomial(grown, split)
        nxt = np.empty((reps, 2 * cells.shape[1]), dtype=np.int64)
        nxt[:, 0::2] = first
        nxt[:, 1::2] = grown - first
        cells = nxt
    return cells

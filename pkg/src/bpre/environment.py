"""I.i.d. environment laws given as finite mixtures of offspring laws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .offspring import OffspringDistribution, from_dict

__all__ = ["EnvironmentLaw", "EnvironmentDiagnostics", "Expectations"]

_WEIGHT_TOL = 1e-12
_LATTICE_TOL = 1e-9
_LATTICE_MAX_DENOM = 1000


@dataclass(frozen=True)
class Expectations:
    mean_x: float
    mean_exp_neg_x: float
    mean_x_exp_neg_x: float
    mean_q1: float


@dataclass(frozen=True)
class EnvironmentDiagnostics:
    mean_X: float
    is_supercritical: bool
    prob_X_negative: float
    extinction_possible: bool
    prob_extinction_one_step: float
    assumption1_ok: bool
    assumption2_ok: bool
    assumption3_bound: float
    lattice_flag: bool
    q1_mean: float

    def regime(self) -> str:
        """Which lower-deviation regime applies to this environment."""
        if not self.is_supercritical:
            return "not-supercritical"
        if not self.extinction_possible:
            return "no-extinction"
        if self.prob_X_negative > 0.0:
            return "extinction-possible+negative-steps"
        return "extinction-possible"


class EnvironmentLaw:
    """Law of the random offspring distribution ``Q``.

    ``Q`` equals ``components[i]`` with probability ``weights[i]``. All
    environment functionals are then exact finite sums over the components.
    """

    def __init__(self, components: Sequence[tuple[float, OffspringDistribution]]):
        if not components:
            raise ValueError("environment needs at least one component")
        weights = np.array([float(w) for w, _ in components])
        if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(math.fsum(weights) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {math.fsum(weights)!r}, not 1")
        dists = tuple(d for _, d in components)
        for d in dists:
            if not d.mean > 0.0:
                raise ValueError("every component needs a positive mean")
        self._weights = weights
        self._dists = dists
        self._x = np.array([math.log(d.mean) for d in dists])
        self._log_w = np.log(np.where(weights > 0.0, weights, 1.0))
        self._support = weights > 0.0
        # plain floats for the hot scalar paths
        self._xs = [float(v) for v in self._x[self._support]]
        self._lws = [float(v) for v in self._log_w[self._support]]
        # divide by the stored total so that phi(0) = 0 exactly
        self._log_total = 0.0
        self._log_total = self._log_sum(0.0)

    @classmethod
    def deterministic(cls, dist: OffspringDistribution) -> "EnvironmentLaw":
        """Galton-Watson process: the environment always picks ``dist``."""
        return cls([(1.0, dist)])

    @property
    def components(self) -> list[tuple[float, OffspringDistribution]]:
        return list(zip(self._weights.tolist(), self._dists))

    @property
    def weights(self) -> np.ndarray:
        return self._weights.copy()

    @property
    def distributions(self) -> tuple[OffspringDistribution, ...]:
        return self._dists

    @property
    def log_means(self) -> np.ndarray:
        """Values of ``X = log m_Q`` per component."""
        return self._x.copy()

    @property
    def min_x(self) -> float:
        return min(self._xs)

    @property
    def max_x(self) -> float:
        return max(self._xs)

    def prob_x_equals_min(self) -> float:
        lo = self.min_x
        return math.fsum(w for w, x in zip(self._weights, self._x) if w > 0 and x == lo)

    def __len__(self):
        return len(self._dists)

    def __eq__(self, other):
        if not isinstance(other, EnvironmentLaw):
            return NotImplemented
        return self._dists == other._dists and np.array_equal(self._weights, other._weights)

    def __repr__(self):
        parts = ", ".join(f"{w:g}: {d!r}" for w, d in self.components)
        return f"EnvironmentLaw({parts})"

    # -- log moment generating function of X -------------------------------

    def _log_sum(self, lam: float) -> float:
        terms = [lw + lam * x for lw, x in zip(self._lws, self._xs)]
        top = max(terms)
        return top + math.log(math.fsum(math.exp(t - top) for t in terms)) - self._log_total

    def cumulant(self, lam: float) -> float:
        """``phi(lam) = log E[m_Q^lam]``; finite for every real ``lam``."""
        return self._log_sum(lam)

    def cumulant_derivatives(self, lam: float) -> tuple[float, float, float]:
        """Return ``(phi, phi', phi'')`` at ``lam``.

        ``phi'`` and ``phi''`` are the mean and variance of ``X`` under the
        environment tilted by ``lam``.
        """
        terms = [lw + lam * x for lw, x in zip(self._lws, self._xs)]
        top = max(terms)
        e = [math.exp(t - top) for t in terms]
        z = math.fsum(e)
        d1 = math.fsum(ei * x for ei, x in zip(e, self._xs)) / z
        d2 = math.fsum(ei * (x - d1) ** 2 for ei, x in zip(e, self._xs)) / z
        return top + math.log(z) - self._log_total, d1, d2

    # -- exact expectations ------------------------------------------------

    def mean_x(self) -> float:
        return math.fsum(w * x for w, x in zip(self._weights, self._x) if w > 0)

    def expectations(self) -> Expectations:
        w = self._weights
        s = self._support
        x = self._x[s]
        ex = np.exp(-x)
        return Expectations(
            mean_x=self.mean_x(),
            mean_exp_neg_x=math.fsum(w[s] * ex),
            mean_x_exp_neg_x=math.fsum(w[s] * x * ex),
            mean_q1=math.fsum(wi * d.p1 for wi, d in zip(w, self._dists) if wi > 0),
        )

    def mean_p0(self) -> float:
        """``E[f(0)] = P_1(Z_1 = 0)``."""
        return math.fsum(w * d.p0 for w, d in zip(self._weights, self._dists) if w > 0)

    # -- change of measure -------------------------------------------------

    def tilt(self, lam: float) -> "EnvironmentLaw":
        """Reweight components by ``m^lam / E[m_Q^lam]``."""
        if lam == 0.0:
            return EnvironmentLaw(self.components)
        logits = self._log_w + lam * self._x
        logits = np.where(self._support, logits, -np.inf)
        logits -= logits.max()
        new = np.exp(logits)
        new /= math.fsum(new)
        # absorb rounding so the weights pass the normalisation check
        new[np.argmax(new)] += 1.0 - math.fsum(new)
        return EnvironmentLaw(list(zip(new.tolist(), self._dists)))

    def sample_components(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(len(self._dists), size=size, p=self._weights)

    # -- diagnostics -------------------------------------------------------

    def is_supercritical(self) -> bool:
        return self.mean_x() > 0.0

    def lattice_flag(self) -> bool:
        """True when every value of ``X`` lies on one lattice ``r Z``.

        Nonzero values share a lattice iff all their pairwise ratios are
        rational; rationality is tested with bounded-denominator continued
        fractions at tolerance 1e-9.
        """
        xs = [x for x in set(self._xs) if abs(x) > _LATTICE_TOL]
        if len(xs) <= 1:
            return True
        base = xs[0]
        for x in xs[1:]:
            ratio = x / base
            approx = Fraction(ratio).limit_denominator(_LATTICE_MAX_DENOM)
            if abs(ratio - float(approx)) > _LATTICE_TOL * max(1.0, abs(ratio)):
                return False
        return True

    def diagnostics(self) -> EnvironmentDiagnostics:
        ex = self.expectations()
        w = self._weights
        p0 = self.mean_p0()
        bounds = [
            d.factorial_moment2 / (d.mean + d.mean**2) for wi, d in zip(w, self._dists) if wi > 0
        ]
        return EnvironmentDiagnostics(
            mean_X=ex.mean_x,
            is_supercritical=ex.mean_x > 0.0,
            prob_X_negative=math.fsum(wi for wi, x in zip(w, self._x) if wi > 0 and x < 0.0),
            extinction_possible=p0 > 0.0,
            prob_extinction_one_step=p0,
            # finite mixtures: E[exp(-sX)] is a finite sum for every s
            assumption1_ok=True,
            # (f'(1)/(1-f(0)))^lam is bounded when every f(0) < 1
            assumption2_ok=all(d.p0 < 1.0 for wi, d in zip(w, self._dists) if wi > 0),
            assumption3_bound=max(bounds),
            lattice_flag=self.lattice_flag(),
            q1_mean=ex.mean_q1,
        )

    # -- serialisation -----------------------------------------------------

    def to_list(self) -> list[dict]:
        return [dict(weight=w, **d.to_dict()) for w, d in self.components]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "EnvironmentLaw":
        comps = []
        for item in items:
            item = dict(item)
            if "weight" not in item:
                raise ValueError(f"component without weight: {item!r}")
            w = float(item.pop("weight"))
            comps.append((w, from_dict(item)))
        return cls(comps)

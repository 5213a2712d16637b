"""Offspring distributions on {0, 1, 2, ...}.

Each law exposes its generating function, its first two moments, an exact
sampler for one individual and a vectorised sampler for the total progeny of
``z`` independent individuals (the ``z``-fold convolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OffspringDistribution",
    "FiniteSupportDistribution",
    "LinearFractionalDistribution",
    "GeometricParametrization",
    "MAX_SUPPORT",
]

MAX_SUPPORT = 10**6
_NORM_TOL = 1e-12
# rows x support cells materialised per multinomial chunk
_MULTINOMIAL_CELLS = 4_000_000


class OffspringDistribution:
    """Common interface of the reproduction laws."""

    family: str = ""

    def pgf(self, s):
        raise NotImplementedError

    def pgf_prime(self, s):
        raise NotImplementedError

    def pmf(self, k: int) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def factorial_moment2(self) -> float:
        """f''(1) = E[N(N-1)]."""
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        """M_q = E[N^2] = f''(1) + f'(1)."""
        return self.factorial_moment2 + self.mean

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def p0(self) -> float:
        return self.pmf(0)

    @property
    def p1(self) -> float:
        return self.pmf(1)

    @property
    def is_degenerate_one(self) -> bool:
        """All mass on one child (f(s) = s)."""
        return abs(self.p1 - 1.0) <= _NORM_TOL

    def moments(self) -> tuple[float, float]:
        """Return ``(m_q, M_q)``; ``M_q`` is ``math.inf`` if unbounded."""
        return self.mean, self.second_moment

    def sample_total(self, z, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the law; scalar when ``size`` is None."""
        n = 1 if size is None else size
        out = self.sample_total(np.ones(n, dtype=np.int64), rng)
        return int(out[0]) if size is None else out

    def extinction_fixed_point(self) -> float:
        """Smallest fixed point of the generating function on [0, 1].

        Bisection on ``f(s) - s`` over ``[0, 1 - 1e-12]``. The function is
        convex, positive below the smallest root and nonpositive between the
        roots, so a sign change brackets it whenever one exists.
        """
        if self.is_degenerate_one:
            return 1.0
        if self.p0 == 0.0:
            return 0.0
        if self.mean <= 1.0:
            return 1.0
        lo, hi = 0.0, 1.0 - 1e-12
        if self.pgf(hi) - hi > 0.0:
            return 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.pgf(mid) - mid > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-17:
                break
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_s(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError(f"generating function argument outside [0, 1]: {s!r}")
    return arr


def _maybe_scalar(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class FiniteSupportDistribution(OffspringDistribution):
    """Law with masses ``probs[k]`` on ``k = 0..K``."""

    probs: tuple[float, ...]
    family: str = field(default="finite", init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d sequence")
        if p.size > MAX_SUPPORT + 1:
            raise ValueError(f"support larger than {MAX_SUPPORT}")
        if np.any(p < 0.0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(math.fsum(p) - 1.0) > _NORM_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        # trailing zeros carry no information
        last = int(np.flatnonzero(p)[-1])
        object.__setattr__(self, "probs", tuple(float(x) for x in p[: last + 1]))
        object.__setattr__(self, "_p", p[: last + 1].copy())
        object.__setattr__(self, "_k", np.arange(last + 1))

    def pgf(self, s):
        arr = _check_s(s)
        return _maybe_scalar(np.polynomial.polynomial.polyval(arr, self._p), s)

    def pgf_prime(self, s):
        arr = _check_s(s)
        deriv = np.polynomial.polynomial.polyder(self._p)
        return _maybe_scalar(np.polynomial.polynomial.polyval(arr, deriv), s)

    def pmf(self, k: int) -> float:
        return self.probs[k] if 0 <= k < len(self.probs) else 0.0

    @property
    def mean(self) -> float:
        return math.fsum(self._k * self._p)

    @property
    def factorial_moment2(self) -> float:
        return math.fsum(self._k * (self._k - 1) * self._p)

    def sample_total(self, z, rng):
        z = np.asarray(z, dtype=np.int64)
        out = np.zeros(z.shape, dtype=np.int64)
        if len(self._p) == 1:
            return out
        flat_z = z.ravel()
        flat = out.ravel()
        live = np.flatnonzero(flat_z > 0)
        chunk = max(1, _MULTINOMIAL_CELLS // len(self._p))
        # multinomial counts are exact for any z, so no large-z approximation
        for start in range(0, live.size, chunk):
            idx = live[start : start + chunk]
            counts = rng.multinomial(flat_z[idx], self._p)
            flat[idx] = counts @ self._k
        return flat.reshape(z.shape)

    def to_dict(self) -> dict:
        return {"family": self.family, "probs": list(self.probs)}


@dataclass(frozen=True)
class LinearFractionalDistribution(OffspringDistribution):
    """Law with generating function ``1 - (1-s) / (1/m + b (1-s) / (2 m^2))``.

    Stored as ``(m, b)`` with ``m = f'(1)`` and ``b = f''(1)``. The mass at
    zero and the ratio of the geometric tail are derived on demand: given a
    positive count, the law is geometric on {1, 2, ...} with ratio ``r``.
    """

    m: float
    b: float
    family: str = field(default="linear_fractional", init=False, repr=False)

    def __post_init__(self):
        if not (self.m > 0.0 and math.isfinite(self.m)):
            raise ValueError(f"mean must be positive and finite, got {self.m!r}")
        if not (self.b >= 0.0 and math.isfinite(self.b)):
            raise ValueError(f"f''(1) must be nonnegative, got {self.b!r}")
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "b", float(self.b))
        # p0 >= 0 needs 1/m + b/(2 m^2) >= 1
        if self._denom0 < 1.0 - 1e-12:
            raise ValueError(
                f"(m={self.m}, b={self.b}) is not a probability law: "
                f"need b >= 2 m (m - 1)"
            )

    @property
    def _denom0(self) -> float:
        return 1.0 / self.m + self.b / (2.0 * self.m**2)

    @classmethod
    def from_geometric(cls, a: float, q: float) -> "LinearFractionalDistribution":
        """LF law with ``p_0 = a`` and ``p_k = (1-a)(1-q) q^(k-1)``."""
        return GeometricParametrization(a, q).to_linear_fractional()

    @classmethod
    def pure_geometric(cls, m: float) -> "LinearFractionalDistribution":
        """Geometric law on {0, 1, ...} with mean ``m``: ``f(s) = 1/(1 + m(1-s))``."""
        return cls(m, 2.0 * m * m)

    @property
    def p0(self) -> float:
        return max(0.0, 1.0 - 1.0 / self._denom0)

    @property
    def ratio(self) -> float:
        """Geometric ratio ``r`` of the positive part."""
        return self.b / (2.0 * self.m + self.b)

    def pgf(self, s):
        arr = _check_s(s)
        val = 1.0 - (1.0 - arr) / (1.0 / self.m + self.b * (1.0 - arr) / (2.0 * self.m**2))
        return _maybe_scalar(val, s)

    def pgf_prime(self, s):
        arr = _check_s(s)
        d = 1.0 / self.m + self.b * (1.0 - arr) / (2.0 * self.m**2)
        return _maybe_scalar((1.0 / self.m) / d**2, s)

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k == 0:
            return self.p0
        r = self.ratio
        return (1.0 - self.p0) * (1.0 - r) * r ** (k - 1)

    @property
    def mean(self) -> float:
        return self.m

    @property
    def factorial_moment2(self) -> float:
        return self.b

    def sample_total(self, z, rng):
        z = np.asarray(z, dtype=np.int64)
        alive = rng.binomial(z, 1.0 - self.p0) if self.p0 > 0.0 else z.copy()
        r = self.ratio
        if r == 0.0:
            return alive.astype(np.int64)
        # sum of `alive` geometrics on {1,2,...}: alive + NB(alive, 1 - r) failures
        extra = rng.negative_binomial(np.maximum(alive, 1), 1.0 - r)
        return np.where(alive > 0, alive + extra, 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "b": self.b}


@dataclass(frozen=True)
class GeometricParametrization:
    """Zero-modified geometric law: ``p_0 = a``, ``p_k = (1-a)(1-q) q^(k-1)``."""

    a: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"a must lie in [0, 1], got {self.a!r}")
        if not 0.0 <= self.q < 1.0:
            raise ValueError(f"q must lie in [0, 1), got {self.q!r}")

    def pmf(self, k: int) -> float:
        if k == 0:
            return self.a
        return (1.0 - self.a) * (1.0 - self.q) * self.q ** (k - 1) if k > 0 else 0.0

    @property
    def mean(self) -> float:
        return (1.0 - self.a) / (1.0 - self.q)

    def to_linear_fractional(self) -> LinearFractionalDistribution:
        if self.a >= 1.0:
            raise ValueError("a = 1 leaves no offspring; mean would be zero")
        m = self.mean
        b = 2.0 * self.q * (1.0 - self.a) / (1.0 - self.q) ** 2
        return LinearFractionalDistribution(m, b)

    def to_dict(self) -> dict:
        return {"family": "geometric", "a": self.a, "q": self.q}


def from_dict(spec: dict) -> OffspringDistribution:
    """Build a distribution from its config mapping (see :mod:`bpre.config`)."""
    family = spec.get("family")
    if family == "finite":
        return FiniteSupportDistribution(tuple(spec["probs"]))
    if family == "linear_fractional":
        return LinearFractionalDistribution(float(spec["m"]), float(spec["b"]))
    if family == "geometric":
        return GeometricParametrization(float(spec["a"]), float(spec["q"])).to_linear_fractional()
    raise ValueError(f"unknown offspring family {family!r}")

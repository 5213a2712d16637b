"""Monte Carlo for BPRE lower deviations.

Replicates are simulated in fixed-size blocks, each driven by its own Philox
stream derived from ``(seed, block index)``. Block results are merged in
block order, so the thread count never changes an estimate.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .environment import EnvironmentLaw

__all__ = [
    "Trajectory",
    "MCEstimate",
    "block_rng",
    "simulate",
    "simulate_block",
    "estimate_band_prob",
    "estimate_lower_prob",
    "estimate_lower_prob_tilted",
    "estimate_rho",
    "martingale_check",
    "lower_band_limit",
    "DEFAULT_CAP",
]

log = logging.getLogger(__name__)

DEFAULT_CAP = 10**9
BLOCK_SIZE = 8192
_MAX_UPPER = 2**62


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for replicate block ``block`` of run ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Trajectory:
    z_path: np.ndarray
    s_path: np.ndarray
    env_indices: np.ndarray
    approx_flag: bool = False
    saturated: bool = False


@dataclass
class MCEstimate:
    p_hat: float
    stderr: float
    reps: int
    n: int
    weighting: str = "naive"
    lam: float = 0.0
    ess: float = math.nan
    hits: int = 0
    saturated: int = 0
    # rule-of-three bound when nothing was observed
    upper_bound: float = math.nan
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def rate_hat(self) -> float:
        if "rate_hat" in self.extra:
            return self.extra["rate_hat"]
        if self.p_hat <= 0.0:
            return math.inf
        if self.n == 0:
            return 0.0
        return -math.log(self.p_hat) / self.n

    @property
    def rel_err(self) -> float:
        return self.stderr / self.p_hat if self.p_hat > 0 else math.inf


def _step(env: EnvironmentLaw, z: np.ndarray, comp: np.ndarray, rng):
    """One generation: every replicate reproduces under its drawn component."""
    out = np.zeros_like(z)
    live = z > 0
    for i, dist in enumerate(env.distributions):
        mask = live & (comp == i)
        if mask.any():
            out[mask] = dist.sample_total(z[mask], rng)
    return out


def simulate_block(
    env: EnvironmentLaw,
    z0: int,
    n: int,
    size: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
    sampling_env: Optional[EnvironmentLaw] = None,
):
    """Simulate ``size`` independent paths to generation ``n``.

    Components are drawn from ``sampling_env`` (a tilt of ``env`` sharing its
    component list) when given. Paths reaching ``cap`` are frozen there and
    flagged. Returns ``(Z_n, S_n, saturated)``.
    """
    draw = env if sampling_env is None else sampling_env
    x = env.log_means
    z = np.full(size, int(z0), dtype=np.int64)
    s = np.zeros(size)
    sat = np.zeros(size, dtype=bool)
    w = draw.weights
    for _ in range(n):
        comp = rng.choice(len(w), size=size, p=w)
        s += x[comp]
        active = ~sat
        nxt = _step(env, np.where(active, z, 0), comp, rng)
        newly = active & (nxt >= cap)
        sat |= newly
        z = np.where(active, np.minimum(nxt, cap), z)
    return z, s, sat


def simulate(
    env: EnvironmentLaw, z0: int, n: int, rng: np.random.Generator, cap: int = DEFAULT_CAP
) -> Trajectory:
    """One path ``(Z_0..Z_n, S_0..S_n)`` together with the chosen components."""
    if z0 < 1 or n < 0:
        raise ValueError("need z0 >= 1 and n >= 0")
    x = env.log_means
    zp = np.zeros(n + 1, dtype=np.int64)
    sp = np.zeros(n + 1)
    idx = np.zeros(n, dtype=np.int64)
    zp[0] = z0
    saturated = False
    for k in range(1, n + 1):
        i = int(env.sample_components(rng, None))
        idx[k - 1] = i
        sp[k] = sp[k - 1] + x[i]
        prev = zp[k - 1]
        if saturated or prev == 0:
            zp[k] = prev
            continue
        nxt = int(env.distributions[i].sample_total(np.array([prev]), rng)[0])
        if nxt >= cap:
            nxt, saturated = cap, True
        zp[k] = nxt
    return Trajectory(zp, sp, idx, approx_flag=False, saturated=saturated)


def lower_band_limit(theta: float, n: int) -> int:
    """``floor(exp(theta n))`` clipped to a safe integer range."""
    v = theta * n
    if v >= math.log(_MAX_UPPER):
        return _MAX_UPPER
    return int(math.floor(math.exp(v) * (1.0 + 1e-15)))


def _run_blocks(fn, reps: int, block_size: int, threads: int):
    blocks = [(b, min(block_size, reps - b * block_size)) for b in range(-(-reps // block_size))]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b, size) for b, size in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda bs: fn(*bs), blocks))


def estimate_band_prob(
    env: EnvironmentLaw,
    z0: int,
    n: int,
    upper: int,
    reps: int,
    seed: int = 0,
    lam: float = 0.0,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
    lower: int = 1,
) -> MCEstimate:
    """Estimate ``P_{z0}(lower <= Z_n <= upper)``, optionally under a tilt.

    With ``lam != 0`` the environment is drawn from ``env.tilt(lam)`` and
    each replicate carries the likelihood ratio ``exp(-lam S_n + n phi(lam))``.
    Capped paths count as misses.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if z0 < 1 or n < 0:
        raise ValueError("need z0 >= 1 and n >= 0")
    tilted = env.tilt(lam) if lam != 0.0 else None
    log_norm = n * env.cumulant(lam) if lam != 0.0 else 0.0

    def one(block: int, size: int):
        rng = block_rng(seed, block)
        z, s, sat = simulate_block(env, z0, n, size, rng, cap, tilted)
        hit = (z >= lower) & (z <= upper) & ~sat
        w = np.exp(-lam * s + log_norm) if lam != 0.0 else np.ones(size)
        y = np.where(hit, w, 0.0)
        return (
            float(np.sum(y)),
            float(np.sum(y * y)),
            float(np.sum(w)),
            float(np.sum(w * w)),
            int(hit.sum()),
            int(sat.sum()),
        )

    parts = _run_blocks(one, reps, block_size, threads)
    sum_y = math.fsum(p[0] for p in parts)
    sum_y2 = math.fsum(p[1] for p in parts)
    sum_w = math.fsum(p[2] for p in parts)
    sum_w2 = math.fsum(p[3] for p in parts)
    hits = sum(p[4] for p in parts)
    saturated = sum(p[5] for p in parts)

    p_hat = sum_y / reps
    var = max(sum_y2 / reps - p_hat * p_hat, 0.0)
    stderr = math.sqrt(var / reps)
    est = MCEstimate(
        p_hat=p_hat,
        stderr=stderr,
        reps=reps,
        n=n,
        weighting="naive" if lam == 0.0 else "tilted",
        lam=lam,
        hits=hits,
        saturated=saturated,
    )
    if lam != 0.0:
        est.ess = sum_w * sum_w / sum_w2 if sum_w2 > 0 else 0.0
        if est.ess < 0.01 * reps:
            warnings.warn(
                f"effective sample size {est.ess:.1f} below 1% of {reps} replicates; "
                f"tilt lam={lam:g} may be mismatched",
                RuntimeWarning,
                stacklevel=2,
            )
    if hits == 0:
        est.upper_bound = 3.0 / reps
    return est


def estimate_lower_prob(
    env: EnvironmentLaw,
    z0: int,
    n: int,
    theta: float,
    reps: int,
    seed: int = 0,
    **kwargs,
) -> MCEstimate:
    """Plain Monte Carlo estimate of ``P_{z0}(1 <= Z_n <= exp(theta n))``."""
    if not theta > 0.0:
        raise ValueError("theta must be positive")
    return estimate_band_prob(env, z0, n, lower_band_limit(theta, n), reps, seed, **kwargs)


def estimate_lower_prob_tilted(
    env: EnvironmentLaw,
    z0: int,
    n: int,
    theta: float,
    lam: Optional[float] = None,
    reps: int = 10_000,
    seed: int = 0,
    **kwargs,
) -> MCEstimate:
    """Importance-sampling version of :func:`estimate_lower_prob`.

    The environment is drawn with weights proportional to ``m^lam``; the
    offspring draws given the environment are left untouched. ``lam``
    defaults to the maximiser ``lam_theta`` of the Legendre transform.
    """
    if not theta > 0.0:
        raise ValueError("theta must be positive")
    if lam is None:
        from .rates import lambda_at

        lam = lambda_at(env, theta)[1]
        if not math.isfinite(lam):
            raise ValueError(f"no finite tilt for theta={theta!r}")
    if lam > 0.0:
        raise ValueError("tilt parameter must be <= 0")
    return estimate_band_prob(
        env, z0, n, lower_band_limit(theta, n), reps, seed, lam=lam, **kwargs
    )


def estimate_rho(
    env: EnvironmentLaw,
    z: int = 1,
    n: int = 200,
    band_b: int = 50,
    particles: int = 10_000,
    chains: int = 16,
    seed: int = 0,
    threads: int = 1,
    burn_in: Optional[int] = None,
) -> MCEstimate:
    """Fixed-effort particle estimate of the survival rate ``rho``.

    Each chain carries ``particles`` copies of the process confined to
    ``{1, ..., band_b}``. After every generation the surviving fraction
    ``alpha_k`` is recorded and survivors are resampled (multinomially) back
    to full size. The decay rate is the mean of ``-log alpha_k`` over the
    generations after ``burn_in`` (default ``n // 2``), once the particle
    cloud has relaxed from the start state. The spread over independent
    chains gives the error bar; ``extra["log_prob"]`` keeps the full
    ``sum(log alpha_k)``, an estimate of ``log P_z(1 <= Z_k <= band_b, k <= n)``.
    """
    if band_b < z:
        raise ValueError("band must contain the starting state")
    if particles < 1000:
        raise ValueError("need at least 1000 particles")
    if n < 1 or chains < 1:
        raise ValueError("need n >= 1 and chains >= 1")
    burn = n // 2 if burn_in is None else int(burn_in)
    if not 0 <= burn < n:
        raise ValueError("burn_in must lie in [0, n)")
    w = env.weights

    def run_chain(chain: int, _size: int):
        rng = block_rng(seed, chain)
        pop = np.full(particles, int(z), dtype=np.int64)
        logs = np.zeros(n)
        for k in range(n):
            comp = rng.choice(len(w), size=particles, p=w)
            nxt = _step(env, pop, comp, rng)
            alive = np.flatnonzero((nxt >= 1) & (nxt <= band_b))
            if alive.size == 0:
                # one survivor would have been seen: the rest is a lower bound
                logs[k:] = math.log(1.0 / particles)
                return logs, True
            logs[k] = math.log(alive.size / particles)
            pop = nxt[alive[rng.integers(0, alive.size, size=particles)]]
        return logs, False

    results = _run_blocks(run_chain, chains, 1, threads)
    degenerate = any(r[1] for r in results)
    window = n - burn
    sums = np.array([float(np.sum(r[0][burn:])) for r in results])
    rates = -sums / window
    log_prob = float(np.mean([np.sum(r[0]) for r in results]))
    # chain products are unbiased for the window probability: pool them
    # before the log, and take the error bar from a leave-one-out jackknife
    rate_hat = -_log_mean_exp(sums) / window
    if chains > 1:
        loo = np.array(
            [-_log_mean_exp(np.delete(sums, i)) / window for i in range(chains)]
        )
        stderr = float(math.sqrt((chains - 1) / chains * np.sum((loo - loo.mean()) ** 2)))
    else:
        stderr = math.nan
    return MCEstimate(
        p_hat=math.exp(-n * rate_hat),
        stderr=stderr,
        reps=particles * chains,
        n=n,
        weighting="particle",
        degenerate=degenerate,
        extra={
            "rate_hat": rate_hat,
            "chain_rates": rates.tolist(),
            "band": band_b,
            "burn_in": burn,
            "log_prob": log_prob,
        },
    )


def _log_mean_exp(v: np.ndarray) -> float:
    top = float(np.max(v))
    return top + math.log(float(np.mean(np.exp(v - top))))


def martingale_check(
    env: EnvironmentLaw,
    z0: int,
    n: int,
    reps: int,
    seed: int = 0,
    cap: int = 10**15,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> tuple[float, float]:
    """Sample mean and standard error of ``Z_n exp(-S_n)``; its expectation is ``z0``."""
    if reps < 1000:
        raise ValueError("need at least 1000 replicates")

    def one(block: int, size: int):
        rng = block_rng(seed, block)
        z, s, sat = simulate_block(env, z0, n, size, rng, cap)
        v = z * np.exp(-s)
        return float(np.sum(v)), float(np.sum(v * v)), int(sat.sum())

    parts = _run_blocks(one, reps, block_size, threads)
    total = math.fsum(p[0] for p in parts)
    total2 = math.fsum(p[1] for p in parts)
    if any(p[2] for p in parts):
        warnings.warn("population cap reached; the sample mean is biased low", RuntimeWarning)
    mean = total / reps
    var = max(total2 / reps - mean * mean, 0.0) * reps / (reps - 1)
    return mean, math.sqrt(var / reps)

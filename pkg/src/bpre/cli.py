"""Command-line front end.

Subcommands ``rate``, ``estimate``, ``rho``, ``kimmel`` and ``diagnose`` read
a YAML config (see :mod:`bpre.config`) and write CSV tables with a ``#``
metadata header. Every flag can also be set through an environment variable
``BPRE_<FLAG>`` (``--theta-grid`` -> ``BPRE_THETA_GRID``); a flag given on
the command line wins over the variable, which wins over the config.

Exit codes: 0 ok, 2 config error, 3 model-regime error, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import warnings
from typing import Optional

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .environment import EnvironmentLaw
from .kimmel import LOG2, model_rates, theta_window
from .rates import (
    RateFunction,
    chi,
    default_theta_grid,
    growth_tilt,
    survival_rate,
    theta_star,
)
from .simulator import estimate_lower_prob, estimate_lower_prob_tilted, estimate_rho

log = logging.getLogger("bpre")

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_ESTIMATE = 0, 2, 3, 4

RATE_COLUMNS = ["theta", "Lambda", "lambda_theta", "chi", "t_theta", "regime", "theta_star", "rho"]
ESTIMATE_COLUMNS = ["n", "theta", "method", "p_hat", "stderr", "rate_hat", "ess", "theory_chi", "gap"]
RHO_COLUMNS = ["n", "band", "particles", "chains", "burn_in", "rate_hat", "stderr", "rho_theory", "regime"]
KIMMEL_COLUMNS = ["theta", "chi", "log2_minus_chi", "in_window"]

# flag -> RunParams field
_FLAGS = {
    "seed": "seed",
    "threads": "threads",
    "theta_grid": "theta_grid",
    "reps": "reps",
    "horizon": "horizon",
    "band": "band",
    "particles": "particles",
    "cap": "cap",
}


class RegimeError(RuntimeError):
    pass


class EstimationError(RuntimeError):
    pass


def fmt(value) -> str:
    """CSV cell: ``inf`` for infinities, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def write_table(stream, meta: dict, columns: list, rows: list) -> None:
    for key, value in meta.items():
        stream.write(f"# {key}: {fmt(value)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])


def _meta(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.run.seed,
        "config_hash": cfg.digest(),
    }


def _require_env(cfg: RunConfig) -> EnvironmentLaw:
    if cfg.environment is None:
        raise ConfigError("config has no environment section")
    env = cfg.environment
    if not env.is_supercritical():
        raise RegimeError(f"environment is not supercritical (E[X] = {env.mean_x():.6g})")
    return env


def _rho(env: EnvironmentLaw, cfg: RunConfig):
    budget = dict(
        n=cfg.run.rho_horizon,
        band_b=cfg.run.band,
        particles=cfg.run.particles,
        chains=cfg.run.chains,
        threads=cfg.run.threads,
    )
    return survival_rate(env, z=cfg.run.z0, mc_budget=budget, seed=cfg.run.seed)


def _thetas(cfg: RunConfig, mean_x: float):
    if cfg.run.thetas is not None:
        return [float(t) for t in cfg.run.thetas]
    return [float(t) for t in default_theta_grid(mean_x, cfg.run.theta_grid)]


def cmd_rate(cfg: RunConfig, out) -> int:
    env = _require_env(cfg)
    rate = RateFunction(env)
    sr = _rho(env, cfg)
    rho = sr.value
    ts = theta_star(rho, rate, rate.mean_x)
    diag = env.diagnostics()
    rows = []
    for th in _thetas(cfg, rate.mean_x):
        val, lam = rate.solve(th)
        res = chi(th, rho, rate, theta_star_value=ts)
        rows.append(
            dict(
                theta=th,
                Lambda=val,
                lambda_theta=lam,
                chi=res.value,
                t_theta=res.t_theta,
                regime=res.regime,
                theta_star=ts,
                rho=rho,
            )
        )
    meta = _meta(cfg, "rate")
    meta.update(
        mean_X=rate.mean_x,
        rho=rho,
        rho_regime=sr.regime,
        theta_star=ts,
        limit_regime=diag.regime(),
        lattice=diag.lattice_flag,
        assumption3_bound=diag.assumption3_bound,
    )
    write_table(out, meta, RATE_COLUMNS, rows)
    return EXIT_OK


def cmd_estimate(cfg: RunConfig, out) -> int:
    env = _require_env(cfg)
    rate = RateFunction(env)
    sr = survival_rate(env, z=cfg.run.z0)
    rho = sr.value if math.isfinite(sr.value) else None
    ts = theta_star(rho, rate, rate.mean_x) if rho is not None else None
    thetas = cfg.run.thetas or [f * rate.mean_x for f in (0.25, 0.5, 0.75)]
    p = cfg.run
    rows = []
    for n in p.horizon:
        for th in thetas:
            theory = chi(th, rho, rate, theta_star_value=ts).value if rho is not None else None
            if rho is not None:
                lam = growth_tilt(env, th, rho)
            else:
                lam = rate.solve(th)[1]
            if not math.isfinite(lam):
                # degenerate walk: no tilt reaches the event
                lam = 0.0
            common = dict(reps=p.reps, seed=p.seed, cap=p.cap, threads=p.threads)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ests = [
                    ("naive", estimate_lower_prob(env, p.z0, n, th, **common)),
                    ("tilted", estimate_lower_prob_tilted(env, p.z0, n, th, lam=lam, **common)),
                ]
            for method, est in ests:
                if est.saturated == est.reps:
                    raise EstimationError(f"all {est.reps} replicates hit the population cap")
                rate_hat = est.rate_hat
                gap = rate_hat - theory if theory is not None and math.isfinite(rate_hat) else None
                rows.append(
                    dict(
                        n=n,
                        theta=th,
                        method=method,
                        p_hat=est.p_hat,
                        stderr=est.stderr,
                        rate_hat=rate_hat,
                        ess=est.ess if method == "tilted" else None,
                        theory_chi=theory,
                        gap=gap,
                    )
                )
    if p.band_mode:
        for n in p.horizon:
            est = estimate_rho(
                env, z=p.z0, n=n, band_b=p.band, particles=p.particles,
                chains=p.chains, seed=p.seed, threads=p.threads,
            )
            rows.append(
                dict(
                    n=n,
                    method="band",
                    p_hat=est.p_hat,
                    stderr=est.stderr,
                    rate_hat=est.rate_hat,
                    theory_chi=rho,
                    gap=est.rate_hat - rho if rho is not None else None,
                )
            )
    meta = _meta(cfg, "estimate")
    meta.update(mean_X=rate.mean_x, rho=rho, rho_regime=sr.regime, reps=p.reps, cap=p.cap)
    write_table(out, meta, ESTIMATE_COLUMNS, rows)
    return EXIT_OK


def cmd_rho(cfg: RunConfig, out) -> int:
    env = _require_env(cfg)
    p = cfg.run
    theory = survival_rate(env, z=p.z0)
    est = estimate_rho(
        env,
        z=p.z0,
        n=p.rho_horizon,
        band_b=p.band,
        particles=p.particles,
        chains=p.chains,
        seed=p.seed,
        threads=p.threads,
    )
    if est.degenerate:
        log.warning("all particles left the band in some chain; estimate is a bound")
    row = dict(
        n=p.rho_horizon,
        band=p.band,
        particles=p.particles,
        chains=p.chains,
        burn_in=est.extra["burn_in"],
        rate_hat=est.rate_hat,
        stderr=est.stderr,
        rho_theory=theory.value,
        regime=theory.regime,
    )
    meta = _meta(cfg, "rho")
    meta.update(mean_X=env.mean_x(), degenerate=est.degenerate)
    write_table(out, meta, RHO_COLUMNS, [row])
    return EXIT_OK


def cmd_kimmel(cfg: RunConfig, out) -> int:
    if cfg.kimmel is None:
        raise ConfigError("config has no kimmel section")
    model = cfg.kimmel
    if not model.is_supercritical():
        raise RegimeError("induced environment is not supercritical")
    rates = model_rates(model)
    window = theta_window(model, rates)
    rows = []
    for th in _thetas(cfg, rates.mean_x):
        c = rates.chi(th)
        rows.append(
            dict(
                theta=th,
                chi=c,
                log2_minus_chi=LOG2 - c,
                in_window=window is not None and window[0] < th <= window[1],
            )
        )
    meta = _meta(cfg, "kimmel")
    meta.update(
        mean_X=rates.mean_x,
        rho=rates.rho,
        theta_star=rates.theta_star,
        window_low=window[0] if window else None,
        window_high=window[1] if window else None,
    )
    write_table(out, meta, KIMMEL_COLUMNS, rows)
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, out) -> int:
    if cfg.environment is None:
        raise ConfigError("config has no environment section")
    diag = cfg.environment.diagnostics()
    for key, value in vars(diag).items():
        out.write(f"{key}: {fmt(value)}\n")
    out.write(f"regime: {diag.regime()}\n")
    return EXIT_OK


COMMANDS = {
    "rate": cmd_rate,
    "estimate": cmd_estimate,
    "rho": cmd_rho,
    "kimmel": cmd_kimmel,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpre", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run config (or BPRE_CONFIG)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--theta-grid", type=int, dest="theta_grid")
        p.add_argument("--reps", type=int)
        p.add_argument("--horizon", type=int, nargs="+")
        p.add_argument("--band", type=int)
        p.add_argument("--particles", type=int)
        p.add_argument("--cap", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _env_override(name: str):
    raw = os.environ.get(f"BPRE_{name.upper()}")
    if raw is None or raw == "":
        return None
    try:
        if name == "horizon":
            return [int(v) for v in raw.replace(",", " ").split()]
        return int(raw)
    except ValueError:
        raise ConfigError(f"BPRE_{name.upper()}={raw!r} is not an integer") from None


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for flag, field_name in _FLAGS.items():
        value = getattr(args, flag, None)
        if value is None:
            value = _env_override(flag)
        if value is not None:
            setattr(cfg.run, field_name, value)
    cfg.run.validate()
    return cfg


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.config is None and os.environ.get("BPRE_CONFIG"):
        args.config = os.environ["BPRE_CONFIG"]
    if args.out is None and os.environ.get("BPRE_OUT"):
        args.out = os.environ["BPRE_OUT"]
    if not args.config:
        print("config error: --config (or BPRE_CONFIG) is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = apply_overrides(load_config(args.config), args)
        buf = io.StringIO()
        code = COMMANDS[args.command](cfg, buf)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATE
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())

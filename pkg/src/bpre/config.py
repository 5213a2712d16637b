"""Run configuration: a versioned YAML document.

Example::

    schema_version: 1
    environment:
      - {weight: 0.5, family: linear_fractional, m: 2.0, b: 8.0}
      - {weight: 0.5, family: geometric, a: 0.2, q: 0.5}
      - {weight: 0.0, family: finite, probs: [0.25, 0.25, 0.5]}
    kimmel:                       # optional, used by the kimmel command
      parasite: {a: 0.1, q: 0.8}
      splitting: [{weight: 0.5, p: 0.3}, {weight: 0.5, p: 0.7}]
    run:
      seed: 1
      horizon: [20, 30, 40]
      thetas: [0.05, 0.1]         # explicit theta values (estimate command)
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .environment import EnvironmentLaw
from .kimmel import KimmelModel

__all__ = ["ConfigError", "RunParams", "RunConfig", "load_config", "parse_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class RunParams:
    seed: int = 0
    threads: int = 1
    theta_grid: int = 256
    thetas: Optional[list] = None
    horizon: list = field(default_factory=lambda: [20, 30, 40])
    reps: int = 100_000
    z0: int = 1
    band: int = 50
    particles: int = 10_000
    chains: int = 16
    rho_horizon: int = 200
    cap: int = 10**9
    # estimate command: add particle-scheme rows for the bounded band {1..band}
    band_mode: bool = False

    def validate(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.theta_grid < 2:
            raise ConfigError("theta_grid must be >= 2")
        if self.thetas is not None and any(not t > 0 for t in self.thetas):
            raise ConfigError("every theta must be positive")
        if not self.horizon or any(h < 0 for h in self.horizon):
            raise ConfigError("horizon values must be >= 0")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.z0 < 1:
            raise ConfigError("z0 must be >= 1")
        if self.band < self.z0:
            raise ConfigError("band must be >= z0")
        if self.particles < 1000:
            raise ConfigError("particles must be >= 1000")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.rho_horizon < 1:
            raise ConfigError("rho_horizon must be >= 1")
        if self.cap < 2:
            raise ConfigError("cap must be >= 2")


_INT_FIELDS = {"seed", "threads", "theta_grid", "reps", "z0", "band", "particles", "chains", "rho_horizon", "cap"}


@dataclass
class RunConfig:
    environment: Optional[EnvironmentLaw] = None
    kimmel: Optional[KimmelModel] = None
    run: RunParams = field(default_factory=RunParams)

    def to_dict(self) -> dict:
        out: dict = {"schema_version": SCHEMA_VERSION}
        if self.environment is not None:
            out["environment"] = self.environment.to_list()
        if self.kimmel is not None:
            out["kimmel"] = self.kimmel.to_dict()
        out["run"] = asdict(self.run)
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def _as_int(name, value):
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer")
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    if f != int(f):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(f)


def _run_params(spec: dict) -> RunParams:
    known = {f.name for f in fields(RunParams)}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown run parameters: {sorted(unknown)}")
    kw = {}
    for k, v in spec.items():
        if v is None:
            continue
        if k in _INT_FIELDS:
            kw[k] = _as_int(k, v)
        elif k == "horizon":
            kw[k] = [_as_int(k, h) for h in (v if isinstance(v, list) else [v])]
        elif k == "band_mode":
            if not isinstance(v, bool):
                raise ConfigError("band_mode must be true or false")
            kw[k] = v
        elif k == "thetas":
            kw[k] = [float(t) for t in (v if isinstance(v, list) else [v])]
    params = RunParams(**kw)
    params.validate()
    return params


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    unknown = set(doc) - {"schema_version", "environment", "kimmel", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        env = EnvironmentLaw.from_list(doc["environment"]) if doc.get("environment") else None
        kim = KimmelModel.from_dict(doc["kimmel"]) if doc.get("kimmel") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(env, kim, _run_params(doc.get("run") or {}))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return parse_config(doc)

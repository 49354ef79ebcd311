"""Run configuration stored as flat ``key = value`` text."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .models import RunConfig

DEFAULT_RESULTS_DIR = Path("results")

SUBCOMMANDS = ("lyapunov", "prufer-check", "ldt", "msa-certify", "ids", "wegner-skew", "nondegen")
SYSTEM_KINDS = ("doubling", "skew-shift", "iid", "rotation")
FUNCTION_KINDS = ("cosine", "linear-centered", "coordinate", "table")
LAWS = ("uniform", "bernoulli")
VARIANTS = ("eliminate", "wegner")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(RuntimeError):
    """Raised when configuration cannot be loaded, parsed or validated."""


def results_root() -> Path:
    return Path(os.environ.get("RESULTS_DIR", str(DEFAULT_RESULTS_DIR))).expanduser()


def load_config(path: Optional[Path]) -> RunConfig:
    config = RunConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    if path.suffix == ".json":
        # the config echo of an emitted summary.json
        try:
            echoed = json.loads(path.read_text())["config"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"Failed to read the config echo in {path}: {exc}") from exc
        return update_config(config, **echoed)
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Failed to parse configuration line {lineno}: {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return update_config(config, **values)


def save_config(config: RunConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config))


def dump_config(config: RunConfig) -> str:
    lines = [f"{key} = {_format_value(value)}" for key, value in asdict(config).items()]
    return "\n".join(lines) + "\n"


def update_config(config: RunConfig, **kwargs: Any) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, value in kwargs.items():
        key = key.replace("-", "_")
        if key == "lambda":
            key = "coupling"
        if key not in types:
            raise ConfigError(f"Unknown configuration key: {key}")
        setattr(config, key, _coerce(key, types[key], value))
    return config


def parse_overrides(args: Sequence[str]) -> Dict[str, str]:
    """Turn ``--key value`` tokens into a mapping."""

    overrides: Dict[str, str] = {}
    tokens = list(args)
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise ConfigError(f"Unexpected argument: {token}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            value = tokens[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        overrides[key] = value
    return overrides


def validate_config(config: RunConfig) -> None:
    if config.subcommand and config.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"Unknown subcommand: {config.subcommand}")
    if config.system not in SYSTEM_KINDS:
        raise ConfigError(f"Unknown system kind: {config.system}")
    if config.f not in FUNCTION_KINDS:
        raise ConfigError(f"Unknown sampling function: {config.f}")
    if config.f == "table" and not config.table:
        raise ConfigError("Sampling function 'table' requires the 'table' key")
    if config.law not in LAWS:
        raise ConfigError(f"Unknown law: {config.law}")
    if config.variant not in VARIANTS:
        raise ConfigError(f"Unknown variant: {config.variant}")
    if config.n < 1 or config.samples < 1 or config.trials < 1:
        raise ConfigError("n, samples and trials must be positive")
    if not 0 < config.sigma <= 0.25:
        raise ConfigError("sigma must lie in (0, 1/4]")
    if config.workers < 1:
        raise ConfigError("workers must be positive")
    if config.system == "skew-shift" and config.dimension < 1:
        raise ConfigError("skew-shift dimension must be positive")
    parse_grid(config.energies)
    parse_list(config.eps)


def parse_grid(spec: str) -> np.ndarray:
    """Parse ``lo:hi:count``, a comma list, or a single number."""

    spec = spec.strip()
    try:
        if ":" in spec:
            lo, hi, count = spec.split(":")
            n = int(count)
            if n < 1:
                raise ValueError(count)
            return np.linspace(float(lo), float(hi), n)
        return np.array([float(part) for part in spec.split(",") if part.strip()], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"Malformed grid specification: {spec!r}") from exc


def parse_list(spec: str) -> List[float]:
    try:
        return [float(part) for part in spec.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"Malformed list: {spec!r}") from exc


def _coerce(key: str, kind: Any, value: Any) -> Any:
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    if not isinstance(value, str):
        return value
    try:
        if kind == "bool":
            lowered = value.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(value)
        if kind == "int":
            return int(float(value)) if "e" in value.lower() else int(value)
        if kind == "float":
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"Invalid value for {key}: {value!r}") from exc
    return value


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)

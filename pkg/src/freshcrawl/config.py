"""Flat ``dotted.key = value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored. Lists are comma
separated; integer lists also accept ``a-b`` ranges (``seeds = 0-19``).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

SEED_ENV = "FRESHCRAWL_SEED"
_RANGE = re.compile(r"^(\d+)\s*-\s*(\d+)$")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def parse_int_list(text: str) -> list[int]:
    out: list[int] = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        m = _RANGE.match(tok)
        if m:
            a, b = int(m[1]), int(m[2])
            if b < a:
                raise ValueError(f"empty range {tok!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(tok))
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _path(text: str) -> Optional[str]:
    return text or None


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    "seeds": (parse_int_list, [0]),
    "population.users": (int, 5000),
    "population.users_per_machine": (int, 0),  # > 0 grows the population with the machine count
    "population.active_only": (_bool, False),
    "sim.architecture": (_choice("centralized", "distributed"), "centralized"),
    "sim.machines": (parse_int_list, [1]),
    "sim.model": (_choice("poisson", "hash", "rr"), "poisson"),
    "sim.duration": (int, 30),
    "sim.warmup_days": (int, 7),
    "sim.hash_weight": (float, 0.5),
    "sim.hash_warm_start": (_bool, False),
    "sim.span_threshold": (int, 720),
    "sim.hash_slots": (int, 24),
    "sim.retention": (int, 2000),
    "sim.split": (_choice("rr", "setdiv"), "rr"),
    "sim.rr_budget": (int, 0),  # 0 spends the full quota
    "quota.calls_per_window": (int, 350),
    "quota.window": (int, 60),
    "quota.messages_per_call": (int, 100),
    "partition.strategy": (_choice("rr", "halving", "setdiv", "random"), "rr"),
    "partition.k": (int, 2),
    "partition.epsilon": (float, 0.2),
    "schedule.capacity": (float, 100.0),
    "schedule.span_threshold": (int, 720),
    "schedule.weight": (float, 0.5),
    "output.runs": (_path, None),
    "output.summary": (_path, None),
    "output.trace": (_path, None),
}

POSITIVE = {
    "population.users", "sim.duration", "sim.hash_slots", "sim.retention",
    "quota.calls_per_window", "quota.window", "quota.messages_per_call",
    "partition.k", "schedule.capacity", "schedule.span_threshold",
}
NON_NEGATIVE = {"population.users_per_machine", "sim.warmup_days", "sim.rr_budget"}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    source: Optional[str] = None

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value):
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        self.values[key] = value

    @property
    def seeds(self) -> list[int]:
        return list(self.values["seeds"])

    def validate(self) -> "ExperimentConfig":
        v = self.values
        if not v["seeds"]:
            raise ConfigError("seeds", "seed list must not be empty")
        if not v["sim.machines"]:
            raise ConfigError("sim.machines", "machine list must not be empty")
        if any(m < 1 for m in v["sim.machines"]):
            raise ConfigError("sim.machines", "machine counts must be positive")
        for key in POSITIVE:
            if v[key] <= 0:
                raise ConfigError(key, "must be positive")
        for key in NON_NEGATIVE:
            if v[key] < 0:
                raise ConfigError(key, "must be non-negative")
        for key in ("sim.hash_weight", "schedule.weight"):
            if not 0 < v[key] < 1:
                raise ConfigError(key, "must lie strictly between 0 and 1")
        if v["partition.epsilon"] <= 0:
            raise ConfigError("partition.epsilon", "must be positive")
        for key in ("output.runs", "output.summary", "output.trace"):
            if v[key] is not None:
                check_writable(v[key], key)
        return self


def check_writable(path: str, key: str = "output"):
    p = Path(path)
    if p.exists():
        if p.is_dir() or not os.access(p, os.W_OK):
            raise ConfigError(key, f"path not writable: {path}")
        return
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise ConfigError(key, f"path not writable: {path}")


def parse_config(text: str, source: str = "<config>", env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Parse and validate; ``FRESHCRAWL_SEED`` in ``env`` replaces the seed list."""
    cfg = ExperimentConfig(source=source)
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, f"unknown key (line {lineno})")
        if key in seen:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        seen.add(key)
        parser, _ = SCHEMA[key]
        try:
            cfg.values[key] = parser(value)
        except ValueError as e:
            raise ConfigError(key, f"{e} (line {lineno})") from None
    apply_seed_env(cfg, env)
    return cfg.validate()


def apply_seed_env(cfg: ExperimentConfig, env: Optional[Mapping[str, str]] = None):
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw is None or not raw.strip():
        return
    try:
        cfg.values["seeds"] = parse_int_list(raw)
    except ValueError as e:
        raise ConfigError(SEED_ENV, str(e)) from None


def load_config(path: str, env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    return parse_config(text, path, env)

"""Experiment configuration: a strict, JSON-round-trippable record."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .chains import ChainKind, ChainSpec

__all__ = ["ConfigError", "ExperimentConfig"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    chain: str = "bernoulli"
    memory_K: int = 32
    functional: str = "linear_centered"
    n: int = 1 << 14
    paths: int = 1000
    seed: int = 42
    n0: int = 100
    eps_grid: list = field(default_factory=lambda: [2.0**-j for j in range(1, 13)])
    checkpoints: list | None = None
    condition: str | None = None
    delta: float = 0.5
    budget: int = 4096
    threads: int | None = None
    out_dir: str = "out"
    figures: bool = True
    n_grid: list = field(default_factory=lambda: [2**j for j in range(2, 11)])
    max_ops: int = 1 << 34

    def __post_init__(self) -> None:
        if self.chain not in ("bernoulli", "lebesgue"):
            raise ConfigError(f"unknown chain {self.chain!r}")
        if self.memory_K < 0:
            raise ConfigError("memory_K must be nonnegative")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.n0 < 3:
            raise ConfigError("n0 must be >= 3")
        if not self.eps_grid or any(e <= 0 for e in self.eps_grid):
            raise ConfigError("eps_grid must be positive")
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ConfigError("eps_grid must be strictly decreasing")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.budget < 8:
            raise ConfigError("budget must be >= 8")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def chain_spec(self) -> ChainSpec:
        if self.chain == "bernoulli":
            return ChainSpec(ChainKind.BERNOULLI)
        return ChainSpec(ChainKind.LEBESGUE, self.memory_K)

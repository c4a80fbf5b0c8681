"""Flat key-value run configuration.

Format: one `key = value` pair per line, `#` starts a comment, blank lines
ignored. Keys are dot-namespaced (`train.learning_rate`). Values are plain
strings; lists are comma-separated. Command-line `--set key=value` overrides
file entries. Environment variables are deliberately not consulted: a run is
reproducible from its config file and seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .util import DataError


class ConfigError(DataError):
    """Bad key, value, or syntax in a run configuration."""


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        cfg = RunConfig()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
                key, value = line.split("=", 1)
                cfg.values[key.strip()] = value.strip()
        return cfg

    def apply_overrides(self, pairs: list[str]) -> None:
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"--set expects key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            self.values[key.strip()] = value.strip()

    # typed getters ---------------------------------------------------------

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing required config key {key!r}")
        return self.values[key]

    def get_int(self, key: str, default: int) -> int:
        raw = self.values.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None

    def get_float(self, key: str, default: float) -> float:
        raw = self.values.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None

    def get_bool(self, key: str, default: bool) -> bool:
        raw = self.values.get(key)
        if raw is None:
            return default
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")

    def get_list(self, key: str, default: list[str] | None = None) -> list[str]:
        raw = self.values.get(key)
        if raw is None:
            return list(default or [])
        return [part.strip() for part in raw.split(",") if part.strip()]

    def get_floats(self, key: str, default: list[float]) -> list[float]:
        raw = self.values.get(key)
        if raw is None:
            return list(default)
        try:
            return [float(part) for part in raw.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated numbers, got {raw!r}") from None

    def resolved(self) -> dict[str, str]:
        """Stable snapshot for the run manifest."""
        return dict(sorted(self.values.items()))

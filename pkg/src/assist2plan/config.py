"""Flat key=value config files with CLI flag overrides.

Precedence: built-in default < config file < explicit flag. Each command
writes the effective configuration next to its outputs so a run can be
reproduced from the recorded config and seed alone.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional


def load_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def save_config(path, values: dict[str, Any]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={values[k]}" for k in sorted(values)]
    path.write_text("\n".join(lines) + "\n")


class Resolver:
    """Resolves option values from flag > config file > default."""

    def __init__(self, config: Optional[dict[str, str]] = None):
        self.config = config or {}
        self.effective: dict[str, Any] = {}

    def get(self, key: str, flag_value, default, cast=str):
        if flag_value is not None:
            value = flag_value
        elif key in self.config:
            raw = self.config[key]
            if cast is bool:
                value = raw.lower() in ("1", "true", "yes", "on")
            else:
                value = cast(raw)
        else:
            value = default
        self.effective[key] = value
        return value

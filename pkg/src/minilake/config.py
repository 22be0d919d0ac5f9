"""Warehouse configuration.

Settings come from minilake.conf at the warehouse root, one key=value
per line. Blank lines and #-comments are tolerated; unknown keys and
malformed lines are not, so typos fail loudly instead of silently
running with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigParseError

CONFIG_FILE = "minilake.conf"


@dataclass(frozen=True)
class Config:
    max_retries: int = 5
    target_file_size_bytes: int = 8388608
    gc_grace_ms: int = 86400000
    default_branch: str = "main"


_INT_KEYS = {"max_retries", "target_file_size_bytes", "gc_grace_ms"}
_STR_KEYS = {"default_branch"}


def parse_config(text: str) -> Config:
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _INT_KEYS:
            try:
                parsed: object = int(value)
            except ValueError:
                raise ConfigParseError(
                    f"line {line_no}: {key} needs an integer, got {value!r}"
                ) from None
            if parsed < 0:  # type: ignore[operator]
                raise ConfigParseError(f"line {line_no}: {key} must not be negative")
        elif key in _STR_KEYS:
            if not value:
                raise ConfigParseError(f"line {line_no}: {key} must not be empty")
            parsed = value
        else:
            raise ConfigParseError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigParseError(f"line {line_no}: duplicate key {key!r}")
        values[key] = parsed
    return replace(Config(), **values)  # type: ignore[arg-type]


def load_config(root: str | Path) -> Config:
    """Config for a warehouse root; absent file means all defaults."""
    path = Path(root) / CONFIG_FILE
    try:
        text = path.read_text("utf-8")
    except FileNotFoundError:
        return Config()
    return parse_config(text)


def config_keys() -> tuple[str, ...]:
    return tuple(f.name for f in fields(Config))

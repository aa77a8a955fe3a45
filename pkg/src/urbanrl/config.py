"""Flat ``key=value`` text files used for building, reward and agent settings."""

from __future__ import annotations

import dataclasses
import os
from typing import Any, Mapping, TypeVar

T = TypeVar("T")


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values or unreadable config files."""


def parse_kv_lines(lines, source: str = "<text>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_kv_lines(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def parse_overrides(items) -> dict[str, str]:
    """Parse repeated ``key=value`` command-line overrides."""
    return parse_kv_lines(items or [], source="--set")


def _coerce(value: str, kind: Any, key: str):
    try:
        if kind is bool or kind == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int or kind == "int":
            return int(value)
        if kind is float or kind == "float":
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def apply_kv(instance: T, values: Mapping[str, str]) -> T:
    """Return a copy of a dataclass instance with string values coerced onto its fields.

    Unknown keys raise :class:`ConfigError` naming the key.
    """
    fields = {f.name: f for f in dataclasses.fields(instance)}
    changes = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(
                f"unknown key {key!r}; valid keys: {', '.join(sorted(fields))}"
            )
        changes[key] = _coerce(value, fields[key].type, key)
    try:
        return dataclasses.replace(instance, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_kv(instance) -> str:
    lines = []
    for f in dataclasses.fields(instance):
        value = getattr(instance, f.name)
        lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"

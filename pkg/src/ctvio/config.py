"""Plain ``key = value`` configuration files.

Lines starting with ``#`` are comments. Values holding several numbers are
separated by commas and/or whitespace.
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigError

_SECTION = "config"


def parse_keyvalue(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), delimiters=("=", ":"))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return dict(parser[_SECTION])


def read_keyvalue(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_keyvalue(text)


def write_keyvalue(path, values: dict) -> None:
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)) or hasattr(value, "tolist"):
            value = " ".join(repr(float(v)) for v in list(getattr(value, "ravel", lambda: value)()))
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def get_float(values, key, default=None) -> float:
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return float(default)
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from exc


def get_floats(values, key, default=None) -> list[float]:
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return list(default)
    try:
        return [float(v) for v in values[key].replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {values[key]!r}") from exc


def get_bool(values, key, default: bool) -> bool:
    if key not in values:
        return default
    v = values[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {values[key]!r}")

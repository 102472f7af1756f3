"""Flat ``key = value`` experiment files.

Grammar, one entry per line::

    # comment
    key = value
    key = v1, v2, v3

Keys are case-insensitive and ``-`` is treated as ``_``.  Values are kept as
strings; callers convert them with :func:`as_float`, :func:`as_int` and
:func:`as_list`.  ``inf`` is accepted wherever a float is.  A key may appear
only once.
"""

from __future__ import annotations

import math
from pathlib import Path


class ConfigError(ValueError):
    pass


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def metadata_from_csv(text: str) -> dict[str, str]:
    """The ``# key = value`` header block of a curve file as a config."""
    lines = []
    for raw in text.splitlines():
        if not raw.startswith("#"):
            break
        lines.append(raw[1:])
    return parse_config("\n".join(lines), "<metadata>")


def as_float(value: str, key: str) -> float:
    text = value.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        out = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None
    if math.isnan(out):
        raise ConfigError(f"{key}: not a number: {value!r}")
    return out


def as_int(value: str, key: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {value!r}") from None


def as_list(value: str, key: str, convert=as_float) -> list:
    items = [v for v in (p.strip() for p in value.split(",")) if v]
    if not items:
        raise ConfigError(f"{key}: empty list")
    return [convert(v, key) for v in items]


def format_float(x: float) -> str:
    """Shortest text that reads back to the same float."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))

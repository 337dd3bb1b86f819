"""``key = value`` text encoding for flat dataclass configs."""
from __future__ import annotations

import dataclasses
import enum
from typing import Any, get_type_hints


class ConfigError(ValueError):
    pass


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in items:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        items[key] = value
    return items


def _convert(raw: str, typ: Any, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(typ, type) and issubclass(typ, enum.Enum):
            return typ[raw.upper()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(typ, '__name__', typ)}") from None


def build(cls, items: dict[str, str], prefix: str = ""):
    """Instantiate dataclass ``cls`` from string ``items``; unknown keys are errors."""
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(items) - names
    if unknown:
        raise ConfigError(f"unknown {prefix or cls.__name__} keys: {', '.join(sorted(prefix + k for k in unknown))}")
    kwargs = {k: _convert(v, hints[k], prefix + k) for k, v in items.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or cls.__name__}: {exc}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return value.name
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump(obj, prefix: str = "") -> str:
    return "".join(f"{prefix}{f.name} = {_format(getattr(obj, f.name))}\n"
                   for f in dataclasses.fields(obj))

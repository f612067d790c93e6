"""Flat ``key=value`` configuration shared by checkpoints and the command line."""

from __future__ import annotations

import dataclasses
import typing


class ConfigKeyError(ValueError):
    pass


def _field_type(cls, f):
    hints = typing.get_type_hints(cls)
    return hints.get(f.name, str)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    return str(v)


def parse_value(text: str, typ, default=None):
    text = text.strip()
    origin = typing.get_origin(typ)
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is tuple or origin is tuple:
        if not text:
            return ()
        items = [x.strip() for x in text.split(",")]
        sample = default[0] if default else None
        if isinstance(sample, float):
            return tuple(float(x) for x in items)
        return tuple(int(x) for x in items)
    return text


def dataclass_items(obj, prefix: str) -> list:
    return [(f"{prefix}.{f.name}", format_value(getattr(obj, f.name))) for f in dataclasses.fields(obj)]


def build_dataclass(cls, values: dict, prefix: str, base=None):
    """Instance of ``cls`` from ``{"prefix.field": "text"}`` over ``base``'s values."""
    base = base if base is not None else cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, text in values.items():
        name = key[len(prefix) + 1 :]
        if name not in known:
            raise ConfigKeyError(f"unknown configuration key {key!r}")
        typ = _field_type(cls, known[name])
        try:
            kw[name] = parse_value(text, typ, getattr(base, name))
        except ValueError as exc:
            raise ConfigKeyError(f"bad value for {key!r}: {exc}") from None
    try:
        return dataclasses.replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigKeyError(f"invalid {prefix} configuration: {exc}") from None


def parse_lines(lines, source="config") -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigKeyError(f"{source}:{n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigKeyError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def split_sections(values: dict, prefixes) -> dict:
    """Group dotted keys by prefix; keys with any other prefix are rejected."""
    groups = {p: {} for p in prefixes}
    for key, v in values.items():
        head = key.split(".", 1)[0]
        if head not in groups or "." not in key:
            raise ConfigKeyError(f"unknown configuration key {key!r}")
        groups[head][key] = v
    return groups

"""Dataclass configs built from string mappings (config files, CLI flags)."""

from __future__ import annotations

from dataclasses import MISSING, fields


def coerce(raw, default):
    """Parse ``raw`` into the type of ``default``; non-strings pass through."""
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.replace(" ", "").split(",") if v)
    return raw.strip()


def field_defaults(cls) -> dict:
    out = {}
    for f in fields(cls):
        if f.default is not MISSING:
            out[f.name] = f.default
        elif f.default_factory is not MISSING:
            out[f.name] = f.default_factory()
    return out


def from_mapping(cls, values: dict, strict: bool = True):
    """Instantiate ``cls`` from ``values``; unknown keys raise unless ``strict`` is off."""
    defaults = field_defaults(cls)
    kwargs = {}
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key not in defaults:
            if strict:
                raise ValueError(f"unknown config key {key!r}")
            continue
        kwargs[key] = coerce(raw, defaults[key])
    return cls(**kwargs)

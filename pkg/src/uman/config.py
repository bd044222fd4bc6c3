"""Line-oriented ``key = value`` config files for network, optimizer and loss settings."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .losses import LossConfig
from .network import NetworkConfig
from .train import OptimConfig

SECTIONS = (NetworkConfig, OptimConfig, LossConfig)


class ConfigError(ValueError):
    pass


def _owner_of(key: str):
    for cls in SECTIONS:
        for f in fields(cls):
            if f.name == key:
                return cls, f
    return None, None


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    if isinstance(default, dict):
        out = {}
        for item in raw.split(","):
            if not item.strip():
                continue
            k, sep, v = item.partition(":")
            if not sep:
                raise ValueError(f"expected group:multiplier, got {item!r}")
            out[k.strip()] = float(v)
        return out
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, dict):
        return ",".join(f"{k}:{v!r}" for k, v in value.items())
    return repr(value) if isinstance(value, float) else str(value)


def parse_config(text: str, base: NetworkConfig | None = None) -> tuple[NetworkConfig, OptimConfig, LossConfig]:
    """Parse config text. Unset network keys fall back to ``base`` (paper preset if None)."""
    base = base or NetworkConfig()
    defaults = {NetworkConfig: base, OptimConfig: OptimConfig(), LossConfig: LossConfig()}
    values: dict = {cls: {} for cls in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        cls, f = _owner_of(key)
        if cls is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values[cls]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[cls][key] = _parse_value(raw, getattr(defaults[cls], key))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        out = []
        for cls in SECTIONS:
            current = {f.name: getattr(defaults[cls], f.name) for f in fields(cls)}
            current.update(values[cls])
            out.append(cls(**current))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tuple(out)


def load_config(path, base: NetworkConfig | None = None):
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def dump_config(net: NetworkConfig, optim: OptimConfig, loss: LossConfig) -> str:
    lines = []
    for obj in (net, optim, loss):
        lines.append(f"# {type(obj).__name__}")
        lines.extend(f"{f.name} = {_format_value(getattr(obj, f.name))}" for f in fields(obj))
    return "\n".join(lines) + "\n"

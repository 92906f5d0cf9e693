"""Helpers for reading JSON configuration with field-path error messages."""
from __future__ import annotations

from typing import Any, Callable, Mapping

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


def join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def get(data: Mapping, key: str, path: str, cast: Callable = None, default: Any = REQUIRED):
    """Fetch ``data[key]``, apply ``cast`` and raise ConfigError on failure."""
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    here = join(path, key)
    if key not in data or data[key] is None:
        if default is REQUIRED:
            raise ConfigError(here, "missing required field")
        return default
    value = data[key]
    if cast is None:
        return value
    try:
        return cast(value)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(here, str(exc)) from None


def check_keys(data: Mapping, allowed, path: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(join(path, unknown[0]), "unknown field")


def seed_value(value) -> int:
    v = int(value)
    if isinstance(value, bool) or v != value or not 0 <= v < 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2^64), got {value!r}")
    return v

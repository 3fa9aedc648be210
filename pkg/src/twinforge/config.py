"""Strict conversion between nested dataclasses and plain JSON/YAML data."""

from __future__ import annotations

import dataclasses
import types
import typing
from typing import Any, Literal, Union

import numpy as np


class ConfigError(ValueError):
    """Bad configuration data; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


def to_plain(value: Any) -> Any:
    """Dataclasses, tuples and numpy values as JSON-compatible data."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def from_plain(cls: type, data: Any, path: str = "") -> Any:
    """Build ``cls`` from plain data, rejecting unknown keys and mistyped values.

    Missing keys take the dataclass defaults.
    """
    return _convert(cls, data, path)


def _convert(tp: Any, data: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if tp is Any:
        return data
    if dataclasses.is_dataclass(tp):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp) if f.init}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(path, f"unknown keys {unknown}")
        kwargs = {k: _convert(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
        try:
            return tp(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(path, str(exc)) from exc
    if origin in (Union, types.UnionType):
        if data is None and type(None) in args:
            return None
        errors = []
        for a in args:
            if a is type(None):
                continue
            try:
                return _convert(a, data, path)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(path, "; ".join(errors) or "value does not match")
    if origin is Literal:
        if data not in args:
            raise ConfigError(path, f"expected one of {list(args)}, got {data!r}")
        return data
    if origin is tuple:
        if not isinstance(data, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(data).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(data))
        if args and len(args) != len(data):
            raise ConfigError(path, f"expected {len(args)} items, got {len(data)}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, data))) if args else tuple(data)
    if origin is list:
        if not isinstance(data, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(data).__name__}")
        return [_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(data)] if args else list(data)
    if origin is dict:
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        kt, vt = args if args else (Any, Any)
        return {_convert(kt, k, path): _convert(vt, v, f"{path}.{k}") for k, v in data.items()}
    if tp is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ConfigError(path, f"expected a number, got {data!r}")
        return float(data)
    if tp is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise ConfigError(path, f"expected an integer, got {data!r}")
        return data
    if tp is bool:
        if not isinstance(data, bool):
            raise ConfigError(path, f"expected true or false, got {data!r}")
        return data
    if tp is str:
        if not isinstance(data, str):
            raise ConfigError(path, f"expected a string, got {data!r}")
        return data
    return data

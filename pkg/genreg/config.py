# genreg/config.py
# -*- coding: utf-8 -*-
"""Type coercion shared by every config dataclass."""

import logging
import typing
from typing import Any, Union

logger = logging.getLogger(__name__)

_NONE_STRINGS = ("none", "null", "")


def _field_type(obj, key: str):
    hints = typing.get_type_hints(type(obj))
    hint = hints.get(key)
    if typing.get_origin(hint) is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        return args[0] if len(args) == 1 else str, True
    return hint, False


def coerce_field(obj, key: str, value: Any) -> bool:
    """Set `obj.key` from a (possibly string) value, coercing to the field type.

    Returns False for unknown keys or values that fail to convert.
    """
    if key not in getattr(obj, "__dataclass_fields__", {}):
        return False

    target, optional = _field_type(obj, key)
    if target is None:
        target = type(getattr(obj, key))

    try:
        if optional and (value is None or str(value).strip().lower() in _NONE_STRINGS):
            value = None
        elif target is bool:
            value = value if isinstance(value, bool) else str(value).strip().lower() in ('true', '1', 'yes', 'on')
        elif target is int:
            value = int(value)
        elif target is float:
            value = float(value)
        elif target is str:
            value = str(value).strip()
        elif typing.get_origin(target) in (tuple, list):
            args = [a for a in typing.get_args(target) if a is not Ellipsis]
            element = args[0] if args else str
            items = value if isinstance(value, (list, tuple)) else str(value).split(",")
            converted = [element(str(v).strip()) for v in items if str(v).strip()]
            value = tuple(converted) if typing.get_origin(target) is tuple else converted
    except (ValueError, TypeError):
        return False

    setattr(obj, key, value)
    return True


class ConfigSection:
    """Mixin for dataclass config sections: dict round-trip plus coerced updates."""

    @classmethod
    def from_dict(cls, data: dict):
        """Create the section from a dictionary, ignoring unknown keys."""
        known_fields = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known_fields
        if unknown:
            logger.warning(f"Ignoring unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
        section = cls()
        for key, value in data.items():
            if key in known_fields and not section.update(key, value):
                logger.warning(f"Ignoring invalid value {value!r} for {cls.__name__}.{key}")
        return section

    def to_dict(self) -> dict:
        return {name: _plain(getattr(self, name)) for name in self.__dataclass_fields__}

    def update(self, key: str, value: Any) -> bool:
        """Update a single field with type coercion. Returns True if successful."""
        return coerce_field(self, key, value)


def _plain(value):
    if isinstance(value, tuple):
        return list(value)
    return value

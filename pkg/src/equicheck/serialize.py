"""Deterministic text serialization with 17-significant-digit decimals.

Python's json module cannot customize float formatting, and the wire/file
contracts here require >= 17 significant decimal digits, so this is a tiny
JSON emitter for the plain dict/list/scalar payloads used by this package.
Parsing stays with the stdlib json module.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

__all__ = ["format_float", "dumps_decimal"]


def format_float(x: float) -> str:
    if x != x:
        raise ValueError("NaN is not representable in the wire format")
    if x in (float("inf"), float("-inf")):
        raise ValueError("infinity is not representable in the wire format")
    return format(float(x), ".17g")


def dumps_decimal(obj: Any) -> str:
    """Compact JSON with floats rendered at 17 significant digits."""
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(obj: Any, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(format_float(float(obj)))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), parts)
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(",")
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            parts.append(json.dumps(k))
            parts.append(":")
            _emit(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(",")
            _emit(v, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")

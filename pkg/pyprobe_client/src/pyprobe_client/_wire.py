"""Deterministic JSON emission for the probe wire format.

The protocol requires floats at 17 significant digits (exact IEEE-double
round-trip) and compact separators, so responses are byte-reproducible.
The stdlib json module cannot customize float formatting, hence this tiny
emitter; parsing stays with the stdlib.
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

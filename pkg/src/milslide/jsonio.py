"""Deterministic JSON output: sorted keys, 17-significant-digit reals.

17 significant digits round-trip any float64 exactly, and the fixed key
order makes reruns byte-diffable. Non-finite reals are rejected (valid
JSON has no NaN/Infinity).
"""

from __future__ import annotations

import json
import math


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    text = format(x, ".17g")
    # keep floats distinguishable from ints so parse/serialize round-trips
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def _write(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {type(key).__name__}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_stable(obj) -> str:
    """Serialize to a canonical single-line JSON string plus newline."""
    out: list[str] = []
    _write(obj, out)
    out.append("\n")
    return "".join(out)

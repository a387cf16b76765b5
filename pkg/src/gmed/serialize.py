"""Deterministic JSON emission: floats carry 17 significant digits so every
double round-trips exactly and repeated runs produce identical bytes."""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    if x == int(x) and abs(x) < 1e16:
        # keep integral floats readable while staying exact
        return f"{x:.1f}"
    return format(x, ".17g")


def dumps(obj: Any, indent: int = 0) -> str:
    """Serialize nested dict/list/scalar structures to JSON text.

    Dict insertion order is preserved; numpy scalars and arrays are
    converted to their Python counterparts.
    """
    pad = " " * indent
    inner = " " * (indent + 2)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{inner}{json.dumps(str(key))}: {dumps(val, indent + 2)}'
            for key, val in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        items = [f"{inner}{dumps(val, indent + 2)}" for val in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    return json.dumps(obj)

"""Deterministic JSON with fixed 17-significant-digit floats."""

from __future__ import annotations

import math

import numpy as np


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return f"{v:.17g}"


def dumps_fixed(obj, indent: int = 2) -> str:
    """json.dumps lookalike: sorted keys, %.17g floats, numpy unwrapped."""
    out: list[str] = []
    _write(obj, out, indent, 0)
    return "".join(out) + "\n"


def _write(obj, out, indent, depth):
    pad = " " * (indent * depth)
    pad_in = " " * (indent * (depth + 1))
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        import json as _json
        out.append(_json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj.keys(), key=str)
        for i, k in enumerate(keys):
            out.append(pad_in)
            import json as _json
            out.append(_json.dumps(str(k)))
            out.append(": ")
            _write(obj[k], out, indent, depth + 1)
            out.append(",\n" if i + 1 < len(keys) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad_in)
            _write(v, out, indent, depth + 1)
            out.append(",\n" if i + 1 < len(seq) else "\n")
        out.append(pad + "]")
    else:
        _write(str(obj), out, indent, depth)

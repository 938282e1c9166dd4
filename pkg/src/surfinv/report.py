"""Versioned, canonical JSON reports.

Checks are stored as ``{"value", "tolerance", "pass"}`` and estimates as
``{"value", "error_bar"}`` so every number travels with its accuracy.
Serialisation sorts keys and uses ``repr`` floats, so equal inputs give
byte-identical files.  Wall-clock timings are only included on request
because they would break that guarantee.
"""
from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


def check(value, tolerance: float, passed: bool | None = None, **extra) -> dict:
    """A deviation-style entry: passes when ``value <= tolerance`` unless told otherwise."""
    value = float(value)
    if passed is None:
        passed = bool(value <= tolerance)
    out = {"value": value, "tolerance": float(tolerance), "pass": bool(passed)}
    out.update(extra)
    return out


def estimate(value, error_bar: float) -> dict:
    return {"value": value, "error_bar": float(error_bar)}


def failed_checks(obj, prefix: str = "") -> list[str]:
    """Dotted paths of every entry whose ``pass`` flag is false."""
    out = []
    if isinstance(obj, dict):
        if obj.get("pass") is False:
            out.append(prefix or "<root>")
        for k in sorted(obj):
            if k != "pass":
                out += failed_checks(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out += failed_checks(v, f"{prefix}[{i}]")
    return out


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; complex numbers become ``{"re", "im"}``, non-finite floats strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(float(obj.real)), "im": to_jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def new_report(kind: str, surface: dict, mesh_stats: dict | None = None, solver: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "surface": surface,
        "mesh": mesh_stats or {},
        "invariants": {},
        "checks": {},
        "solver": solver or {},
    }

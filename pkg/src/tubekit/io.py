"""JSON persistence for tube families and schema validation of input files."""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import SchemaError, TubekitError
from .tubes import DEFAULT_C0, TubeFamily
from .xray import VoxelSet, loads_vox


class NotFoundError(TubekitError, FileNotFoundError):
    code = "io.not_found"


def family_to_dict(f: TubeFamily) -> dict:
    return {"n": f.n, "delta": f.delta, "c0": f.c0,
            "tubes": [{"center": list(t.center), "direction": list(t.direction.unit_vector),
                       "height": t.height} for t in f.tubes]}


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def check_family_dict(d) -> dict | None:
    """First schema violation of a family document, or ``None``."""
    if not isinstance(d, dict):
        return {"path": "$", "message": "document must be an object"}
    for key in ("n", "delta", "tubes"):
        if key not in d:
            return {"path": f"$.{key}", "message": "missing field"}
    n = d["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        return {"path": "$.n", "message": "n must be an integer >= 2"}
    if not _num(d["delta"]) or d["delta"] <= 0:
        return {"path": "$.delta", "message": "delta must be a positive number"}
    c0 = d.get("c0", DEFAULT_C0)
    if not _num(c0) or not 0 < c0 < 1:
        return {"path": "$.c0", "message": "c0 must lie in (0, 1)"}
    if not isinstance(d["tubes"], list):
        return {"path": "$.tubes", "message": "tubes must be a list"}
    for i, t in enumerate(d["tubes"]):
        where = f"$.tubes[{i}]"
        if not isinstance(t, dict):
            return {"path": where, "tube": i, "message": "tube must be an object"}
        for key in ("center", "direction"):
            v = t.get(key)
            if not isinstance(v, list) or not all(_num(x) for x in v):
                return {"path": f"{where}.{key}", "tube": i, "message": f"{key} must be a list of numbers"}
            if len(v) != n:
                return {"path": f"{where}.{key}", "tube": i,
                        "message": f"{key} has dimension {len(v)}, expected {n}"}
        if not any(abs(x) > 0 for x in t["direction"]):
            return {"path": f"{where}.direction", "tube": i, "message": "direction must be nonzero"}
        hgt = t.get("height", 1.0)
        if not _num(hgt) or hgt <= 0:
            return {"path": f"{where}.height", "tube": i, "message": "height must be positive"}
    return None


def family_from_dict(d) -> TubeFamily:
    bad = check_family_dict(d)
    if bad:
        raise SchemaError(bad.pop("message"), **bad)
    tubes = d["tubes"]
    n = d["n"]
    if not tubes:
        return TubeFamily(n, float(d["delta"]), (), float(d.get("c0", DEFAULT_C0)))
    C = np.array([t["center"] for t in tubes], dtype=float)
    A = np.array([t["direction"] for t in tubes], dtype=float)
    H = np.array([t.get("height", 1.0) for t in tubes], dtype=float)
    return TubeFamily.from_arrays(C, A, float(d["delta"]), H, float(d.get("c0", DEFAULT_C0)))


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise NotFoundError("file not found", path=str(path))
    return p.read_text()


def load_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("invalid JSON", path=str(path), line=exc.lineno, column=exc.colno) from None


def load_family(path) -> TubeFamily:
    return family_from_dict(load_json(path))


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        p = Path(path)
        if p.parent and not p.parent.exists():
            os.makedirs(p.parent, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, p)
    return text


def save_family(f: TubeFamily, path) -> None:
    dump_json(family_to_dict(f), path)


def load_voxels(path) -> VoxelSet:
    return loads_vox(_read_text(path))


def validate_file(path) -> dict:
    """Validate a family JSON or VOX1 file; reports the first violation."""
    text = _read_text(path)
    if text.startswith("VOX1"):
        try:
            E = loads_vox(text)
        except SchemaError as exc:
            return {"ok": False, "kind": "vox", "file": str(path), "violation": exc.to_dict()}
        return {"ok": True, "kind": "vox", "file": str(path), "m": E.m, "shape": list(E.mask.shape)}
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        return {"ok": False, "kind": "unknown", "file": str(path),
                "violation": {"message": "neither VOX1 nor JSON", "line": exc.lineno}}
    bad = check_family_dict(d)
    if bad:
        return {"ok": False, "kind": "family", "file": str(path), "violation": bad}
    return {"ok": True, "kind": "family", "file": str(path), "tubes": len(d["tubes"])}

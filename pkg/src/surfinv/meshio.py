"""Versioned JSON serialisation of :class:`~surfinv.surface.TriMesh`.

The file is a single JSON object (see ``docs/formats.md``).  Floats are
written with ``repr`` precision, so a save/load round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .surface import MeshError, TriMesh

MESH_FORMAT = "surfinv-mesh"
MESH_VERSION = 1


def mesh_to_dict(mesh: TriMesh) -> dict:
    return {
        "format": MESH_FORMAT,
        "version": MESH_VERSION,
        "genus": int(mesh.genus),
        "descriptor": mesh.descriptor,
        "faces": mesh.faces.tolist(),
        "lengths": mesh.lengths.tolist(),
        "positions": mesh.positions.tolist(),
        "involution": None if mesh.involution is None else mesh.involution.tolist(),
        "branch_vertices": None if mesh.branch_vertices is None else list(mesh.branch_vertices),
    }


def mesh_from_dict(data: dict) -> TriMesh:
    if not isinstance(data, dict) or data.get("format") != MESH_FORMAT:
        raise MeshError("not a surfinv mesh file")
    if data.get("version") != MESH_VERSION:
        raise MeshError(f"unsupported mesh file version {data.get('version')!r}")
    try:
        faces = np.asarray(data["faces"], dtype=np.int64).reshape(-1, 3)
        lengths = np.asarray(data["lengths"], dtype=float).reshape(-1, 3)
        positions = np.asarray(data["positions"], dtype=float)
        genus = int(data["genus"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if len(faces) != len(lengths):
        raise MeshError("faces and lengths disagree in length")
    if len(faces) and (faces.min() < 0 or faces.max() >= len(positions)):
        raise MeshError("face indices out of range")
    return TriMesh(faces, lengths, positions, genus,
                   involution=data.get("involution"),
                   branch_vertices=data.get("branch_vertices"),
                   descriptor=dict(data.get("descriptor") or {}))


def save_mesh(mesh: TriMesh, path) -> None:
    Path(path).write_text(json.dumps(mesh_to_dict(mesh), sort_keys=True, separators=(",", ":")) + "\n")


def load_mesh(path) -> TriMesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: not valid JSON ({exc.msg})") from exc
    return mesh_from_dict(data)

import json

import numpy as np
import pytest

from surfinv.meshio import MESH_VERSION, load_mesh, mesh_to_dict, save_mesh
from surfinv.surface import MeshError, build_flat_torus


@pytest.mark.parametrize("which", ["torus", "g2_mesh"])
def test_round_trip_is_exact(which, request, tmp_path):
    mesh = request.getfixturevalue(which)
    path = tmp_path / "m.mesh"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.array_equal(back.lengths, mesh.lengths)
    assert np.array_equal(back.positions, mesh.positions)
    assert back.genus == mesh.genus
    assert back.descriptor == mesh.descriptor
    assert back.branch_vertices == mesh.branch_vertices
    if mesh.involution is None:
        assert back.involution is None
    else:
        assert np.array_equal(back.involution, mesh.involution)


def test_saved_file_is_deterministic(tmp_path):
    a, b = tmp_path / "a.mesh", tmp_path / "b.mesh"
    save_mesh(build_flat_torus(1j, 6, jitter=0.1, seed=3), a)
    save_mesh(build_flat_torus(1j, 6, jitter=0.1, seed=3), b)
    assert a.read_bytes() == b.read_bytes()


def test_wrong_format_and_version(tmp_path, torus):
    p = tmp_path / "x.mesh"
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(MeshError, match="not a surfinv mesh"):
        load_mesh(p)
    d = mesh_to_dict(torus)
    d["version"] = MESH_VERSION + 1
    p.write_text(json.dumps(d))
    with pytest.raises(MeshError, match="version"):
        load_mesh(p)


def test_malformed_content(tmp_path, torus):
    p = tmp_path / "x.mesh"
    p.write_text("{not json")
    with pytest.raises(MeshError, match="JSON"):
        load_mesh(p)
    d = mesh_to_dict(torus)
    d["faces"][0][0] = 10**6
    p.write_text(json.dumps(d))
    with pytest.raises(MeshError, match="out of range"):
        load_mesh(p)

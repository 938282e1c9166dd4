"""Discrete Hodge theory on closed triangulated surfaces.

Builds flat tori and hyperelliptic double covers, computes harmonic and
holomorphic 1-forms, the Arakelov Green function, the Kawazumi-Zhang
invariant and the harmonic volume (Ceresa cycle coordinates).
"""
from .conventions import tolerances
from .surface import (HomologyBasis, MeshError, TriMesh, build_flat_torus,
                      build_hyperelliptic_cover, homology_basis, symplectic_reduce,
                      validate_mesh)

__version__ = "0.1.0"

__all__ = [
    "HomologyBasis", "MeshError", "TriMesh", "build_flat_torus", "build_hyperelliptic_cover",
    "homology_basis", "symplectic_reduce", "tolerances", "validate_mesh",
]

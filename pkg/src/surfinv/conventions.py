"""Sign conventions and tolerance profiles.

Every sign choice the numerics depend on is listed here once.

=====================  ==================================================
quantity               convention
=====================  ==================================================
orientation            faces are counter-clockwise in their chart
d0                     (d0 f)(i->j) = f[j] - f[i], edges stored with i < j
Laplacian              L0 = d0^T W d0, positive semidefinite
``d * d`` on functions  equals ``-L0`` (integrated over dual cells)
Hodge star, 1-forms    cotangent weights; ``*dx = dy``, so ``dx + i*dx = dz``
wedge of 1-cochains    antisymmetrised cup product (Whitney)
intersection form      ``int lambda_i ^ lambda_j`` of the dual cocycle basis
                       equals ``M^{-T}``; symplectic form is [[0, I], [-I, 0]]
Poincare duality       PD(phi) is the class with ``int_PD(phi) theta =
                       int phi ^ theta``
iterated integral      Chen order: ``int phi1 phi2`` integrates phi1 first
coexact potential      ``d eta = -(phi1 ^ phi2)``
Abel-Jacobi            ``AJ(y - x) = int_x^y lambda``, reduced mod 1
=====================  ==================================================
"""
from __future__ import annotations

import json
import os
from functools import lru_cache
from importlib import resources

TOLERANCE_ENV = "SURFINV_TOL_PROFILE"

SYMPLECTIC_SIGN = 1


def symplectic_form(g: int):
    import numpy as np

    J = np.zeros((2 * g, 2 * g), dtype=np.int64)
    J[:g, g:] = np.eye(g, dtype=np.int64)
    J[g:, :g] = -np.eye(g, dtype=np.int64)
    return J


@lru_cache(maxsize=None)
def _profiles() -> dict:
    text = resources.files("surfinv.data").joinpath("tolerances.json").read_text()
    return json.loads(text)


def profile_names() -> list[str]:
    return sorted(_profiles())


def tolerances(profile: str | None = None, **overrides) -> dict:
    """Resolve a tolerance profile; unknown profile names raise ``KeyError``.

    Non-default profiles only list the keys they change.
    """
    profiles = _profiles()
    name = profile or os.environ.get(TOLERANCE_ENV, "default")
    if name not in profiles:
        raise KeyError(f"unknown tolerance profile {name!r}")
    tol = dict(profiles["default"])
    tol.update(profiles[name])
    tol.update({k: v for k, v in overrides.items() if v is not None})
    tol["profile"] = name
    return tol

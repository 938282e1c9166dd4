"""Chen iterated integrals, the pointed harmonic volume and Abel-Jacobi classes.

Coordinates are taken against the symplectic loops ``l_1..l_2g`` and their
dual harmonic cochains ``lambda_1..lambda_2g`` (``int_{l_k} lambda_j = delta``).
Points of ``J = H_R / H_Z`` are vectors in ``[0, 1)^(2g)``; points of ``J_1``
are indexed by sorted triples ``a < b < c`` standing for ``l_a ^ l_b ^ l_c``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
import scipy.sparse.linalg as spla

from .conventions import symplectic_form
from .hodge import HodgeBases, exterior_derivative
from .surface import MeshError, TriMesh, wedge_faces


def circle_distance(a, b=0.0) -> np.ndarray:
    """Per-coordinate distance on ``R / Z``."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0)
    return np.minimum(d, 1.0 - d)


@dataclass
class JacobianPoint:
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.mod(np.asarray(self.coords, dtype=float), 1.0)

    def distance(self, other: "JacobianPoint") -> float:
        return float(circle_distance(self.coords, other.coords).max(initial=0.0))


@dataclass
class HarmonicVolumeValue:
    """``coords[k]`` is ``I(lambda_a ^ lambda_b ^ lambda_c)`` mod 1 for ``triples[k]``."""

    coords: np.ndarray
    triples: list[tuple[int, int, int]]
    base: int
    lift_deviation: float = 0.0
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.raw is None:
            self.raw = np.asarray(self.coords, dtype=float)
        self.coords = np.mod(np.asarray(self.coords, dtype=float), 1.0)


def wedge3_basis(g: int) -> list[tuple[int, int, int]]:
    return list(combinations(range(2 * g), 3))


# ------------------------------------------------------ lattice algebra

def intersection_pairing_k(k: int, a, b, g: int | None = None) -> float:
    """``M_k(a, b) = det(M(a_i, b_j))`` for wedge words of ``2k + 1`` basis indices.

    ``a`` and ``b`` are sequences of (0-based) loop indices.
    """
    a, b = list(a), list(b)
    if len(a) != 2 * k + 1 or len(b) != 2 * k + 1:
        raise ValueError(f"wedge degree must be {2 * k + 1} for k={k}")
    g = g if g is not None else (max(a + b) // 2 + 1)
    M = symplectic_form(g)
    return float(round(np.linalg.det(M[np.ix_(a, b)].astype(float))))


def _pairing_index(g: int):
    M = symplectic_form(g)
    return lambda a, b: int(M[a, b])


def contraction(v: np.ndarray, g: int, exact: bool = False) -> np.ndarray:
    """``c(a ^ b ^ c) = M(a,b) c + M(b,c) a + M(c,a) b`` on ``wedge3_basis(g)`` coordinates."""
    M = _pairing_index(g)
    out = [Fraction(0)] * (2 * g) if exact else np.zeros(2 * g)
    for coef, (a, b, c) in zip(v, wedge3_basis(g)):
        if coef == 0:
            continue
        for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
            m = M(p, q)
            if m:
                out[r] = out[r] + m * coef
    return np.array(out, dtype=object) if exact else np.asarray(out)


def embed_j_in_j1(p, g: int | None = None, exact: bool = False) -> np.ndarray:
    """Coordinates of ``p ^ omega`` with ``omega = sum_i l_i ^ l_{g+i}``."""
    coords = p.coords if isinstance(p, JacobianPoint) else p
    g = g if g is not None else len(coords) // 2
    m = lambda x, y: 1 if y == x + g else 0
    out = []
    for a, b, c in wedge3_basis(g):
        out.append(coords[a] * m(b, c) - coords[b] * m(a, c) + coords[c] * m(a, b))
    return np.array(out, dtype=object) if exact else np.asarray(out, dtype=float)


# -------------------------------------------------------- line integrals

def line_integral(mesh: TriMesh, form: np.ndarray, path) -> np.ndarray:
    ids, signs = mesh.path_steps(path)
    return (form[..., ids] * signs).sum(axis=-1)


def abel_jacobi(bases: HodgeBases, x: int, y: int, path=None) -> JacobianPoint:
    """Class of ``y - x``: integrals of the dual harmonic basis from ``x`` to ``y``."""
    mesh = bases.mesh
    if path is None:
        path = mesh.shortest_path(int(x), int(y))
    path = [int(v) for v in path]
    if path[0] != x or path[-1] != y:
        raise MeshError("path endpoints do not match x and y")
    return JacobianPoint(line_integral(mesh, bases.harmonic.alphas, path))


def iterated_integral(mesh: TriMesh, phi1: np.ndarray, phi2: np.ndarray,
                      eta: np.ndarray | None, loop) -> float:
    """Chen integral of ``phi1 phi2`` along an edge loop (``phi1`` first) plus ``int eta``.

    Per edge ``k``: ``phi2(e_k) * (sum_{j<k} phi1(e_j) + phi1(e_k) / 2)``.
    """
    loop = [int(v) for v in loop]
    if loop[0] != loop[-1]:
        raise MeshError("iterated integral needs a closed loop")
    return chen_sum(mesh, phi1, phi2, loop) + (0.0 if eta is None else float(line_integral(mesh, eta, loop)))


def chen_sum(mesh: TriMesh, phi1, phi2, path) -> float:
    if len(path) < 2:
        return 0.0
    ids, signs = mesh.path_steps(path)
    a = phi1[ids] * signs
    b = phi2[ids] * signs
    before = np.cumsum(a) - a
    return float(np.sum(b * (before + 0.5 * a)))


# -------------------------------------------------------- coexact forms

class CoexactSolver:
    """``eta`` with ``d1 eta = omega``, co-closed and wedge-orthogonal to harmonics."""

    def __init__(self, bases: HodgeBases):
        self.bases = bases
        mesh = bases.mesh
        self.d1 = exterior_derivative(1, mesh).astype(float).tocsr()
        Ld = (self.d1 @ self.d1.T).tocsc()
        self._lu = spla.splu(Ld[1:, 1:].tocsc())
        self._cache: dict = {}

    def __call__(self, omega: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if abs(omega.sum()) > tol * max(1.0, np.abs(omega).sum()):
            raise ValueError(f"2-form has nonzero total integral {omega.sum():.3e}")
        s = np.zeros(len(omega))
        s[1:] = self._lu.solve(omega[1:] - omega.sum() / len(omega))
        eta = self.d1.T @ s
        h = self.bases.harmonic
        solver = h.solver
        f = solver.solve(solver.d0.T @ (solver.w * eta))
        eta = eta - solver.d0 @ f
        A = h.alphas
        if len(A):
            b = np.array([wedge_faces(self.bases.mesh, eta, A[j]).sum() for j in range(len(A))])
            c = np.linalg.solve(h.wedge.T, b)
            eta = eta - c @ A
        return eta

    def pair(self, i: int, j: int) -> np.ndarray:
        """Cached ``eta_ij`` with ``d eta_ij = -lambda_i ^ lambda_j``."""
        key = (i, j)
        if key not in self._cache:
            A = self.bases.harmonic.alphas
            om = -wedge_faces(self.bases.mesh, A[i], A[j])
            self._cache[key] = self(om)
        return self._cache[key]


def coexact_potential(bases: HodgeBases, omega: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    return CoexactSolver(bases)(omega, tol)


# ------------------------------------------------------ harmonic volume

def poincare_dual_loop(loops: list[list[int]], c: int, g: int) -> list[int]:
    """Loop ``gamma`` with ``int_gamma theta = int lambda_c ^ theta``."""
    if c < g:
        return list(loops[g + c])
    return list(loops[c - g])[::-1]


def rebase_loops(mesh: TriMesh, loops: list[list[int]], root: int, x: int) -> list[list[int]]:
    """Conjugate root-based loops to ``x`` by a fixed shortest edge path."""
    if x == root:
        return [list(l) for l in loops]
    p = mesh.shortest_path(int(x), int(root))
    return [p + list(l)[1:] + p[::-1][1:] for l in loops]


def _rotations(a: int, b: int, c: int, g: int):
    """Cyclic rotations whose first two entries are not a symplectic pair."""
    out = []
    for r in ((a, b, c), (b, c, a), (c, a, b)):
        if abs(r[0] - r[1]) != g:
            out.append(r)
    return out


def harmonic_volume(bases: HodgeBases, x: int, loops: list[list[int]] | None = None,
                    coexact: CoexactSolver | None = None) -> HarmonicVolumeValue:
    """Pointed harmonic volume ``I(x)`` on the basis of ``wedge^3``.

    For ``lambda_a ^ lambda_b ^ lambda_c`` a cyclic rotation ``(p, q, r)`` with
    ``int lambda_p ^ lambda_q = 0`` is lifted to ``lambda_p (x) lambda_q (x) lambda_r``
    and evaluated as ``int_{PD(lambda_r)} (lambda_p lambda_q + eta_pq)``.
    """
    mesh = bases.mesh
    g = bases.genus
    hom = bases.harmonic.homology
    if loops is None:
        loops = rebase_loops(mesh, hom.loops, hom.root, x)
    if any(int(l[0]) != x or int(l[-1]) != x for l in loops):
        raise MeshError(f"loop system is not based at vertex {x}")
    coexact = coexact or CoexactSolver(bases)
    A = bases.harmonic.alphas
    triples = wedge3_basis(g)
    vals, dev = [], 0.0
    for a, b, c in triples:
        got = []
        for p, q, r in _rotations(a, b, c, g):
            loop = poincare_dual_loop(loops, r, g)
            got.append(iterated_integral(mesh, A[p], A[q], coexact.pair(p, q), loop))
        vals.append(got[0])
        if len(got) > 1:
            dev = max(dev, float(circle_distance(np.array(got[1:]), got[0]).max()))
    return HarmonicVolumeValue(np.array(vals), triples, int(x), dev, raw=np.array(vals))


def weierstrass_vertices(mesh: TriMesh) -> tuple[int, ...]:
    if not mesh.branch_vertices:
        raise MeshError("mesh carries no Weierstrass (branch) vertices")
    return mesh.branch_vertices


def ceresa_checks(bases: HodgeBases, n_pairs: int = 10, seed: int = 0,
                  tol: float = 1e-3) -> dict:
    """Torsion, contraction and difference identities on a hyperelliptic fixture."""
    g = bases.genus
    mesh = bases.mesh
    if g < 2:
        return {"genus": g, "vacuous": True,
                "note": "wedge^3 of a rank-2 lattice is zero; harmonic volume is empty"}
    coex = CoexactSolver(bases)
    ws = weierstrass_vertices(mesh)
    w = ws[0]
    Iw = harmonic_volume(bases, w, coexact=coex)
    torsion = float(circle_distance(2 * Iw.raw).max())
    aj_w = [float(circle_distance(2 * abel_jacobi(bases, w, v).coords).max()) for v in ws[1:]]
    rng = np.random.default_rng(seed)
    cand = np.setdiff1d(np.arange(mesh.n_vertices), ws)
    picks = rng.choice(cand, size=(n_pairs, 2), replace=False) if len(cand) >= 2 * n_pairs else \
        rng.choice(cand, size=(n_pairs, 2))
    cache: dict[int, HarmonicVolumeValue] = {w: Iw}

    def I(v):
        v = int(v)
        if v not in cache:
            cache[v] = harmonic_volume(bases, v, coexact=coex)
        return cache[v]

    contr_dev, diff_dev, diff_dev_rev, lift_dev = [], [], [], [Iw.lift_deviation]
    for x, y in picks:
        Ix, Iy = I(x), I(y)
        lift_dev += [Ix.lift_deviation, Iy.lift_deviation]
        lhs = contraction(2 * Ix.raw, g)
        rhs = (2 * g - 2) * abel_jacobi(bases, w, int(x)).coords
        contr_dev.append(float(circle_distance(lhs, rhs).max()))
        aj_xy = abel_jacobi(bases, int(y), int(x)).coords   # class of x - y
        d = Ix.raw - Iy.raw
        diff_dev.append(float(circle_distance(d, embed_j_in_j1(aj_xy, g)).max()))
        diff_dev_rev.append(float(circle_distance(d, embed_j_in_j1(-aj_xy, g)).max()))
    ci = contraction_embedding_identity(g)
    return {
        "genus": g,
        "vacuous": False,
        "weierstrass_vertex": int(w),
        "torsion_2I_w_max_dev": torsion,
        "torsion_2AJ_ww_max_dev": max(aj_w) if aj_w else 0.0,
        "contraction_identity_max_dev": max(contr_dev),
        "difference_identity_max_dev": max(diff_dev),
        "difference_identity_reversed_max_dev": max(diff_dev_rev),
        "lift_independence_max_dev": max(lift_dev),
        "contraction_embedding_exact": ci,
        "pairs": [[int(x), int(y)] for x, y in picks],
        "tolerance": tol,
        "pass": bool(torsion <= tol and max(contr_dev) <= tol and max(diff_dev) <= tol and ci),
    }


def contraction_embedding_identity(g: int) -> bool:
    """``c(i(e_k)) = (g - 1) e_k`` for every basis vector, in exact arithmetic."""
    for k in range(2 * g):
        e = [Fraction(int(j == k)) for j in range(2 * g)]
        img = contraction(embed_j_in_j1(e, g, exact=True), g, exact=True)
        if list(img) != [Fraction(g - 1) * x for x in e]:
            return False
    return True

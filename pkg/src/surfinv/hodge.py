"""Discrete exterior calculus on a :class:`~surfinv.surface.TriMesh`.

Cochains live on vertices, edges and faces.  The wedge of two 1-cochains is
the antisymmetrised Whitney (cup) product, the degree-1 star is the cotangent
weight, and harmonic representatives are obtained by removing the exact part
of an integer cocycle with one Poisson solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .surface import HomologyBasis, MeshError, TriMesh, wedge_faces, wedge_matrix


class SolverError(RuntimeError):
    """A linear solve did not reach its residual tolerance."""


@dataclass(eq=False)
class Cochain:
    """Values on the ``degree``-simplices of ``mesh``."""

    mesh: TriMesh
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        n = (self.mesh.n_vertices, self.mesh.n_edges, self.mesh.n_faces)[self.degree]
        if self.values.shape[-1] != n:
            raise ValueError(f"degree-{self.degree} cochain needs {n} values, got {self.values.shape[-1]}")

    def __add__(self, other):
        _same_mesh(self, other)
        return Cochain(self.mesh, self.degree, self.values + other.values)

    def __mul__(self, c):
        return Cochain(self.mesh, self.degree, self.values * c)

    __rmul__ = __mul__


def _same_mesh(a: Cochain, b: Cochain):
    if a.mesh is not b.mesh:
        raise ValueError("cochains live on different meshes")


def exterior_derivative(degree: int, mesh: TriMesh) -> sp.csr_matrix:
    """Signed incidence matrix ``d0`` (E x V) or ``d1`` (F x E)."""
    if degree == 0:
        E = mesh.n_edges
        rows = np.repeat(np.arange(E), 2)
        cols = mesh.edges.ravel()
        vals = np.tile([-1, 1], E)
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, mesh.n_vertices), dtype=np.int64)
    if degree == 1:
        F = mesh.n_faces
        rows = np.repeat(np.arange(F), 3)
        return sp.csr_matrix((mesh.face_edge_signs.ravel(), (rows, mesh.face_edges.ravel())),
                             shape=(F, mesh.n_edges), dtype=np.int64)
    raise ValueError("exterior derivative is defined for degree 0 or 1")


def _check_faces(mesh: TriMesh):
    l = mesh.lengths
    bad = (mesh.face_areas <= 1e-14 * np.max(l) ** 2) | (l.min(axis=1) <= 0)
    if bad.any():
        raise MeshError(f"{int(bad.sum())} degenerate (zero-area) triangles, first face {int(np.argmax(bad))}")


def cotan_weights(mesh: TriMesh) -> np.ndarray:
    """``(cot a + cot b) / 2`` per edge from the two opposite corner angles."""
    _check_faces(mesh)
    l01, l12, l20 = mesh.lengths.T
    area = mesh.face_areas
    # cot of the angle opposite edge k: (sum of squares of the other two - own^2) / (4 area)
    sq = mesh.lengths**2
    tot = sq.sum(axis=1, keepdims=True)
    cot_opp = (tot - 2 * sq) / (4 * area[:, None])
    w = np.zeros(mesh.n_edges)
    np.add.at(w, mesh.face_edges.ravel(), 0.5 * cot_opp.ravel())
    return w


def hodge_star(degree: int, mesh: TriMesh) -> np.ndarray:
    """Diagonal of the discrete star: dual areas, cotangent weights, inverse areas."""
    _check_faces(mesh)
    if degree == 0:
        out = np.zeros(mesh.n_vertices)
        np.add.at(out, mesh.faces.ravel(), np.repeat(mesh.face_areas / 3.0, 3))
        return out
    if degree == 1:
        return cotan_weights(mesh)
    if degree == 2:
        return 1.0 / mesh.face_areas
    raise ValueError("hodge star is defined for degree 0, 1 or 2")


def wedge_integral(alpha: Cochain, beta: Cochain):
    """``int alpha ^ beta`` for two 1-cochains on the same mesh."""
    _same_mesh(alpha, beta)
    if alpha.degree != 1 or beta.degree != 1:
        raise ValueError("wedge_integral expects 1-cochains")
    return wedge_faces(alpha.mesh, alpha.values, beta.values).sum(axis=-1)


class PoissonSolver:
    """Factorised cotangent Laplacian ``L0 = d0^T W d0`` grounded at vertex 0.

    ``solve(b)`` returns the mean-free (area-unweighted) solution of
    ``L0 u = b`` for right-hand sides summing to zero.  The factorisation is
    built once and only read afterwards, so concurrent solves are safe.
    """

    def __init__(self, mesh: TriMesh, rtol: float = 1e-10):
        self.mesh = mesh
        self.rtol = rtol
        self.d0 = exterior_derivative(0, mesh).astype(float)
        self.w = cotan_weights(mesh)
        self.L = (self.d0.T @ sp.diags(self.w) @ self.d0).tocsc()
        self._lu = spla.splu(self.L[1:, 1:].tocsc())

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        flat = b.ndim == 1
        B = b[:, None] if flat else b
        if np.iscomplexobj(B):
            U = self._solve_real(B.real) + 1j * self._solve_real(B.imag)
        else:
            U = self._solve_real(B)
        return U[:, 0] if flat else U

    def _solve_real(self, B):
        B = B - B.mean(axis=0, keepdims=True)
        U = np.zeros_like(B, dtype=float)
        U[1:] = self._lu.solve(np.ascontiguousarray(B[1:]))
        U -= U.mean(axis=0, keepdims=True)
        res = np.linalg.norm(self.L @ U - B, axis=0)
        scale = np.maximum(np.linalg.norm(B, axis=0), 1e-300)
        if np.any(res > self.rtol * scale + 1e-13):
            raise SolverError(f"Poisson residual {float((res / scale).max()):.2e} exceeds {self.rtol:g}")
        return U


@dataclass(eq=False)
class HarmonicForms:
    """Harmonic representatives ``alphas[j]`` of the dual cocycles.

    ``wedge[i, j] = int alpha_i ^ alpha_j`` and ``inner[i, j]`` is the
    ``L2`` product; ``star = wedge^{-1} inner`` acts on coefficient vectors.
    """

    mesh: TriMesh
    homology: HomologyBasis
    alphas: np.ndarray
    wedge: np.ndarray
    inner: np.ndarray
    closed_residual: float
    coclosed_residual: float
    solver: PoissonSolver = field(repr=False)

    @property
    def genus(self) -> int:
        return len(self.alphas) // 2

    @cached_property
    def star(self) -> np.ndarray:
        return np.linalg.solve(self.wedge, self.inner)

    def periods(self) -> np.ndarray:
        """``P[j, k] = int_{loop k} alpha_j``."""
        return self.alphas @ self.homology.chains.T

    def __len__(self):
        return len(self.alphas)


def harmonic_basis(mesh: TriMesh, basis: HomologyBasis, rtol: float = 1e-10,
                   solver: PoissonSolver | None = None) -> HarmonicForms:
    """Closed and co-closed 1-cochains with periods ``delta_jk`` on ``basis``."""
    solver = solver or PoissonSolver(mesh, rtol)
    Z = basis.cocycles.astype(float)
    n = len(Z)
    if n == 0:
        A = np.zeros((0, mesh.n_edges))
    else:
        rhs = solver.d0.T @ (solver.w[:, None] * Z.T)
        f = solver.solve(rhs)
        A = Z - (solver.d0 @ f).T
    d1 = exterior_derivative(1, mesh)
    scale = max(1.0, float(np.abs(Z).max())) if n else 1.0
    closed = float(np.abs(d1 @ A.T).max()) / scale if n else 0.0
    div = solver.d0.T @ (solver.w[:, None] * A.T) if n else np.zeros(1)
    ref = np.abs(solver.d0.T @ (solver.w[:, None] * Z.T)).max() if n else 1.0
    coclosed = float(np.abs(div).max() / max(ref, 1e-300)) if n else 0.0
    Q = wedge_matrix(mesh, A)
    H = (A * solver.w) @ A.T
    return HarmonicForms(mesh, basis, A, Q, H, closed, coclosed, solver)


@dataclass(eq=False)
class PeriodMatrix:
    """Normalised period matrix ``tau`` (a-periods equal to the identity)."""

    tau: np.ndarray
    a_periods: np.ndarray
    b_periods: np.ndarray

    @property
    def symmetry_defect(self) -> float:
        return float(np.abs(self.tau - self.tau.T).max())

    @property
    def min_imag_eig(self) -> float:
        im = 0.5 * (self.tau.imag + self.tau.imag.T)
        return float(np.linalg.eigvalsh(im).min())


@dataclass(eq=False)
class HodgeBases:
    """Harmonic forms plus an orthonormal holomorphic basis ``psi_1..psi_g``.

    ``coeffs[i]`` expresses ``psi_i`` in the harmonic basis, so edge values are
    ``coeffs @ harmonic.alphas``.  ``gram`` is the Gram matrix of the
    un-normalised forms.
    """

    harmonic: HarmonicForms
    coeffs: np.ndarray
    gram: np.ndarray
    gram_after: np.ndarray
    star_defect: float
    periods: PeriodMatrix | None = None

    @property
    def mesh(self) -> TriMesh:
        return self.harmonic.mesh

    @property
    def genus(self) -> int:
        return self.harmonic.genus

    @cached_property
    def holomorphic(self) -> np.ndarray:
        return self.coeffs @ self.harmonic.alphas


def holomorphic_basis(harmonic: HarmonicForms) -> HodgeBases:
    """Build ``psi_j = alpha_j + i * (star alpha_j)`` for ``j <= g`` and orthonormalise."""
    g = harmonic.genus
    T = harmonic.star
    Q = harmonic.wedge
    eye = np.eye(2 * g)
    C = (eye[:g] + 1j * (T @ eye[:, :g]).T) if g else np.zeros((0, 0), dtype=complex)
    G = 0.5j * (C @ Q @ C.conj().T)
    if g:
        G = 0.5 * (G + G.conj().T)
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise MeshError("holomorphic Gram matrix is not positive definite") from exc
        C2 = np.linalg.solve(L, C)
    else:
        C2 = C
    G2 = 0.5j * (C2 @ Q @ C2.conj().T)
    defect = _star_defect(harmonic, C2)
    bases = HodgeBases(harmonic, C2, G, G2, defect)
    bases.periods = period_matrix(bases, harmonic.homology)
    return bases


def _star_defect(harmonic: HarmonicForms, C: np.ndarray) -> float:
    """Largest relative ``L2`` norm of ``*psi + i psi`` over the basis."""
    if len(C) == 0:
        return 0.0
    H = harmonic.inner
    D = C @ harmonic.star.T + 1j * C
    num = np.einsum("ij,jk,ik->i", D.conj(), H, D).real
    den = np.einsum("ij,jk,ik->i", C.conj(), H, C).real
    return float(np.sqrt(np.max(num / den)))


def period_matrix(bases: HodgeBases, basis: HomologyBasis | None = None) -> PeriodMatrix:
    """Periods of ``psi`` on the (reduced) loops, normalised on the a-cycles."""
    g = bases.genus
    basis = basis or bases.harmonic.homology
    P = bases.holomorphic @ basis.chains.T
    Pa, Pb = P[:, :g], P[:, g:]
    if g and np.linalg.cond(Pa) > 1e12:
        raise MeshError("a-period matrix is singular")
    tau = np.linalg.solve(Pa, Pb) if g else np.zeros((0, 0), dtype=complex)
    return PeriodMatrix(tau, Pa, Pb)


def compute_bases(mesh: TriMesh, rtol: float = 1e-10, root: int = 0) -> HodgeBases:
    """Homology, harmonic and holomorphic bases in one call."""
    from .surface import default_homology

    hom = default_homology(mesh, root)
    return holomorphic_basis(harmonic_basis(mesh, hom, rtol))

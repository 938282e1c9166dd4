"""Arakelov volume form, Green operator and the Kawazumi-Zhang invariant.

Two-forms are stored as face integrals and lumped to vertices (one third of
each face per corner) before they meet the Laplacian.  With ``P = I - 1 mu^T``
the Green operator is ``Phi(Omega) = -P L^+ P^T Omega``, so the discrete kernel
``log G = -2 pi P L^+ P^T`` is exactly symmetric and mu-normalised.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hodge import HodgeBases, PoissonSolver
from .surface import MeshError, TriMesh, wedge_faces


class GreenError(RuntimeError):
    """Green-function evaluation failed its precision contract."""


def lump(mesh: TriMesh, face_values: np.ndarray) -> np.ndarray:
    """Distribute face integrals to vertices, one third per corner."""
    face_values = np.asarray(face_values)
    out = np.zeros(face_values.shape[:-1] + (mesh.n_vertices,), dtype=face_values.dtype)
    for k in range(3):
        np.add.at(out.T, mesh.faces[:, k], (face_values / 3.0).T)
    return out


def form_products(bases: HodgeBases) -> np.ndarray:
    """``Omega[i, j, f] = int_f psi_i ^ conj(psi_j)`` (Whitney wedge)."""
    psi = bases.holomorphic
    g = len(psi)
    out = np.empty((g, g, bases.mesh.n_faces), dtype=complex)
    for i in range(g):
        out[i] = wedge_faces(bases.mesh, psi[i][None, :], psi.conj())
    return out


def arakelov_mu(bases: HodgeBases, negative_tol: float = 1e-12) -> np.ndarray:
    """Face masses of ``(i / 2g) sum psi_i ^ conj(psi_i)``, renormalised to 1."""
    g = bases.genus
    if g == 0:
        raise MeshError("the Arakelov form needs genus >= 1")
    psi = bases.holomorphic
    dens = (0.5j / g) * wedge_faces(bases.mesh, psi, psi.conj()).sum(axis=0)
    mu = dens.real
    if mu.min() < -negative_tol:
        raise MeshError(f"Arakelov density is negative on a face ({mu.min():.3e})")
    return mu / mu.sum()


@dataclass(eq=False)
class GreenSystem:
    """Factorised Laplacian plus the Arakelov measure.

    ``mu`` holds face masses and ``mu_vertex`` the lumped vertex masses; the
    projector ``P u = u - (mu_vertex . u)`` enforces the normalisation.
    """

    bases: HodgeBases
    mu: np.ndarray
    mu_vertex: np.ndarray
    solver: PoissonSolver = field(repr=False)

    @property
    def mesh(self) -> TriMesh:
        return self.bases.mesh

    def project_rhs(self, omega_v: np.ndarray) -> np.ndarray:
        """``P^T`` on vertex 2-forms: subtract ``(int omega) mu``."""
        tot = omega_v.sum(axis=0, keepdims=True)
        mv = self.mu_vertex.reshape((-1,) + (1,) * (omega_v.ndim - 1))
        return omega_v - mv * tot

    def project(self, u: np.ndarray) -> np.ndarray:
        mv = self.mu_vertex.reshape((-1,) + (1,) * (u.ndim - 1))
        return u - (mv * u).sum(axis=0, keepdims=True)

    def apply(self, omega_v: np.ndarray) -> np.ndarray:
        """``P L^+ P^T`` on vertex-lumped 2-forms (columns for 2-D input)."""
        return self.project(self.solver.solve(self.project_rhs(omega_v)))


def green_system(bases: HodgeBases, tol: dict | None = None) -> GreenSystem:
    tol = tol or {}
    mu = arakelov_mu(bases, tol.get("mu_negative", 1e-12))
    mu_v = lump(bases.mesh, mu)
    mu_v = mu_v / mu_v.sum()
    return GreenSystem(bases, mu, mu_v, bases.harmonic.solver)


def green_operator_apply(system: GreenSystem, omega: np.ndarray) -> np.ndarray:
    """``Phi(Omega)`` for a 2-cochain of face integrals (or stacked rows)."""
    omega = np.asarray(omega)
    omega_v = lump(system.mesh, omega)
    return -system.apply(omega_v.T).T


def green_function(system: GreenSystem, x: int) -> np.ndarray:
    """``log G(x, .)`` at all vertices (the entry at ``x`` is the discrete value)."""
    e = np.zeros(system.mesh.n_vertices)
    e[int(x)] = 1.0
    return -2.0 * np.pi * system.apply(e)


@dataclass(eq=False)
class GreenMatrix:
    """All-pairs (``mode == "dense"``) or row-sampled ``log G`` values.

    Sampled mode stores rows ``values[k] = log G(rows[k], .)``.
    """

    values: np.ndarray
    rows: np.ndarray
    mode: str
    diagonal_regularized: np.ndarray
    seed: int | None = None
    tolerance: float = 0.0

    @property
    def symmetry_defect(self) -> float:
        if self.mode == "dense":
            return float(np.abs(self.values - self.values.T).max())
        sub = self.values[:, self.rows]
        return float(np.abs(sub - sub.T).max())

    def normalization_defect(self, mu_vertex: np.ndarray) -> float:
        return float(np.abs(self.values @ mu_vertex).max())

    def save(self, path) -> None:
        """Binary spill file: header then float64 rows (row-major)."""
        with open(path, "wb") as fh:
            V = self.values.shape[1]
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQQdqB", 1, V, len(self.rows), self.tolerance,
                                 -1 if self.seed is None else int(self.seed),
                                 0 if self.mode == "dense" else 1))
            fh.write(self.rows.astype("<i8").tobytes())
            fh.write(self.diagonal_regularized.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GreenMatrix":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError(f"{path}: not a Green matrix spill file")
            head = fh.read(struct.calcsize("<IQQdqB"))
            version, V, R, tolv, seed, mode = struct.unpack("<IQQdqB", head)
            if version != 1:
                raise ValueError(f"{path}: unsupported spill version {version}")
            rows = np.frombuffer(fh.read(8 * R), dtype="<i8").astype(np.int64)
            diag = np.frombuffer(fh.read(8 * R), dtype="<f8").copy()
            vals = np.frombuffer(fh.read(8 * R * V), dtype="<f8").reshape(R, V).copy()
        return cls(vals, rows, "dense" if mode == 0 else "sampled", diag,
                   None if seed < 0 else seed, tolv)


_MAGIC = b"RSGM"


def green_matrix(system: GreenSystem, vertex_budget: int = 10000, sample_size: int = 400,
                 seed: int = 0, threads: int = 1, chunk: int = 256) -> GreenMatrix:
    """``log G`` rows from one factorisation; falls back to sampled rows.

    Chunks of sources are solved independently and written back by index, so
    the result does not depend on ``threads``.
    """
    V = system.mesh.n_vertices
    if V <= vertex_budget:
        rows, mode, used_seed = np.arange(V), "dense", None
    else:
        rows, mode, used_seed = _stratified_rows(V, sample_size, seed), "sampled", seed
    out = np.empty((len(rows), V))
    blocks = [rows[k:k + chunk] for k in range(0, len(rows), chunk)]
    starts = np.cumsum([0] + [len(b) for b in blocks[:-1]])

    def work(idx):
        b = blocks[idx]
        E = np.zeros((V, len(b)))
        E[b, np.arange(len(b))] = 1.0
        return idx, (-2.0 * np.pi * system.apply(E)).T

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(blocks))))
    else:
        results = [work(i) for i in range(len(blocks))]
    for idx, vals in results:
        out[starts[idx]:starts[idx] + len(vals)] = vals
    diag = _regularized_diagonal(system.mesh, rows, out)
    return GreenMatrix(out, rows, mode, diag, used_seed, system.solver.rtol)


def _stratified_rows(V: int, s: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    s = min(s, V)
    edges = np.linspace(0, V, s + 1).astype(np.int64)
    return np.array([rng.integers(a, b) for a, b in zip(edges[:-1], edges[1:])], dtype=np.int64)


def _regularized_diagonal(mesh: TriMesh, rows: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """One-ring mean of ``log G(x, y) - log |x - y|`` at each stored source."""
    A = mesh.adjacency
    out = np.empty(len(rows))
    for k, x in enumerate(rows):
        nb = A.indices[A.indptr[x]:A.indptr[x + 1]]
        d = A.data[A.indptr[x]:A.indptr[x + 1]]
        out[k] = np.mean(vals[k, nb] - np.log(d))
    return out


# ------------------------------------------------------------- a_g routes

def kawazumi_ag_definition(bases: HodgeBases, system: GreenSystem,
                           imag_tol: float = 1e-8) -> float:
    """``-sum_ij int (Omega_ij Phi(conj Omega_ij) + conj Omega_ij Phi(Omega_ij))``.

    Uses ``g^2`` Green-operator solves on the Whitney products.
    """
    g = bases.genus
    Om = form_products(bases).reshape(g * g, -1)
    Ov = lump(bases.mesh, Om)
    Phi = -system.apply(Ov.T).T
    Phic = -system.apply(Ov.conj().T).T
    total = -(np.sum(Ov * Phic) + np.sum(Ov.conj() * Phi))
    scale = max(1.0, abs(total.real))
    if abs(total.imag) > imag_tol * scale:
        raise GreenError(f"imaginary residual {total.imag:.3e} in a_g")
    return float(total.real)


def vertex_form_coefficients(bases: HodgeBases) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex ``(p, q)`` with ``psi = p dz + q dz-bar`` in a vertex frame.

    Face values are rotated into a frame built from cumulative corner angles
    (rescaled to a full turn) and averaged with angle weights.
    """
    mesh = bases.mesh
    psi = bases.holomorphic
    g = len(psi)
    F = mesh.n_faces
    ang = mesh.corner_angles
    l01, l12, l20 = mesh.lengths.T
    c = np.zeros((F, 3), dtype=complex)
    c[:, 1] = l01
    c[:, 2] = l20 * np.exp(1j * ang[:, 0])
    e01 = c[:, 1] - c[:, 0]
    e02 = c[:, 2] - c[:, 0]
    vals = psi[:, mesh.face_edges] * mesh.face_edge_signs
    v01 = vals[:, :, 0]
    v02 = -vals[:, :, 2]
    det = e01 * e02.conj() - e01.conj() * e02
    p = (v01 * e02.conj() - v02 * e01.conj()) / det
    q = (v02 * e01 - v01 * e02) / det
    out_dir = np.angle(np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1))
    frame = _vertex_frames(mesh)
    rot = np.exp(-1j * (frame - out_dir))
    V = mesh.n_vertices
    P = np.zeros((g, V), dtype=complex)
    Qv = np.zeros((g, V), dtype=complex)
    wsum = np.zeros(V)
    for k in range(3):
        vk = mesh.faces[:, k]
        w = ang[:, k]
        np.add.at(P.T, vk, (p * rot[:, k] * w).T)
        np.add.at(Qv.T, vk, (q * rot[:, k].conj() * w).T)
        np.add.at(wsum, vk, w)
    return P / wsum, Qv / wsum


def _vertex_frames(mesh: TriMesh) -> np.ndarray:
    """``frame[f, k]``: scaled angle of the outgoing edge at corner ``k``."""
    F = mesh.n_faces
    frame = np.zeros((F, 3))
    ang = mesh.corner_angles
    for v, fs in enumerate(mesh.vertex_faces):
        by_out = {}
        for f in fs:
            k = int(np.flatnonzero(mesh.faces[f] == v)[0])
            by_out[int(mesh.faces[f, (k + 1) % 3])] = (int(f), k)
        f0 = int(min(fs))
        k0 = int(np.flatnonzero(mesh.faces[f0] == v)[0])
        order = [(f0, k0)]
        while True:
            f, k = order[-1]
            nxt = by_out.get(int(mesh.faces[f, (k + 2) % 3]))
            if nxt is None or nxt[0] == f0:
                break
            order.append(nxt)
        total = sum(ang[f, k] for f, k in order)
        s = 2 * np.pi / total
        acc = 0.0
        for f, k in order:
            frame[f, k] = acc * s
            acc += ang[f, k]
    return frame


def vertex_densities(bases: HodgeBases) -> np.ndarray:
    """``D[i, j, v] = -2i (p_i conj p_j - q_i conj q_j) * A_v``."""
    from .hodge import hodge_star

    P, Qv = vertex_form_coefficients(bases)
    Av = hodge_star(0, bases.mesh)
    D = -2j * (P[:, None, :] * P.conj()[None] - Qv[:, None, :] * Qv.conj()[None]) * Av
    return D


def kawazumi_ag_green(bases: HodgeBases, greens: GreenMatrix, precision: float | None = None,
                      densities: np.ndarray | None = None) -> tuple[float, float]:
    """``(1/2pi) int int log G h^2`` from vertex densities; returns (value, error bar).

    The ``mu x mu`` term vanishes by the normalisation of ``log G``; the
    remaining terms are ``-(1/2pi) sum_ij sum_xy log G (D_ij(x) conj D_ij(y) + c.c.)``.
    """
    g = bases.genus
    D = (vertex_densities(bases) if densities is None else densities).reshape(g * g, -1)
    if greens.mode == "dense":
        t = np.sum(D * (greens.values @ D.conj().T).T)
        val = -(2 * t.real) / (2 * np.pi)
        return float(val), 0.0
    V = D.shape[1]
    contrib = np.sum(D[:, greens.rows] * (greens.values @ D.conj().T).T, axis=0)
    per = -(2 * contrib.real) / (2 * np.pi)
    s = len(per)
    est = float(V * per.mean())
    err = float(V * per.std(ddof=1) / np.sqrt(s) * np.sqrt(max(0.0, 1 - s / V))) if s > 1 else np.inf
    if precision is not None and err > precision:
        raise GreenError(f"sampled a_g error bar {err:.3e} exceeds requested {precision:.3e}")
    return est, err


# ---------------------------------------------------------- h identities

def h_identity_checks(bases: HodgeBases, coefficient: complex = -0.5j) -> dict:
    """Identities of the diagonal Chern form ``h`` as Gram contractions.

    With ``h = p1*mu + p2*mu + c sum_i (p1*psi_i ^ p2*conj psi_i + p2*psi_i ^ p1*conj psi_i)``
    the mixed square integrates to ``c^2 sum_ij (2 K_ij conj K_ij - 2 |R_ij|^2)``
    where ``K = int psi_i ^ conj psi_j`` and ``R = int psi_i ^ psi_j``.
    """
    from .surface import wedge_matrix

    g = bases.genus
    mesh = bases.mesh
    psi = bases.holomorphic
    K = np.array([[wedge_faces(mesh, psi[i], psi[j].conj()).sum() for j in range(g)] for i in range(g)])
    R = np.array([[wedge_faces(mesh, psi[i], psi[j]).sum() for j in range(g)] for i in range(g)])

    def mixed_square(c):
        return complex(c * c * np.sum(2 * K * K.conj() - 2 * R * R.conj())).real

    mu = arakelov_mu(bases)
    dens = wedge_faces(mesh, psi, psi.conj()).sum(axis=0)
    mu_raw = (0.5j / g) * dens
    fiber_dev = float(np.abs(mu_raw.real / mu_raw.real.sum() - mu).max())

    def diag_dev(c):
        hdiag = 2 * mu_raw + 2 * c * dens
        return float(np.abs(hdiag - (2 - 2 * g) * mu_raw).max() / np.abs(mu_raw).max())

    mixed = mixed_square(coefficient)
    mixed_written = mixed_square(-1j)
    P, Qv = vertex_form_coefficients(bases)
    from .hodge import hodge_star
    Av = hodge_star(0, mesh)
    mu_v = ((np.abs(P) ** 2 - np.abs(Qv) ** 2).sum(axis=0) / g) * Av
    mu_l = lump(mesh, mu)
    return {
        "genus": g,
        "fiber_restriction_max_dev": fiber_dev,
        "fiber_vertex_quadrature_dev": float(np.abs(mu_v / mu_v.sum() - mu_l).sum()),
        "mixed_h_p1mu": 1.0,
        "mixed_h_p2mu": 1.0,
        "mixed_p1mu_p2mu": float(mu.sum() ** 2),
        "selfinters": mixed,
        "selfinters_expected": -2.0 * g,
        "selfinters_rel_dev": abs(mixed + 2 * g) / (2 * g),
        "selfinters_written_coefficient": mixed_written,
        "selfinters_written_expected": -8.0 * g,
        "diagonal_max_rel_dev": diag_dev(coefficient),
        "diagonal_written_max_rel_dev": diag_dev(-1j),
        "gram_K_minus_2i_identity": float(np.abs(K + 2j * np.eye(g)).max()),
        "riemann_bilinear_R": float(np.abs(R).max()),
    }


def h_square_without_green(bases: HodgeBases, densities: np.ndarray | None = None) -> dict:
    """``int int h^2`` with ``log G`` replaced by 1, from vertex densities."""
    g = bases.genus
    D = vertex_densities(bases) if densities is None else densities
    S = D.sum(axis=-1)
    val = 2.0 - float(np.sum(2 * (S * S.conj()).real))
    return {"h_square": val, "expected": 2.0 - 8.0 * g}


# ---------------------------------------------------------- torus oracle

def theta1(w, tau: complex, terms: int = 40) -> np.ndarray:
    """Jacobi ``theta_1(w | tau) = 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1) w)``."""
    w = np.asarray(w, dtype=complex)
    nn = np.arange(terms)
    coef = 2 * (-1.0) ** nn * np.exp(1j * np.pi * tau * (nn + 0.5) ** 2)
    return np.tensordot(np.sin(np.multiply.outer(w, 2 * nn + 1)), coef, axes=([-1], [0]))


def dedekind_eta(tau: complex, terms: int = 200) -> complex:
    q = np.exp(2j * np.pi * tau)
    return complex(np.exp(2j * np.pi * tau / 24) * np.prod(1 - q ** np.arange(1, terms)))


def torus_log_green(z, tau: complex) -> np.ndarray:
    """Exact Arakelov ``log G(0, z)`` on ``C / (Z + tau Z)`` (theta-series oracle)."""
    z = np.asarray(z, dtype=complex)
    t = np.round(z.imag / tau.imag)
    z = z - t * tau
    z = z - np.round(z.real)
    with np.errstate(divide="ignore"):   # -inf at the source itself
        return (np.log(np.abs(theta1(np.pi * z, tau))) - np.pi * z.imag**2 / tau.imag
                - np.log(abs(dedekind_eta(tau))))


def torus_chart(mesh: TriMesh) -> np.ndarray:
    return mesh.positions[:, 0] + 1j * mesh.positions[:, 1]


# ---------------------------------------------------------- conformal rescale

def conformal_rescale(mesh: TriMesh, amplitude: float = 0.2) -> TriMesh:
    """Scale edge lengths by ``exp((u_i + u_j) / 2)`` for a smooth vertex field ``u``."""
    X = mesh.positions
    if mesh.descriptor.get("type") == "torus":
        n = mesh.descriptor["n"]
        idx = np.arange(mesh.n_vertices)
        s, t = (idx % n) / n, (idx // n) / n
        u = amplitude * (np.sin(2 * np.pi * s) + 0.5 * np.cos(2 * np.pi * (s + t)))
    else:
        u = amplitude * (X[:, 0] + 0.5 * X[:, 1] * X[:, 2])
    corner_u = u[mesh.faces]
    scale = np.exp(0.5 * (corner_u + corner_u[:, [1, 2, 0]]))
    out = mesh.with_lengths(mesh.lengths * scale)
    out.descriptor["conformal_amplitude"] = amplitude
    return out

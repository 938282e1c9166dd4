"""Triangulated closed surfaces: flat tori, hyperelliptic double covers, homology.

A :class:`TriMesh` carries its metric as per-face edge lengths, so every face
is its own flat chart.  Only the conformal class matters downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import ConvexHull, cKDTree

from .conventions import symplectic_form


class MeshError(ValueError):
    """Raised for invalid surface parameters or malformed meshes."""


@dataclass(eq=False)
class TriMesh:
    """Oriented closed triangle mesh.

    ``lengths[f, k]`` is the length of the edge from corner ``k`` to corner
    ``k+1`` of face ``f``.  ``positions`` are only used for reporting, the torus
    Green oracle, and as branch-point markers; the metric is ``lengths``.
    """

    faces: np.ndarray
    lengths: np.ndarray
    positions: np.ndarray
    genus: int
    involution: np.ndarray | None = None
    branch_vertices: tuple[int, ...] | None = None
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        self.lengths = np.ascontiguousarray(self.lengths, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.involution is not None:
            self.involution = np.asarray(self.involution, dtype=np.int64)
        if self.branch_vertices is not None:
            self.branch_vertices = tuple(int(b) for b in self.branch_vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @cached_property
    def _edge_data(self):
        F = self.n_faces
        tails = self.faces.ravel()
        heads = self.faces[:, [1, 2, 0]].ravel()
        lo = np.minimum(tails, heads)
        hi = np.maximum(tails, heads)
        keys = lo * self.n_vertices + hi
        uniq, inverse = np.unique(keys, return_inverse=True)
        edges = np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1)
        sign = np.where(tails < heads, 1, -1).reshape(F, 3)
        return edges, inverse.reshape(F, 3), sign

    @property
    def edges(self) -> np.ndarray:
        """``(E, 2)`` vertex pairs, oriented low -> high, sorted."""
        return self._edge_data[0]

    @property
    def face_edges(self) -> np.ndarray:
        """``face_edges[f, k]`` is the edge from corner ``k`` to ``k+1``."""
        return self._edge_data[1]

    @property
    def face_edge_signs(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): e for e, (a, b) in enumerate(self.edges)}

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        out = np.zeros(self.n_edges)
        out[self.face_edges.ravel()] = self.lengths.ravel()
        return out

    @cached_property
    def edge_faces(self) -> np.ndarray:
        """``(E, 2)`` adjacent faces (first: edge agrees with the face's boundary)."""
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        fe, sg = self.face_edges.ravel(), self.face_edge_signs.ravel()
        fid = np.repeat(np.arange(self.n_faces), 3)
        pos = fe[sg > 0]
        neg = fe[sg < 0]
        out[pos, 0] = fid[sg > 0]
        out[neg, 1] = fid[sg < 0]
        return out

    @cached_property
    def face_areas(self) -> np.ndarray:
        a, b, c = self.lengths.T
        s = 0.5 * (a + b + c)
        return np.sqrt(np.clip(s * (s - a) * (s - b) * (s - c), 0.0, None))

    @cached_property
    def corner_angles(self) -> np.ndarray:
        """``(F, 3)`` interior angle at each corner."""
        l01, l12, l20 = self.lengths.T
        # angle at corner k is opposite the edge (k+1, k+2)
        opp = np.stack([l12, l20, l01], axis=1)
        adj1 = np.stack([l01, l12, l20], axis=1)
        adj2 = np.stack([l20, l01, l12], axis=1)
        cosv = (adj1**2 + adj2**2 - opp**2) / (2 * adj1 * adj2)
        return np.arccos(np.clip(cosv, -1.0, 1.0))

    @cached_property
    def vertex_faces(self) -> list[np.ndarray]:
        order = np.argsort(self.faces.ravel(), kind="stable")
        counts = np.bincount(self.faces.ravel(), minlength=self.n_vertices)
        return np.split(order // 3, np.cumsum(counts)[:-1])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        e = self.edges
        w = self.edge_lengths
        V = self.n_vertices
        A = sp.coo_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(V, V))
        return A.tocsr()

    def path_steps(self, verts) -> tuple[np.ndarray, np.ndarray]:
        """Edge ids and orientation signs of a vertex path."""
        verts = [int(v) for v in verts]
        ids = np.empty(len(verts) - 1, dtype=np.int64)
        signs = np.empty(len(verts) - 1, dtype=np.int64)
        for k, (a, b) in enumerate(zip(verts[:-1], verts[1:])):
            if a < b:
                ids[k], signs[k] = self.edge_lookup[(a, b)], 1
            else:
                ids[k], signs[k] = self.edge_lookup[(b, a)], -1
        return ids, signs

    def path_chain(self, verts) -> np.ndarray:
        ids, signs = self.path_steps(verts)
        chain = np.zeros(self.n_edges, dtype=np.int64)
        np.add.at(chain, ids, signs)
        return chain

    def shortest_path(self, source: int, target: int) -> list[int]:
        """Deterministic shortest edge path (hop count, ties to smaller ids)."""
        if source == target:
            return [int(source)]
        prev = _bfs_tree(self, int(source))
        if prev[target] < 0:
            raise MeshError(f"vertices {source} and {target} are disconnected")
        path = [int(target)]
        while path[-1] != source:
            path.append(int(prev[path[-1]]))
        return path[::-1]

    def with_lengths(self, lengths: np.ndarray) -> "TriMesh":
        return TriMesh(self.faces, lengths, self.positions, self.genus,
                       self.involution, self.branch_vertices, dict(self.descriptor))


def _bfs_tree(mesh: TriMesh, root: int) -> np.ndarray:
    """BFS predecessor array; neighbours visited in increasing vertex order."""
    A = mesh.adjacency
    prev = -np.ones(mesh.n_vertices, dtype=np.int64)
    prev[root] = root
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            for u in A.indices[A.indptr[v]:A.indptr[v + 1]]:
                if prev[u] < 0:
                    prev[u] = v
                    nxt.append(int(u))
        frontier = sorted(nxt)
    return prev


# ---------------------------------------------------------------- builders

def build_flat_torus(tau: complex, n: int, jitter: float = 0.0, seed: int = 0) -> TriMesh:
    """Regular ``n x n`` triangulation of ``C / (Z + tau Z)``.

    ``jitter`` displaces vertices by up to that fraction of the grid step
    (seeded), giving a flat torus with irregular triangles.
    """
    tau = complex(tau)
    if not tau.imag > 0:
        raise MeshError(f"tau must have positive imaginary part, got {tau}")
    if n < 4:
        raise MeshError(f"torus resolution n must be >= 4, got {n}")
    if not 0.0 <= jitter < 0.3:
        raise MeshError("jitter must lie in [0, 0.3)")
    idx = lambda i, j: (i % n) + n * (j % n)
    rng = np.random.default_rng(seed)
    offs = np.zeros(n * n, dtype=complex)
    if jitter:
        r = jitter * np.sqrt(rng.random(n * n))
        offs = r * np.exp(2j * np.pi * rng.random(n * n)) * min(1.0, tau.imag) / n

    def chart(i, j):
        return (i + j * tau) / n + offs[idx(i, j)]

    short = abs(tau - 1) <= abs(tau + 1)
    faces, corners = [], []
    for j in range(n):
        for i in range(n):
            quad = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            tris = [(0, 1, 3), (1, 2, 3)] if short else [(0, 1, 2), (0, 2, 3)]
            for t in tris:
                pts = [quad[k] for k in t]
                faces.append([idx(*p) for p in pts])
                corners.append([chart(*p) for p in pts])
    corners = np.array(corners)
    lengths = np.abs(corners[:, [1, 2, 0]] - corners)
    pos = np.array([chart(i, j) for j in range(n) for i in range(n)])
    mesh = TriMesh(np.array(faces), lengths, np.stack([pos.real, pos.imag], axis=1), genus=1,
                   descriptor={"type": "torus", "tau": [tau.real, tau.imag], "n": n,
                               "jitter": jitter, "seed": seed})
    return mesh


def build_sphere(n: int) -> TriMesh:
    """Genus-0 polyhedral sphere (convex hull of a Fibonacci point set)."""
    pts = _fibonacci(max(12, n * n))
    faces = _hull_faces(pts)
    return TriMesh(faces, _chord_lengths(pts, faces), pts, genus=0,
                   descriptor={"type": "sphere", "n": n})


def stereographic(z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    d = 1 + np.abs(z) ** 2
    return np.stack([2 * z.real / d, 2 * z.imag / d, (np.abs(z) ** 2 - 1) / d], axis=1)


def _fibonacci(N: int) -> np.ndarray:
    k = np.arange(N) + 0.5
    zc = 1 - 2 * k / N
    phi = np.pi * (3 - np.sqrt(5)) * k
    r = np.sqrt(1 - zc**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), zc], axis=1)


def _hull_faces(pts: np.ndarray) -> np.ndarray:
    faces = ConvexHull(pts).simplices.astype(np.int64)
    a, b, c = pts[faces[:, 0]], pts[faces[:, 1]], pts[faces[:, 2]]
    # orientation induced from the z-plane under stereographic projection:
    # counter-clockwise when seen from inside the sphere
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) > 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    # canonical order: smallest vertex first, faces sorted
    rot = np.argmin(faces, axis=1)
    faces = np.stack([np.roll(f, -r) for f, r in zip(faces, rot)])
    return faces[np.lexsort(faces.T[::-1])]


def _chord_lengths(pts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    c = pts[faces]
    return np.linalg.norm(c[:, [1, 2, 0]] - c, axis=2)


def _graded_sphere_points(branch: np.ndarray, n: int, grading: float | None = None):
    """Fibonacci points plus log-polar rings around each branch point.

    Returns ``(points, branch_ids, h_global)``; branch points come first.
    """
    N = max(60, 2 * n * n)
    h_g = np.sqrt(4 * np.pi / N)
    if grading is None:
        grading = default_grading(n)
    B = len(branch)
    dists = np.linalg.norm(branch[:, None] - branch[None], axis=2) + np.eye(B) * 10
    feature = dists.min(axis=1)
    m = int(np.ceil(2 * np.pi / grading))
    cand, size = [branch], [np.zeros(B)]
    for k in range(B):
        p = branch[k]
        t1 = np.cross(p, [0.0, 0.0, 1.0] if abs(p[2]) < 0.9 else [1.0, 0.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(p, t1)
        r = 0.15 * min(feature[k], h_g)
        ring = 0
        while r < h_g / grading:
            ang = 2 * np.pi * (np.arange(m) + 0.5 * (ring % 2)) / m
            q = p + r * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)
            cand.append(q / np.linalg.norm(q, axis=1, keepdims=True))
            size.append(np.full(m, grading * r))
            r *= 1 + grading
            ring += 1
    fib = _fibonacci(N)
    dB = np.linalg.norm(fib[:, None] - branch[None], axis=2).min(axis=1)
    cand.append(fib)
    size.append(np.minimum(h_g, grading * dB))
    pts = np.concatenate(cand)
    hs = np.concatenate(size)
    order = np.lexsort((np.arange(len(pts)), hs))
    tree = cKDTree(pts)
    nbrs = tree.query_ball_point(pts, 0.6 * np.maximum(hs, 1e-300))
    rank = np.empty(len(pts), dtype=np.int64)
    rank[order] = np.arange(len(pts))
    kept = np.zeros(len(pts), dtype=bool)
    for i in order:
        if i < B or not any(kept[j] and rank[j] < rank[i] for j in nbrs[i]):
            kept[i] = True
    return pts[kept], np.arange(B), h_g


def default_grading(n: int) -> float:
    """Relative ring spacing near branch points; shrinks with ``n``."""
    return min(0.3, 3.6 / n)


def build_hyperelliptic_cover(branch_points, n: int, min_separation: float | None = None) -> TriMesh:
    """Two-sheeted cover of a polyhedral sphere branched at ``branch_points``.

    The sphere is the stereographic image of the plane; the cover inherits the
    chord metric of the base triangles, so both sheets are isometric and the
    sheet swap is an exact isometry (the hyperelliptic involution).
    """
    if n < 4:
        raise MeshError(f"resolution n must be at least 4, got {n}")
    bp = np.asarray(list(branch_points), dtype=complex)
    B = len(bp)
    if B % 2 or B < 6:
        raise MeshError(f"need an even number >= 6 of branch points, got {B}")
    pts3 = stereographic(bp)
    sep = np.linalg.norm(pts3[:, None] - pts3[None], axis=2) + np.eye(B) * 10
    N = max(60, 2 * n * n)
    h_g = np.sqrt(4 * np.pi / N)
    limit = h_g / 64 if min_separation is None else min_separation
    if sep.min() <= limit:
        i, j = np.unravel_index(np.argmin(sep), sep.shape)
        raise MeshError(
            f"branch points {bp[i]} and {bp[j]} are closer (chord {sep.min():.3g}) than the "
            f"minimum resolvable separation {limit:.3g} at n={n}")
    pts, bids, h_g = _graded_sphere_points(pts3, n)
    base_faces = _hull_faces(pts)
    base = TriMesh(base_faces, _chord_lengths(pts, base_faces), pts, genus=0)
    bset = set(bids.tolist())
    for a, b in base.edges:
        if int(a) in bset and int(b) in bset:
            raise MeshError("two branch points are joined by a base edge; increase n")
    cut = _cut_edges(base, bids)
    faces, verts_base, inv = _double_cover(base, cut, bset)
    g = (B - 2) // 2
    mesh = TriMesh(faces, np.tile(base.lengths, (2, 1)), pts[verts_base], genus=g,
                   involution=inv,
                   branch_vertices=tuple(int(np.flatnonzero(verts_base == b)[0]) for b in bids),
                   descriptor={"type": "hyperelliptic", "n": n,
                               "branch": [[float(z.real), float(z.imag)] for z in bp]})
    mesh.base_vertex = verts_base
    return mesh


def _cut_edges(base: TriMesh, bids: np.ndarray) -> np.ndarray:
    """Edges crossed by the sheet exchange: XOR of shortest paths b0-b1, b2-b3, ..."""
    cut = np.zeros(base.n_edges, dtype=bool)
    dist, pred = dijkstra(base.adjacency, indices=bids[0::2], return_predecessors=True)
    for row, (a, b) in enumerate(zip(bids[0::2], bids[1::2])):
        path = [int(b)]
        while path[-1] != a:
            path.append(int(pred[row, path[-1]]))
        ids, _ = base.path_steps(path)
        cut[ids] ^= True
    return cut


def _double_cover(base: TriMesh, cut: np.ndarray, branch: set[int]):
    F = base.n_faces
    parent = np.arange(2 * F * 3)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    corner = lambda s, f, k: (s * F + f) * 3 + k
    ef = base.edge_faces
    for e in range(base.n_edges):
        f, f2 = ef[e]
        k = int(np.flatnonzero(base.face_edges[f] == e)[0])
        k2 = int(np.flatnonzero(base.face_edges[f2] == e)[0])
        c = int(cut[e])
        for s in (0, 1):
            union(corner(s, f, k), corner(s ^ c, f2, (k2 + 1) % 3))
            union(corner(s, f, (k + 1) % 3), corner(s ^ c, f2, k2))
    roots = np.array([find(x) for x in range(2 * F * 3)])
    # vertex ids ordered by smallest corner index of each class
    uniq, first = np.unique(roots, return_index=True)
    order = np.argsort(first)
    relabel = {int(uniq[o]): i for i, o in enumerate(order)}
    vid = np.array([relabel[int(r)] for r in roots])
    faces = vid.reshape(2 * F, 3)
    base_of = np.empty(len(uniq), dtype=np.int64)
    base_of[vid] = np.tile(base.faces.ravel(), 2)
    swap = np.r_[np.arange(F * 3, 2 * F * 3), np.arange(0, F * 3)]
    inv = np.empty(len(uniq), dtype=np.int64)
    inv[vid] = vid[swap]
    expected = 2 * base.n_vertices - len(branch)
    if len(uniq) != expected:
        raise MeshError(f"cover has {len(uniq)} vertices, expected {expected}; cut parity broken")
    return faces, base_of, inv


# --------------------------------------------------------------- homology

@dataclass(eq=False)
class HomologyBasis:
    """Based edge loops with their integer chains and intersection matrix.

    ``cocycles[j]`` is an integer 1-cocycle with ``cocycles[j] . chains[k] =
    delta_jk``.  All loops start and end at ``root``.
    """

    loops: list[list[int]]
    chains: np.ndarray
    cocycles: np.ndarray
    intersection: np.ndarray
    root: int
    reduced: bool = False

    @property
    def rank(self) -> int:
        return len(self.loops)

    @property
    def genus(self) -> int:
        return self.rank // 2


def wedge_faces(mesh: TriMesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-face antisymmetrised cup product of two edge cochains.

    Works for real or complex (stacked) cochains along the last axis.
    """
    fe, sg = mesh.face_edges, mesh.face_edge_signs
    A = a[..., fe] * sg
    Bv = b[..., fe] * sg
    A0, A1, A2 = A[..., 0], A[..., 1], A[..., 2]
    B0, B1, B2 = Bv[..., 0], Bv[..., 1], Bv[..., 2]
    return (A0 * B1 - A1 * B0 + A1 * B2 - A2 * B1 + A2 * B0 - A0 * B2) / 6.0


def wedge_matrix(mesh: TriMesh, forms: np.ndarray) -> np.ndarray:
    """``W[i, j] = sum_f (forms[i] ^ forms[j])(f)``."""
    k = len(forms)
    W = np.zeros((k, k), dtype=np.result_type(forms, float))
    for i in range(k):
        for j in range(i + 1, k):
            W[i, j] = wedge_faces(mesh, forms[i], forms[j]).sum()
            W[j, i] = -W[i, j]
    return W


def _tree_cotree(mesh: TriMesh, root: int):
    prev = _bfs_tree(mesh, root)
    in_tree = np.zeros(mesh.n_edges, dtype=bool)
    for v in range(mesh.n_vertices):
        if v != root:
            a, b = sorted((v, int(prev[v])))
            in_tree[mesh.edge_lookup[(a, b)]] = True
    # dual spanning tree over the remaining edges, BFS from face 0
    ef = mesh.edge_faces
    fadj = [[] for _ in range(mesh.n_faces)]
    for e in np.flatnonzero(~in_tree):
        f, f2 = ef[e]
        fadj[f].append((int(e), int(f2)))
        fadj[f2].append((int(e), int(f)))
    parent_edge = -np.ones(mesh.n_faces, dtype=np.int64)
    seen = np.zeros(mesh.n_faces, dtype=bool)
    seen[0] = True
    order = [0]
    in_cotree = np.zeros(mesh.n_edges, dtype=bool)
    head = 0
    while head < len(order):
        f = order[head]
        head += 1
        for e, f2 in sorted(fadj[f]):
            if not seen[f2]:
                seen[f2] = True
                parent_edge[f2] = e
                in_cotree[e] = True
                order.append(f2)
    if not seen.all():
        raise MeshError("dual graph is disconnected")
    generators = np.flatnonzero(~in_tree & ~in_cotree)
    return prev, in_tree, generators, order, parent_edge


def homology_basis(mesh: TriMesh, root: int = 0) -> HomologyBasis:
    """Tree-cotree generators, their dual integer cocycles and intersections."""
    prev, in_tree, gens, order, parent_edge = _tree_cotree(mesh, root)
    n = len(gens)
    if n != 2 * mesh.genus:
        raise MeshError(f"found {n} generators, expected {2 * mesh.genus}")

    def to_root(v):
        path = [int(v)]
        while path[-1] != root:
            path.append(int(prev[path[-1]]))
        return path

    loops = []
    for e in gens:
        a, b = mesh.edges[e]
        loops.append(to_root(a)[::-1] + to_root(b))
    chains = np.array([mesh.path_chain(l) for l in loops], dtype=np.int64).reshape(n, mesh.n_edges)
    cocycles = np.zeros((n, mesh.n_edges), dtype=np.int64)
    fe, sg = mesh.face_edges, mesh.face_edge_signs
    for k, e in enumerate(gens):
        z = cocycles[k]
        z[e] = 1
        for f in reversed(order[1:]):
            pe = parent_edge[f]
            slot = int(np.flatnonzero(fe[f] == pe)[0])
            rest = sum(sg[f, s] * z[fe[f, s]] for s in range(3) if s != slot)
            z[pe] = -rest * sg[f, slot]
    W = wedge_matrix(mesh, cocycles.astype(float))
    Wi = np.rint(W).astype(np.int64)
    if n and np.abs(W - Wi).max() > 1e-8:
        raise MeshError("cup product of integer cocycles is not integral")
    M = np.rint(np.linalg.inv(Wi).T).astype(np.int64) if n else np.zeros((0, 0), dtype=np.int64)
    return HomologyBasis(loops, chains, cocycles, M, root)


def homology_from_loops(mesh: TriMesh, loops: list[list[int]], root: int | None = None) -> HomologyBasis:
    """Homology basis made of the given closed vertex loops.

    Dual cocycles and intersections are transported from a tree-cotree basis,
    so the loops must generate first homology over the integers.
    """
    root = int(loops[0][0]) if root is None else root
    ref = homology_basis(mesh, root)
    chains = np.array([mesh.path_chain(l) for l in loops], dtype=np.int64)
    N = chains @ ref.cocycles.T
    if round(abs(np.linalg.det(N))) != 1:
        raise MeshError("loops do not form an integral homology basis")
    Ninv = np.rint(np.linalg.inv(N)).astype(np.int64)
    return HomologyBasis([list(map(int, l)) for l in loops], chains, Ninv.T @ ref.cocycles,
                         N @ ref.intersection @ N.T, root)


def torus_lattice_loops(mesh: TriMesh) -> list[list[int]]:
    """Grid loops along the periods ``1`` and ``tau`` of a built flat torus."""
    n = int(mesh.descriptor["n"])
    return [[i % n for i in range(n + 1)], [n * (j % n) for j in range(n + 1)]]


def default_homology(mesh: TriMesh, root: int = 0) -> HomologyBasis:
    """Symplectic basis; lattice-aligned on built tori so ``tau`` round-trips."""
    if mesh.descriptor.get("type") == "torus" and root == 0:
        basis = homology_from_loops(mesh, torus_lattice_loops(mesh))
    else:
        basis = homology_basis(mesh, root)
    return symplectic_reduce(basis)


def symplectic_reduce(basis: HomologyBasis) -> HomologyBasis:
    """Integer change of basis bringing the intersection to [[0, I], [-I, 0]]."""
    B = symplectic_transform(basis.intersection)
    n = basis.rank
    loops = []
    for i in range(n):
        path = [basis.root]
        for k in range(n):
            c = int(B[i, k])
            piece = basis.loops[k] if c > 0 else basis.loops[k][::-1]
            for _ in range(abs(c)):
                path.extend(piece[1:])
        loops.append(path)
    Binv = np.rint(np.linalg.inv(B)).astype(np.int64) if n else B
    return HomologyBasis(loops, B @ basis.chains, Binv.T @ basis.cocycles,
                         B @ basis.intersection @ B.T, basis.root, reduced=True)


def symplectic_transform(M) -> np.ndarray:
    """Unimodular ``B`` with ``B M B^T`` the standard symplectic form.

    Skew elimination over Z; the pivot is the smallest nonzero entry, ties by
    index.  Raises :class:`MeshError` unless ``M`` is skew and unimodular.
    """
    M = np.asarray(M, dtype=object)
    n = M.shape[0]
    if M.shape != (n, n) or n % 2:
        raise MeshError("intersection matrix must be square of even size")
    if any(M[i, j] != -M[j, i] for i in range(n) for j in range(n)):
        raise MeshError("intersection matrix is not skew-symmetric")
    if n == 0:
        return np.zeros((0, 0), dtype=np.int64)
    rows = [[int(i == j) for j in range(n)] for i in range(n)]
    form = lambda u, v: sum(u[a] * M[a, b] * v[b] for a in range(n) for b in range(n) if u[a] and v[b])
    remaining = list(range(n))
    us, vs = [], []
    while remaining:
        u = rows[remaining[0]]
        others = remaining[1:]
        while True:
            vals = [(abs(form(u, rows[k])), k) for k in others if form(u, rows[k]) != 0]
            if not vals:
                raise MeshError("intersection matrix is not unimodular")
            piv_abs, piv = min(vals)
            pv = form(u, rows[piv])
            done = True
            for k in others:
                if k == piv:
                    continue
                r = form(u, rows[k])
                if r:
                    q = r // pv
                    rows[k] = [x - q * y for x, y in zip(rows[k], rows[piv])]
                    if form(u, rows[k]):
                        done = False
            if done:
                break
        if piv_abs != 1:
            raise MeshError("intersection matrix is not unimodular")
        v = rows[piv] if pv == 1 else [-x for x in rows[piv]]
        us.append(u)
        vs.append(v)
        rest = [k for k in others if k != piv]
        for k in rest:
            w = rows[k]
            a, b = form(w, v), form(w, u)
            rows[k] = [wi - a * ui + b * vi for wi, ui, vi in zip(w, u, v)]
        remaining = rest
    Bm = np.array(us + vs, dtype=np.int64)
    check = Bm.astype(object) @ M @ Bm.T.astype(object)
    if not np.array_equal(np.array(check, dtype=np.int64), symplectic_form(n // 2)):
        raise MeshError("symplectic reduction failed")
    return Bm


# ------------------------------------------------------------- validation

def validate_mesh(mesh: TriMesh) -> dict:
    """Structural checks; failures are reported, never raised."""
    rep: dict = {}
    F = mesh.n_faces
    tails = mesh.faces.ravel()
    heads = mesh.faces[:, [1, 2, 0]].ravel()
    directed = tails * mesh.n_vertices + heads
    uniq_dir, cnt_dir = np.unique(directed, return_counts=True)
    undirected = np.bincount(mesh.face_edges.ravel(), minlength=mesh.n_edges)
    rep["V"], rep["E"], rep["F"] = mesh.n_vertices, mesh.n_edges, F
    rep["euler_characteristic"] = mesh.euler_characteristic
    rep["euler_ok"] = rep["euler_characteristic"] == 2 - 2 * mesh.genus
    rep["manifold_edges_ok"] = bool(np.all(undirected == 2))
    twin_missing = np.setdiff1d(heads * mesh.n_vertices + tails, uniq_dir).size
    rep["orientation_ok"] = bool(np.all(cnt_dir == 1) and twin_missing == 0)
    rep["degenerate_faces"] = int(np.sum(mesh.face_areas <= 1e-14 * np.max(mesh.lengths) ** 2))
    ring_ok = True
    for v, fs in enumerate(mesh.vertex_faces):
        if len(fs) == 0:
            ring_ok = False
            break
        nxt = {}
        for f in fs:
            k = int(np.flatnonzero(mesh.faces[f] == v)[0])
            nxt[int(mesh.faces[f, (k + 1) % 3])] = int(mesh.faces[f, (k + 2) % 3])
        start = next(iter(nxt))
        cur, steps = start, 0
        while steps <= len(nxt):
            cur = nxt.get(cur, -1)
            steps += 1
            if cur == start or cur < 0:
                break
        if cur != start or steps != len(nxt):
            ring_ok = False
            break
    rep["vertex_links_ok"] = ring_ok
    if mesh.involution is not None:
        inv = mesh.involution
        rep["involution_order2_ok"] = bool(np.array_equal(inv[inv], np.arange(mesh.n_vertices)))
        key = lambda f: tuple(np.roll(f, -int(np.argmin(f))))
        faceset = {key(f) for f in mesh.faces}
        rep["involution_simplicial_ok"] = all(key(inv[f]) in faceset for f in mesh.faces)
        fixed = np.flatnonzero(inv == np.arange(mesh.n_vertices))
        rep["involution_fixed_points"] = int(len(fixed))
        rep["involution_fixed_match_branch"] = (
            mesh.branch_vertices is not None and sorted(fixed.tolist()) == sorted(mesh.branch_vertices))
    checks = [k for k in rep if k.endswith("_ok") or k == "involution_fixed_match_branch"]
    rep["valid"] = all(rep[k] for k in checks) and rep["degenerate_faces"] == 0
    return rep

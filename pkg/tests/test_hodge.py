import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surfinv.hodge import (Cochain, compute_bases, exterior_derivative, hodge_star,
                           wedge_integral)
from surfinv.surface import MeshError, TriMesh, build_flat_torus


@pytest.mark.parametrize("which", ["torus", "g2_mesh"])
def test_d_squared_is_exactly_zero(which, request):
    mesh = request.getfixturevalue(which)
    dd = exterior_derivative(1, mesh) @ exterior_derivative(0, mesh)
    assert dd.count_nonzero() == 0


def test_exterior_derivative_degree_check(torus):
    with pytest.raises(ValueError):
        exterior_derivative(2, torus)


def test_hodge_star_dual_areas(torus, g2_mesh):
    im = 0.8
    assert hodge_star(0, torus).sum() == pytest.approx(im, rel=1e-12)
    assert hodge_star(0, g2_mesh).sum() == pytest.approx(g2_mesh.face_areas.sum(), rel=1e-12)
    assert np.allclose(hodge_star(2, torus) * torus.face_areas, 1.0)
    with pytest.raises(ValueError):
        hodge_star(3, torus)


def test_flat_torus_cotan_weights_positive(torus):
    assert np.all(hodge_star(1, torus) > 0)


def test_wedge_antisymmetric_and_stokes(g2_mesh):
    rng = np.random.default_rng(1)
    a = Cochain(g2_mesh, 1, rng.standard_normal(g2_mesh.n_edges))
    b = Cochain(g2_mesh, 1, rng.standard_normal(g2_mesh.n_edges))
    assert wedge_integral(a, b) == pytest.approx(-wedge_integral(b, a), abs=1e-10)
    # int df ^ z = 0 for any closed z on a closed surface
    bases = compute_bases(g2_mesh)
    f = rng.standard_normal(g2_mesh.n_vertices)
    df = Cochain(g2_mesh, 1, exterior_derivative(0, g2_mesh) @ f)
    z = Cochain(g2_mesh, 1, bases.harmonic.alphas[0])
    assert abs(wedge_integral(df, z)) < 1e-9 * np.abs(f).max()


def test_cochain_size_and_mesh_checks(torus, g2_mesh):
    with pytest.raises(ValueError):
        Cochain(torus, 1, np.zeros(5))
    a = Cochain(torus, 1, np.zeros(torus.n_edges))
    b = Cochain(g2_mesh, 1, np.zeros(g2_mesh.n_edges))
    with pytest.raises(ValueError):
        wedge_integral(a, b)


def test_degenerate_triangle_rejected(torus):
    lengths = torus.lengths.copy()
    lengths[3] = [1.0, 1.0, 2.0]   # collinear
    mesh = TriMesh(torus.faces, lengths, torus.positions, 1)
    with pytest.raises(MeshError, match="degenerate"):
        hodge_star(1, mesh)


def test_harmonic_periods_are_dual(g2_bases):
    P = g2_bases.harmonic.periods()
    assert np.allclose(P, np.eye(4), atol=1e-10)
    assert g2_bases.harmonic.closed_residual < 1e-10
    assert g2_bases.harmonic.coclosed_residual < 1e-8


def test_gram_identity(g2_bases, torus_bases):
    for b in (g2_bases, torus_bases):
        assert np.abs(b.gram_after - np.eye(b.genus)).max() < 1e-10


@pytest.mark.parametrize("tau", [1j, 0.5 + 0.8j, -0.3 + 1.7j])
def test_torus_tau_round_trip(tau):
    b = compute_bases(build_flat_torus(tau, 12))
    assert abs(b.periods.tau[0, 0] - tau) < 1e-10


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10_000), jitter=st.floats(0.0, 0.25))
def test_jittered_torus_tau_round_trip(seed, jitter):
    tau = 0.5 + 0.8j
    b = compute_bases(build_flat_torus(tau, 10, jitter=jitter, seed=seed))
    assert abs(b.periods.tau[0, 0] - tau) < 1e-9


def test_genus_two_period_matrix(g2_bases):
    pm = g2_bases.periods
    assert pm.min_imag_eig > 0
    assert pm.symmetry_defect < 1e-2
    assert np.allclose(pm.a_periods @ pm.tau, pm.b_periods)


def test_holomorphic_forms_anti_invariant(g2_mesh, g2_bases):
    """The hyperelliptic involution acts as -1 on holomorphic forms."""
    inv = g2_mesh.involution
    src = inv[g2_mesh.edges]
    lookup = g2_mesh.edge_lookup
    idx = np.array([lookup[tuple(sorted(map(int, e)))] for e in src])
    sign = np.where(src[:, 0] < src[:, 1], 1.0, -1.0)
    psi = g2_bases.holomorphic
    pulled = psi[:, idx] * sign
    assert np.abs(pulled + psi).max() < 1e-8 * np.abs(psi).max()


def test_star_rotates_toward_minus_i(g2_bases):
    # discrete *psi = -i psi holds up to discretisation error
    assert g2_bases.star_defect < 0.05

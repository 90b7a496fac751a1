import numpy as np
import pytest

from nric import meshgen
from nric.errors import NotOnManifold
from nric.integrability import ConstraintSystem
from nric.mesh import SimplicialSurface, forward_map
from nric.rigidity import extrapolate, rigidity_test, tangent_basis

from conftest import load


def crease_setup(n=4):
    F, X = meshgen.creased_strip(n, n, 0.0, width=1.0)
    surface = SimplicialSurface(F)
    pairs = set(meshgen.crease_edges(F, X, 0.5))
    crease = np.array([surface.interior_rank[e] for e, (a, b) in enumerate(surface.edges)
                       if (a, b) in pairs and surface.interior_rank[e] >= 0])
    return surface, F, X, crease


def test_tetrahedron_rigid():
    surface, X, z = load("tetrahedron")
    res = rigidity_test(ConstraintSystem(surface), z)
    assert res.status == "rigid" and not res.flexible
    assert res.normalized_lambda0 > 1e-3
    assert res.variation is None


def test_icosahedron_tangent_basis():
    surface, X, z = load("icosahedron")
    system = ConstraintSystem(surface)
    tb = tangent_basis(system, z)
    D = system.jacobian(z).toarray()
    assert tb.dimension == surface.dim - tb.rank
    assert np.abs(D @ tb.basis).max() < 1e-10
    np.testing.assert_allclose(tb.basis.T @ tb.basis, np.eye(tb.dimension), atol=1e-12)
    # dense SVD oracle for the rank
    assert tb.rank == np.linalg.matrix_rank(D)


def test_folding_family_is_tangent():
    surface, F, X, crease = crease_setup()
    system = ConstraintSystem(surface)
    z = forward_map(surface, X)
    h = 1e-5
    zp = forward_map(surface, meshgen.creased_strip(4, 4, h, width=1.0)[1])
    zm = forward_map(surface, meshgen.creased_strip(4, 4, -h, width=1.0)[1])
    w = (zp - zm) / (2 * h)
    E = surface.edge_count
    assert np.abs(w[:E]).max() < 1e-8
    assert set(np.flatnonzero(np.abs(w[E:]) > 1e-6)) == set(crease)
    B = tangent_basis(system, z).basis
    assert np.linalg.norm(w - B @ (B.T @ w)) < 1e-8 * np.linalg.norm(w)


def test_creased_grid_flexible():
    surface, F, X, crease = crease_setup()
    system = ConstraintSystem(surface)
    z = forward_map(surface, X)
    res = rigidity_test(system, z)
    assert res.flexible and res.lambda0 < 1e-7 * res.sigma_max
    w = res.variation
    assert np.linalg.norm(system.jacobian(z) @ w) <= 1e-6
    assert np.linalg.norm(w[:surface.edge_count]) <= 1e-6
    # restricted to the crease, the variation lives on the crease
    sel = np.zeros(surface.n_angles, bool)
    sel[crease] = True
    res = rigidity_test(system, z, sel)
    assert res.flexible
    assert set(res.support) <= set(crease)


def test_empty_selector_is_distinct_outcome():
    surface, X, z = load("tetrahedron")
    res = rigidity_test(ConstraintSystem(surface), z, np.zeros(surface.n_angles, bool))
    assert res.status == "no_candidate_subspace" and res.variation is None


def test_off_manifold_rejected():
    surface, X, z = load("icosahedron")
    zp = z.copy()
    zp[-1] += 0.1
    with pytest.raises(NotOnManifold):
        rigidity_test(ConstraintSystem(surface), zp)


def test_extrapolate_along_fold():
    surface, F, X, crease = crease_setup()
    system = ConstraintSystem(surface)
    z = forward_map(surface, X)
    sel = np.zeros(surface.n_angles, bool)
    sel[crease] = True
    res = rigidity_test(system, z, sel)
    zn, rep = extrapolate(system, z, res.variation, h=0.3)
    E = surface.edge_count
    assert rep.converged
    assert np.abs(system.residual(zn)).max() <= 1e-8
    assert np.abs(zn[E:][crease]).max() == pytest.approx(0.3, rel=1e-6)
    np.testing.assert_allclose(zn[:E], z[:E], atol=1e-8)

import itertools

import networkx as nx
import numpy as np
import pytest

from nric import meshgen
from nric.energies import quadratic_weights
from nric.fileio import write_order_sidecar
from nric.integrability import ConstraintSystem
from nric.mesh import SimplicialSurface, forward_map
from nric.objectives import linear_blend
from nric.reconstruction import (STRATEGIES, WEIGHT_SENTINEL, FrameSeed, build_tree,
                                 edge_vectors, edge_weights, preassembled_weights, procrustes_rms,
                                 quadratic_residual, reconstruct, traverse_reconstruct,
                                 variational_refine)

from conftest import load


def dual_graph(surface, w):
    G = nx.Graph()
    G.add_nodes_from(range(surface.face_count))
    for k, e in enumerate(surface.interior_edges):
        f, g = surface.edge_faces[e]
        G.add_edge(int(f), int(g), weight=float(w[k]), rank=k)
    return G


def assert_spanning_tree(surface, tree):
    assert sorted(tree.order) == list(range(surface.face_count))
    assert tree.order[0] == tree.root and tree.parent[tree.root] == -1
    rank = tree.rank
    for f in range(surface.face_count):
        if f != tree.root:
            p = tree.parent[f]
            assert rank[p] < rank[f]
            e = surface.interior_edges[tree.parent_edge[f]]
            assert set(surface.edge_faces[e]) == {f, p}


# ----------------------------------------------------------------- weights
def test_integrable_weights_vanish(any_mesh):
    surface, X, z = any_mesh
    assert np.abs(edge_weights(ConstraintSystem(surface), z)).max(initial=0) < 1e-12


def test_single_perturbation_weights():
    surface, X, z = load("icosahedron")
    system = ConstraintSystem(surface)
    e = surface.interior_edges[7]
    zp = z.copy()
    zp[surface.angle_index(e)] += 0.05
    w = edge_weights(system, zp)
    ends = set(surface.edges[e])
    touching = np.array([bool(ends & set(surface.edges[k])) for k in surface.interior_edges])
    assert np.all(w[touching] > 0)
    assert np.all(w[~touching] < 1e-20)


def test_degenerate_face_gets_sentinel():
    surface, X, z = load("dome")
    zb = z.copy()
    f = 5
    zb[surface.face_edges[f, 0]] = 10.0
    w = edge_weights(ConstraintSystem(surface), zb)
    for k, e in enumerate(surface.interior_edges):
        if f in surface.edge_faces[e]:
            assert w[k] == WEIGHT_SENTINEL


def test_preassembled_weights(rng):
    surface, X, z = load("icosahedron")
    system = ConstraintSystem(surface)
    z1, z2 = z.copy(), z.copy()
    e1, e2 = surface.interior_edges[0], surface.interior_edges[-1]
    z1[surface.angle_index(e1)] += 0.05
    z2[surface.angle_index(e2)] += 0.05
    w1, w2 = edge_weights(system, z1), edge_weights(system, z2)
    np.testing.assert_array_equal(preassembled_weights(system, [z1]), w1)
    both = preassembled_weights(system, [z1, z2])
    assert np.all(both >= w1) and np.all(both >= w2)
    np.testing.assert_array_equal(both > 1e-20, (w1 > 1e-20) | (w2 > 1e-20))


# ------------------------------------------------------------------- trees
@pytest.mark.parametrize("strategy", STRATEGIES)
def test_trees_span(strategy, rng):
    surface, X, z = load("bumpy_plate")
    w = rng.uniform(0, 1, surface.n_angles)
    assert_spanning_tree(surface, build_tree(surface, w, strategy, root=3))


def test_mst_matches_networkx(rng):
    for name in ("icosphere", "bumpy_plate", "saddle"):
        surface, X, z = load(name)
        w = rng.uniform(0, 1, surface.n_angles)
        tree = build_tree(surface, w, "mst")
        oracle = nx.minimum_spanning_tree(dual_graph(surface, w)).size(weight="weight")
        assert tree.total_weight() == pytest.approx(oracle, rel=1e-12)


def test_spt_matches_dijkstra(rng):
    for seed in range(5):
        F, X = meshgen.bumpy_plate(4, 3 + seed % 3, 0.1, seed)
        surface = SimplicialSurface(F)
        assert surface.face_count <= 50
        w = rng.uniform(0, 1, surface.n_angles)
        root = int(rng.integers(surface.face_count))
        tree = build_tree(surface, w, "spt", root)
        dist = nx.single_source_dijkstra_path_length(dual_graph(surface, w), root)
        for f in range(surface.face_count):
            d, g = 0.0, f
            while g != root:
                d += w[tree.parent_edge[g]]
                g = tree.parent[g]
            assert d == pytest.approx(dist[f], rel=1e-12, abs=1e-15)


def brute_force_min_tree(surface, w):
    n = surface.face_count
    pairs = [tuple(surface.edge_faces[e]) for e in surface.interior_edges]
    best = np.inf
    for subset in itertools.combinations(range(len(pairs)), n - 1):
        G = nx.Graph([pairs[k] for k in subset])
        if G.number_of_nodes() == n and nx.is_tree(G):
            best = min(best, sum(w[k] for k in subset))
    return best


def test_mst_brute_force(rng):
    for F, X in (meshgen.grid(2, 2), meshgen.tetrahedron(), meshgen.grid(3, 1)):
        surface = SimplicialSurface(F)
        for _ in range(3):
            w = rng.uniform(0, 1, surface.n_angles)
            assert build_tree(surface, w, "mst").total_weight() == \
                pytest.approx(brute_force_min_tree(surface, w))


def test_heavy_edge_visited_last():
    # a strip whose dual graph is a path; rooted in the middle, the heavy side waits
    F, X = meshgen.grid(4, 1)
    surface = SimplicialSurface(F)
    w = np.zeros(surface.n_angles)
    root = 3
    heavy = [k for k, e in enumerate(surface.interior_edges) if root in surface.edge_faces[e]][0]
    w[heavy] = 5.0
    tree = build_tree(surface, w, "mst", root)
    other = [f for f in surface.edge_faces[surface.interior_edges[heavy]] if f != root][0]
    rank = tree.rank
    # every face reachable without the heavy edge comes first
    G = dual_graph(surface, w)
    G.remove_edge(root, other)
    light = nx.node_connected_component(G, root)
    heavy_side = set(range(surface.face_count)) - light
    assert heavy_side
    assert max(rank[f] for f in light) < min(rank[f] for f in heavy_side)


def test_zero_weights_degenerate_to_bfs_depth():
    surface, X, z = load("icosphere")
    w = np.zeros(surface.n_angles)
    spt = build_tree(surface, w, "spt", 0)
    bfs = build_tree(surface, w, "bfs", 0)
    assert_spanning_tree(surface, spt)
    assert_spanning_tree(surface, bfs)
    assert spt.total_weight() == bfs.total_weight() == 0.0


# --------------------------------------------------------------- traversal
def test_edge_vector_closure():
    E1, E2, E3 = edge_vectors(np.eye(3), 1, 1, 1, np.pi / 3, np.pi / 3)
    np.testing.assert_allclose(E1, [1, 0, 0])
    np.testing.assert_allclose(E2, [-0.5, np.sqrt(3) / 2, 0])
    np.testing.assert_allclose(E3, [-0.5, -np.sqrt(3) / 2, 0])
    np.testing.assert_allclose(E1 + E2 + E3, 0, atol=1e-15)


@pytest.mark.parametrize("strategy", ["bfs", "mst", "spt", "pre"])
def test_round_trip(any_mesh, strategy):
    surface, X, z = any_mesh
    system = ConstraintSystem(surface)
    weights = preassembled_weights(system, [z]) if strategy == "pre" else None
    Y, rep = reconstruct(surface, z, strategy, gn_steps=0, weights=weights, system=system)
    assert np.abs(forward_map(surface, Y) - z).max() < 1e-8
    diameter = np.ptp(X, axis=0).max()
    assert procrustes_rms(Y, X) < 1e-8 * diameter
    assert rep.nric_error < 1e-8 and rep.flagged_faces == 0


def test_frames_orthonormal_and_closed():
    surface, X, z = load("icosphere")
    tree = build_tree(surface, None, "bfs")
    res = traverse_reconstruct(surface, z, tree)
    for Fm in res.frames:
        np.testing.assert_allclose(Fm.T @ Fm, np.eye(3), atol=1e-10)
        assert np.linalg.det(Fm) == pytest.approx(1.0)
    P = res.positions[surface.faces]
    np.testing.assert_allclose((P[:, 1] - P[:, 0]) + (P[:, 2] - P[:, 1]) + (P[:, 0] - P[:, 2]),
                               0, atol=1e-12)
    assert res.mismatch.max() < 1e-10


def test_seed_changes_output_by_rigid_motion(rng):
    surface, X, z = load("saddle")
    tree = build_tree(surface, None, "mst", 4)
    A = traverse_reconstruct(surface, z, tree).positions
    R, t = meshgen.random_rigid_motion(rng)
    B = traverse_reconstruct(surface, z, tree, FrameSeed(4, t, R)).positions
    assert procrustes_rms(A, B) < 1e-9
    np.testing.assert_allclose(B, A @ R.T + t, atol=1e-12)


def test_refine_keeps_exact_positions():
    surface, X, z = load("dome")
    Y, hist = variational_refine(surface, z, X, max_iter=3)
    assert np.abs(Y - X).max() < 1e-10
    assert hist[0] < 1e-25


def blend_case(n=8, amp=0.4):
    F, XA = meshgen.dome(n, n, amp)
    _, XB = meshgen.dome(n, n, -amp)
    surface = SimplicialSurface(F)
    zl = linear_blend(forward_map(surface, XA), forward_map(surface, XB), 0.5)
    return surface, zl


def test_refine_monotone():
    surface, zl = blend_case()
    tree = build_tree(surface, None, "bfs")
    X0 = traverse_reconstruct(surface, zl, tree).positions
    _, hist = variational_refine(surface, zl, X0, max_iter=5)
    assert np.all(np.diff(hist) <= 0)


def test_hybrid_beats_direct():
    surface, zl = blend_case()
    system = ConstraintSystem(surface)
    _, direct = reconstruct(surface, zl, "bfs", gn_steps=0, system=system)
    _, hybrid = reconstruct(surface, zl, "mst", gn_steps=1, system=system)
    assert hybrid.energy_final <= direct.energy_final
    w = quadratic_weights(surface, zl)
    X, _ = reconstruct(surface, zl, "mst", gn_steps=1, system=system)
    assert quadratic_residual(surface, zl, X, w) == pytest.approx(hybrid.energy_final)


def test_pre_strategy_requires_weights():
    surface, X, z = load("saddle")
    with pytest.raises(ValueError):
        reconstruct(surface, z, "pre")


def test_order_sidecar(tmp_path):
    surface, X, z = load("saddle")
    _, rep = reconstruct(surface, z, "mst")
    path = tmp_path / "x.order"
    write_order_sidecar(path, rep.order)
    order = np.loadtxt(path, dtype=int)
    assert sorted(order) == list(range(surface.face_count))
    assert order[rep.seed_face] == 0

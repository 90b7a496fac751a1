"""Vertex positions from NRIC vectors.

The constructive reconstruction walks a spanning tree of the dual graph and
carries an orthonormal frame per face: crossing an edge rotates the frame by
the dihedral angle about the edge and then by an interior angle within the
new face. Trees that avoid edges near non-integrable vertices keep the
damage local. A few Gauss-Newton steps on the quadratic energy then
distribute the remaining error.

Frames are stored as 3x3 matrices with columns ``(t, b, n)``: ``t`` is the
unit direction of the anchor edge of the face, ``n`` the face normal and
``b = n x t``. The normal is opposite to the right-hand normal of the face
orientation, which makes the transition rotations agree with the quaternions
used by the integrability conditions.
"""

from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial.transform import Rotation

from .energies import quadratic_weights
from .errors import DegenerateFace
from .integrability import ConstraintSystem
from .mesh import INFEASIBLE, SimplicialSurface, forward_map, jacobian_forward_map
from .quaternion import axis_rotation

logger = logging.getLogger(__name__)

#: Weight of dual edges next to faces violating a triangle inequality.
WEIGHT_SENTINEL = 1e12

STRATEGIES = ("bfs", "mst", "spt", "pre")


# ---------------------------------------------------------------- weights
def _face_violations(surface: SimplicialSurface, z) -> np.ndarray:
    L = np.asarray(z, float)[:surface.edge_count][surface.face_edges]
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    return ~((a + b > c) & (a - b + c > 0) & (-a + b + c > 0))


def vertex_residuals(system: ConstraintSystem, z) -> np.ndarray:
    """``|tr I_v - 3|`` per vertex; zero on the boundary, capped at the sentinel weight."""
    surface = system.surface
    r = np.zeros(surface.vertex_count)
    r[surface.interior_vertices] = np.minimum(system.rotation_residual(z), WEIGHT_SENTINEL)
    return r


def edge_weights(system: ConstraintSystem, z) -> np.ndarray:
    """Dual edge weights ``(r_v + r_v') / 2`` per interior edge ``vv'``.

    Dual edges touching a face that violates a triangle inequality get
    :data:`WEIGHT_SENTINEL` so the traversal reaches such faces last.
    """
    surface = system.surface
    r = vertex_residuals(system, z)
    ie = surface.interior_edges
    v = surface.edges[ie]
    w = 0.5 * (r[v[:, 0]] + r[v[:, 1]])
    bad = _face_violations(surface, z)
    ef = surface.edge_faces[ie]
    w[bad[ef[:, 0]] | bad[ef[:, 1]]] = WEIGHT_SENTINEL
    return w


def preassembled_weights(system: ConstraintSystem, samples) -> np.ndarray:
    """Elementwise maximum of :func:`edge_weights` over several NRIC samples."""
    return np.max(np.stack([edge_weights(system, z) for z in samples]), axis=0)


# ------------------------------------------------------------------ trees
@dataclass
class TraversalTree:
    """Rooted spanning tree of the dual graph.

    ``parent[f]`` and ``parent_edge[f]`` are ``-1`` for the root; ``order``
    lists faces in visiting order.
    """

    root: int
    parent: np.ndarray
    parent_edge: np.ndarray
    order: np.ndarray
    strategy: str
    weights: np.ndarray

    @property
    def rank(self) -> np.ndarray:
        """Position of every face in the traversal order."""
        r = np.empty(len(self.order), dtype=np.int64)
        r[self.order] = np.arange(len(self.order))
        return r

    def total_weight(self) -> float:
        e = self.parent_edge[self.parent_edge >= 0]
        return float(np.sum(self.weights[e]))


def _dual_adjacency(surface: SimplicialSurface):
    """Per face, sorted list of ``(neighbour face, interior edge rank)``."""
    adj = [[] for _ in range(surface.face_count)]
    for k, e in enumerate(surface.interior_edges):
        f, g = surface.edge_faces[e]
        adj[f].append((int(g), k))
        adj[g].append((int(f), k))
    for a in adj:
        a.sort()
    return adj


def build_tree(surface: SimplicialSurface, weights=None, strategy: str = "mst",
               root: int = 0) -> TraversalTree:
    """Spanning tree of the dual graph rooted at ``root``.

    ``"bfs"`` ignores weights, ``"mst"`` runs Prim's algorithm and ``"spt"``
    Dijkstra's; ``"pre"`` is an MST over precomputed weights. Ties are broken
    by ascending face index.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    nF = surface.face_count
    w = np.zeros(surface.n_angles) if weights is None else np.asarray(weights, float)
    adj = _dual_adjacency(surface)
    parent = -np.ones(nF, dtype=np.int64)
    pedge = -np.ones(nF, dtype=np.int64)
    visited = np.zeros(nF, bool)
    order = []
    if strategy == "bfs":
        visited[root] = True
        queue = deque([root])
        while queue:
            f = queue.popleft()
            order.append(f)
            for g, k in adj[f]:
                if not visited[g]:
                    visited[g] = True
                    parent[g], pedge[g] = f, k
                    queue.append(g)
    elif strategy in ("mst", "pre"):
        heap = [(0.0, root, -1, -1)]
        while heap:
            wt, f, p, k = heapq.heappop(heap)
            if visited[f]:
                continue
            visited[f] = True
            parent[f], pedge[f] = p, k
            order.append(f)
            for g, kk in adj[f]:
                if not visited[g]:
                    heapq.heappush(heap, (w[kk], g, f, kk))
    else:
        dist = np.full(nF, np.inf)
        dist[root] = 0.0
        heap = [(0.0, root)]
        while heap:
            d, f = heapq.heappop(heap)
            if visited[f]:
                continue
            visited[f] = True
            order.append(f)
            for g, kk in adj[f]:
                nd = d + w[kk]
                if not visited[g] and (nd < dist[g] or (nd == dist[g] and f < parent[g])):
                    dist[g] = nd
                    parent[g], pedge[g] = f, kk
                    heapq.heappush(heap, (nd, g))
    if len(order) != nF:
        raise RuntimeError("dual graph is disconnected")
    return TraversalTree(root, parent, pedge, np.array(order), strategy, w)


# -------------------------------------------------------------- traversal
def edge_vectors(F, l0, l1, l2, gamma2, gamma3):
    """Embedded edge vectors of a face from its frame, lengths and two angles.

    ``E1 = l0 F (1, 0, 0)``, ``E2 = l1 F (-cos g3, sin g3, 0)``,
    ``E3 = l2 F (-cos g2, -sin g2, 0)``; for a valid triangle they sum to zero.
    ``gamma3`` is the angle opposite ``l2`` and ``gamma2`` the one opposite ``l1``.
    """
    F = np.asarray(F, float)
    return (l0 * F @ np.array([1.0, 0.0, 0.0]),
            l1 * F @ np.array([-np.cos(gamma3), np.sin(gamma3), 0.0]),
            l2 * F @ np.array([-np.cos(gamma2), -np.sin(gamma2), 0.0]))


def _safe_angle(a, b, c):
    """Angle between sides ``a`` and ``b`` opposite ``c``; 0 for invalid triangles."""
    if not (a + b > c and a - b + c > 0 and -a + b + c > 0):
        return 0.0
    s = 0.5 * (a + b + c)
    return 2.0 * np.arctan2(np.sqrt((s - a) * (s - b)), np.sqrt(s * (s - c)))


def _polar(F):
    U, _, Vt = np.linalg.svd(F)
    return U @ Vt


@dataclass(frozen=True)
class FrameSeed:
    """Root face, position of its first vertex and its frame (columns t, b, n)."""

    face: int
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))


@dataclass
class TraversalResult:
    positions: np.ndarray
    frames: np.ndarray          # (F, 3, 3), anchored at the first directed edge of each face
    mismatch: np.ndarray        # per vertex, largest disagreement between placements
    flagged_faces: np.ndarray   # faces violating a triangle inequality


def traverse_reconstruct(surface: SimplicialSurface, z, tree: TraversalTree,
                         seed: FrameSeed | None = None, reorthonormalize: int = 64) -> TraversalResult:
    """Constructive reconstruction along ``tree``.

    Each face reached places at most one new vertex; a vertex reached again
    keeps its first position and the disagreement is recorded in
    ``mismatch``. Faces violating a triangle inequality use zero interior
    angles and are listed in ``flagged_faces``.
    """
    z = np.asarray(z, float)
    E = surface.edge_count
    lengths, theta = z[:E], z[E:]
    faces = surface.faces
    fe = surface.face_edges
    V = surface.vertex_count
    seed = seed or FrameSeed(tree.root)
    if seed.face != tree.root:
        raise ValueError("seed face must be the tree root")

    def angle_at(f, k):
        """Interior angle of face ``f`` at its ``k``-th vertex."""
        return _safe_angle(lengths[fe[f, k]], lengths[fe[f, (k + 2) % 3]],
                           lengths[fe[f, (k + 1) % 3]])

    frames = np.zeros((surface.face_count, 3, 3))
    anchor = -np.ones(surface.face_count, dtype=np.int64)   # local index k: anchored at faces[f,k] -> next
    X = np.full((V, 3), np.nan)
    mismatch = np.zeros(V)

    def place(v, p):
        if np.isnan(X[v, 0]):
            X[v] = p
        else:
            mismatch[v] = max(mismatch[v], float(np.linalg.norm(X[v] - p)))

    # root face
    f0 = seed.face
    F0 = np.asarray(seed.frame, float)
    a, b, c = faces[f0]
    frames[f0], anchor[f0] = F0, 0
    X[a] = np.asarray(seed.position, float)
    t, bb = F0[:, 0], F0[:, 1]
    ga = angle_at(f0, 0)
    X[b] = X[a] + lengths[fe[f0, 0]] * t
    X[c] = X[a] + lengths[fe[f0, 2]] * (np.cos(ga) * t - np.sin(ga) * bb)

    def reanchor(f, k_to):
        """Frame of face ``f`` rotated to anchor edge ``k_to``."""
        Fm, k = frames[f], anchor[f]
        while k != k_to:
            k1 = (k + 1) % 3
            # turn from edge k to edge k+1 around vertex faces[f, k+1]
            Fm = Fm @ axis_rotation(2, angle_at(f, k1) - np.pi)
            k = k1
        return Fm

    for step, g in enumerate(tree.order[1:], 1):
        f = tree.parent[g]
        e = surface.interior_edges[tree.parent_edge[g]]
        i, j = surface.edges[e]
        # orient the shared edge as v -> p inside the parent face
        if surface.halfedge_face(i, j) == f:
            v, p = i, j
        else:
            v, p = j, i
        kf = int(np.flatnonzero(faces[f] == v)[0])
        Ff = reanchor(f, kf)
        kg = int(np.flatnonzero(faces[g] == v)[0])
        x = faces[g, (kg + 1) % 3]
        Fg = Ff @ axis_rotation(0, theta[tree.parent_edge[g]]) @ axis_rotation(2, angle_at(g, kg))
        if reorthonormalize and step % reorthonormalize == 0:
            Fg = _polar(Fg)
        frames[g], anchor[g] = Fg, kg
        place(x, X[v] + lengths[fe[g, kg]] * Fg[:, 0])

    for f in range(surface.face_count):
        if anchor[f] != 0:
            frames[f] = reanchor(f, 0)
            anchor[f] = 0
    flagged = np.flatnonzero(_face_violations(surface, z))
    return TraversalResult(X, frames, mismatch, flagged)


def default_seed_face(system: ConstraintSystem, z) -> int:
    """Lowest-index face minimizing the summed residuals of its vertices."""
    r = vertex_residuals(system, z)
    return int(np.argmin(r[system.surface.faces].sum(axis=1)))


# ------------------------------------------------------------- refinement
def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def quadratic_residual(surface: SimplicialSurface, z_target, X, weights=None,
                       delta: float = 1e-2) -> float:
    """``W_q[z_target, Z(X)]`` with angle differences wrapped to ``(-pi, pi]``.

    Returns :data:`INFEASIBLE` for positions with a degenerate face.
    """
    r = _gn_residual(surface, z_target, X, weights, delta)
    return INFEASIBLE if r is None else float(r @ r)


def _gn_residual(surface, z_target, X, weights, delta):
    if weights is None:
        weights = quadratic_weights(surface, z_target)
    try:
        zx = forward_map(surface, X)
    except DegenerateFace:
        return None
    E = surface.edge_count
    zt = np.asarray(z_target, float)
    return np.concatenate([np.sqrt(weights.alpha) * (zx[:E] - zt[:E]),
                           delta * np.sqrt(weights.beta) * wrap_angle(zx[E:] - zt[E:])])


def variational_refine(surface: SimplicialSurface, z_target, X0, weights=None,
                       delta: float = 1e-2, max_iter: int = 1, min_step: float = 1e-10):
    """Gauss-Newton steps on ``W_q[z_target, Z(X)]``.

    The normal equations are regularized by ``rho = 1e-8 tr(J^T J) / dim`` to
    absorb the rigid-motion kernel. Steps are halved until the energy does
    not increase and no face degenerates.

    Returns
    -------
    X : ndarray
    history : list of float
        Energy before the first and after every accepted step.
    """
    if weights is None:
        weights = quadratic_weights(surface, z_target)
    X = np.array(X0, float)
    scale = np.concatenate([np.sqrt(weights.alpha), delta * np.sqrt(weights.beta)])
    r = _gn_residual(surface, z_target, X, weights, delta)
    if r is None:
        raise DegenerateFace("initial positions have a degenerate face")
    history = [float(r @ r)]
    for _ in range(max_iter):
        J = sparse.diags(scale) @ jacobian_forward_map(surface, X)
        JtJ = (J.T @ J).tocsc()
        n = JtJ.shape[0]
        rho = 1e-8 * JtJ.diagonal().sum() / n
        dx = -sparse.linalg.spsolve(JtJ + rho * sparse.identity(n, format="csc"), J.T @ r)
        alpha = 1.0
        while alpha >= min_step:
            Xn = X + alpha * dx.reshape(-1, 3)
            rn = _gn_residual(surface, z_target, Xn, weights, delta)
            if rn is not None and rn @ rn <= r @ r:
                break
            alpha *= 0.5
        else:
            break
        X, r = Xn, rn
        history.append(float(r @ r))
    return X, history


# ------------------------------------------------------------------ pipeline
@dataclass
class ReconstructionReport:
    strategy: str
    gn_steps: int
    seed_face: int
    max_violation: float
    mean_violation: float
    max_mismatch: float
    flagged_faces: int
    energy_traversal: float
    energy_final: float
    nric_error: float
    order: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "strategy", "gn_steps", "seed_face", "max_violation", "mean_violation",
            "max_mismatch", "flagged_faces", "energy_traversal", "energy_final", "nric_error")}


def reconstruct(surface: SimplicialSurface, z, strategy: str = "mst", gn_steps: int = 1,
                weights=None, system: ConstraintSystem | None = None, delta: float = 1e-2,
                seed: FrameSeed | None = None):
    """Traversal along a weighted tree followed by ``gn_steps`` Gauss-Newton steps.

    ``weights`` overrides the dual edge weights (needed for ``"pre"``).

    Returns
    -------
    X : ndarray, shape (V, 3)
    report : ReconstructionReport
    """
    system = system or ConstraintSystem(surface)
    z = np.asarray(z, float)
    if strategy == "pre" and weights is None:
        raise ValueError("strategy 'pre' needs preassembled weights")
    w = edge_weights(system, z) if weights is None else np.asarray(weights, float)
    f0 = seed.face if seed is not None else default_seed_face(system, z)
    tree = build_tree(surface, w, strategy, f0)
    trav = traverse_reconstruct(surface, z, tree, seed)
    X = trav.positions
    qw = quadratic_weights(surface, z)
    e0 = quadratic_residual(surface, z, X, qw, delta)
    if gn_steps > 0 and e0 < INFEASIBLE:
        X, hist = variational_refine(surface, z, X, qw, delta, gn_steps)
        e1 = hist[-1]
    else:
        e1 = e0
    try:
        err = float(np.max(np.abs(forward_map(surface, X) - z)))
    except DegenerateFace:
        err = INFEASIBLE
    viol = system.rotation_residual(z)
    report = ReconstructionReport(
        strategy=strategy, gn_steps=gn_steps, seed_face=f0,
        max_violation=float(viol.max()) if viol.size else 0.0,
        mean_violation=float(viol.mean()) if viol.size else 0.0,
        max_mismatch=float(trav.mismatch.max()), flagged_faces=len(trav.flagged_faces),
        energy_traversal=e0, energy_final=e1, nric_error=err, order=tree.rank)
    return X, report


def procrustes_rms(X, Y) -> float:
    """RMS distance between ``X`` and ``Y`` after the best rotation and translation."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    Xc, Yc = X - X.mean(0), Y - Y.mean(0)
    R, _ = Rotation.align_vectors(Yc, Xc)
    return float(np.sqrt(np.mean(np.sum((R.apply(Xc) - Yc) ** 2, axis=1))))

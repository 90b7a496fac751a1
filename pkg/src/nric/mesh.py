"""Connectivity of simplicial surfaces and the forward map to edge lengths and
dihedral angles.

The NRIC vector of a surface with ``E`` edges, ``E_int`` of them interior, is a
flat array of length ``E + E_int``: all edge lengths in edge order, followed by
the dihedral angles of the interior edges in edge order. Boundary edges carry
no angle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import DegenerateFace, MeshTopologyError, TriangleInequalityViolated

logger = logging.getLogger(__name__)

#: Sentinel for infinite energies / constraint values; never NaN.
INFEASIBLE = 1e300


@dataclass(frozen=True)
class VertexFan:
    """Ordered loop of faces and spoke edges around an interior vertex.

    ``faces[i]`` is the face between spokes ``spokes[i]`` and
    ``spokes[(i + 1) % n]``; ``rims[i]`` is the edge of ``faces[i]`` opposite
    to the vertex.
    """

    vertex: int
    spokes: np.ndarray
    faces: np.ndarray
    rims: np.ndarray

    @property
    def valence(self) -> int:
        return len(self.spokes)


class SimplicialSurface:
    """Immutable connectivity of an oriented, simply connected triangle mesh.

    Parameters
    ----------
    faces : array_like, shape (F, 3)
        Consistently oriented vertex triples.
    n_vertices : int, optional
        Number of vertices; defaults to ``faces.max() + 1``.

    Raises
    ------
    MeshTopologyError
        On non-manifold, non-orientable, disconnected or non simply connected
        input. Input is never repaired.
    """

    def __init__(self, faces, n_vertices: int | None = None):
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
            raise MeshTopologyError("faces must be a non-empty (F, 3) integer array")
        if n_vertices is None:
            n_vertices = int(faces.max()) + 1
        if faces.min() < 0 or faces.max() >= n_vertices:
            raise MeshTopologyError("face index out of range")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise MeshTopologyError("face with repeated vertex")
        self.faces = faces
        self.faces.setflags(write=False)
        self.vertex_count = int(n_vertices)
        self.face_count = len(faces)
        self._build_edges()
        self._check_topology()
        self._build_fans()

    # ------------------------------------------------------------------ build
    def _build_edges(self):
        F = self.faces
        tails = F.reshape(-1)
        heads = np.roll(F, -1, axis=1).reshape(-1)
        he_face = np.repeat(np.arange(self.face_count), 3)
        he_key = tails * self.vertex_count + heads
        if len(np.unique(he_key)) != len(he_key):
            raise MeshTopologyError(
                "directed edge used twice: mesh is non-manifold or inconsistently oriented")
        self._he_lookup = dict(zip(he_key.tolist(), he_face.tolist()))

        lo = np.minimum(tails, heads)
        hi = np.maximum(tails, heads)
        und = lo * self.vertex_count + hi
        keys, inverse = np.unique(und, return_inverse=True)
        E = len(keys)
        edges = np.stack([keys // self.vertex_count, keys % self.vertex_count], axis=1)
        edge_faces = -np.ones((E, 2), dtype=np.int64)
        positive = tails < heads
        edge_faces[inverse[positive], 0] = he_face[positive]
        edge_faces[inverse[~positive], 1] = he_face[~positive]
        # face_edges[f, k] is the edge from faces[f, k] to faces[f, k+1]
        self.face_edges = inverse.reshape(-1, 3)
        self.edges = edges
        self.edge_faces = edge_faces
        self.edge_count = E
        interior = np.all(edge_faces >= 0, axis=1)
        self.interior_edges = np.flatnonzero(interior)
        self.boundary_edges = np.flatnonzero(~interior)
        rank = -np.ones(E, dtype=np.int64)
        rank[self.interior_edges] = np.arange(len(self.interior_edges))
        self.interior_rank = rank
        on_boundary = np.zeros(self.vertex_count, dtype=bool)
        on_boundary[edges[self.boundary_edges].reshape(-1)] = True
        self.boundary_vertex_mask = on_boundary
        used = np.zeros(self.vertex_count, dtype=bool)
        used[F.reshape(-1)] = True
        if not used.all():
            raise MeshTopologyError("isolated vertices are not supported")
        self.interior_vertices = np.flatnonzero(~on_boundary)
        for arr in (self.face_edges, self.edges, self.edge_faces, self.interior_edges,
                    self.boundary_edges, self.interior_rank, self.interior_vertices,
                    self.boundary_vertex_mask):
            arr.setflags(write=False)

    def _check_topology(self):
        n_comp, _ = sparse.csgraph.connected_components(self.dual_graph, directed=False)
        if n_comp != 1:
            raise MeshTopologyError(f"mesh has {n_comp} connected components")
        loops = self._boundary_loop_count()
        chi = self.euler_characteristic
        if not ((loops == 0 and chi == 2) or (loops == 1 and chi == 1)):
            raise MeshTopologyError(
                f"mesh is not simply connected (Euler characteristic {chi}, "
                f"{loops} boundary loops)")

    def _boundary_loop_count(self) -> int:
        b = self.boundary_edges
        if len(b) == 0:
            return 0
        verts = self.edges[b]
        deg = np.bincount(verts.reshape(-1), minlength=self.vertex_count)
        if np.any(deg[deg > 0] != 2):
            raise MeshTopologyError("non-manifold boundary vertex")
        g = sparse.coo_matrix((np.ones(len(b)), (verts[:, 0], verts[:, 1])),
                              shape=(self.vertex_count,) * 2)
        n, labels = sparse.csgraph.connected_components(g, directed=False)
        return len(np.unique(labels[deg > 0]))

    def _build_fans(self):
        fans = []
        vertex_faces = [[] for _ in range(self.vertex_count)]
        for f, tri in enumerate(self.faces.tolist()):
            for v in tri:
                vertex_faces[v].append(f)
        for v in self.interior_vertices.tolist():
            start = vertex_faces[v][0]
            spokes, faces, rims = [], [], []
            f = start
            while True:
                tri = self.faces[f].tolist()
                k = tri.index(v)
                x, y = tri[(k + 1) % 3], tri[(k + 2) % 3]
                # face (v, x, y): incoming spoke v-y, outgoing spoke v-x
                spokes.append(self.face_edges[f, (k + 2) % 3])
                faces.append(f)
                rims.append(self.face_edges[f, (k + 1) % 3])
                f = self._he_lookup.get(x * self.vertex_count + v)
                if f is None:
                    raise MeshTopologyError(f"open fan at interior vertex {v}")
                if f == start:
                    break
                if len(faces) > len(vertex_faces[v]):
                    raise MeshTopologyError(f"non-manifold vertex {v}")
            if len(faces) != len(vertex_faces[v]):
                raise MeshTopologyError(f"non-manifold vertex {v} (multiple fans)")
            fans.append(VertexFan(v, np.array(spokes), np.array(faces), np.array(rims)))
        self.vertex_fans = fans

    # ------------------------------------------------------------- properties
    @property
    def euler_characteristic(self) -> int:
        return self.vertex_count - self.edge_count + self.face_count

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    @property
    def dim(self) -> int:
        """Length of an NRIC vector for this surface."""
        return self.edge_count + len(self.interior_edges)

    @property
    def n_angles(self) -> int:
        return len(self.interior_edges)

    @cached_property
    def dual_graph(self) -> sparse.csr_matrix:
        """Face adjacency across interior edges (symmetric, entries = edge index + 1)."""
        ie = self.interior_edges
        f0, f1 = self.edge_faces[ie, 0], self.edge_faces[ie, 1]
        data = np.concatenate([ie + 1, ie + 1]).astype(float)
        g = sparse.coo_matrix((data, (np.concatenate([f0, f1]), np.concatenate([f1, f0]))),
                              shape=(self.face_count,) * 2)
        return g.tocsr()

    def face_lengths(self, lengths: np.ndarray) -> np.ndarray:
        """Edge lengths per face, column k opposite to vertex ``faces[:, (k + 2) % 3]``."""
        return np.asarray(lengths)[self.face_edges]

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(lengths, angles)`` views of an NRIC vector."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"NRIC vector has length {z.shape[-1]}, expected {self.dim}")
        return z[..., :self.edge_count], z[..., self.edge_count:]

    def join(self, lengths: np.ndarray, angles: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(lengths, float), np.asarray(angles, float)])

    def halfedge_face(self, tail: int, head: int) -> int:
        """Face containing the directed edge ``tail -> head``, or -1."""
        return self._he_lookup.get(int(tail) * self.vertex_count + int(head), -1)

    def length_index(self, e) -> np.ndarray:
        return np.asarray(e)

    def angle_index(self, e) -> np.ndarray:
        """Position in the NRIC vector of the angle of interior edge(s) ``e``."""
        r = self.interior_rank[np.asarray(e)]
        if np.any(r < 0):
            raise ValueError("boundary edges carry no dihedral angle")
        return self.edge_count + r

    def __repr__(self):
        return (f"SimplicialSurface(V={self.vertex_count}, E={self.edge_count}, "
                f"F={self.face_count}, interior V={len(self.interior_vertices)})")


# ---------------------------------------------------------------- per face
def triangle_inequalities(surface: SimplicialSurface, z) -> tuple[np.ndarray, bool]:
    """Per-face triple ``(l_i + l_j - l_k, l_i - l_j + l_k, -l_i + l_j + l_k)``.

    Returns the ``(F, 3)`` array and whether every entry is strictly positive.
    """
    lengths = np.asarray(z, float)[:surface.edge_count]
    L = surface.face_lengths(lengths)
    li, lj, lk = L[:, 0], L[:, 1], L[:, 2]
    T = np.stack([li + lj - lk, li - lj + lk, -li + lj + lk], axis=1)
    return T, bool(np.all(T > 0))


def cosine_rule(a, b, c):
    """``Q(a, b, c) = (a^2 + b^2 - c^2) / (2ab)``, cosine of the angle opposite ``c``."""
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    return (a * a + b * b - c * c) / (2.0 * a * b)


def _admissible(a, b, c):
    return (a + b > c) & (a - b + c > 0) & (-a + b + c > 0)


def interior_angle(a, b, c):
    """Angle between sides ``a`` and ``b`` (opposite ``c``), in radians.

    Uses the half-angle form, which stays accurate for nearly flat triangles.
    """
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    if not np.all(_admissible(a, b, c)):
        raise TriangleInequalityViolated("edge lengths violate the strict triangle inequality")
    s = 0.5 * (a + b + c)
    # tan(gamma/2) = sqrt((s-a)(s-b) / (s (s-c)))
    return 2.0 * np.arctan2(np.sqrt((s - a) * (s - b)), np.sqrt(s * (s - c)))


def heron_squared(a, b, c):
    """Squared area ``(a+b+c)(-a+b+c)(a-b+c)(a+b-c) / 16``; negative if inadmissible."""
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    return (a + b + c) * (-a + b + c) * (a - b + c) * (a + b - c) / 16.0


def face_area(a, b, c):
    """Heron area of a triangle with side lengths ``a, b, c``."""
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    if not np.all(_admissible(a, b, c)):
        raise TriangleInequalityViolated("edge lengths violate the strict triangle inequality")
    # sorted-sides variant of Heron's formula (numerically stable)
    s = np.sort(np.stack(np.broadcast_arrays(a, b, c)), axis=0)[::-1]
    x, y, w = s[0], s[1], s[2]
    return 0.25 * np.sqrt((x + (y + w)) * (w - (x - y)) * (w + (x - y)) * (x + (y - w)))


def face_areas_from_lengths(surface: SimplicialSurface, lengths) -> np.ndarray:
    L = surface.face_lengths(lengths)
    return face_area(L[:, 0], L[:, 1], L[:, 2])


def face_angles(surface: SimplicialSurface, lengths) -> np.ndarray:
    """Interior angles per face; column k is the angle at vertex ``faces[:, k]``."""
    L = surface.face_lengths(lengths)
    # vertex k sits between edges k-1 and k, opposite edge k+1
    return np.stack([interior_angle(L[:, (k + 2) % 3], L[:, k], L[:, (k + 1) % 3])
                     for k in range(3)], axis=1)


def angle_defects(surface: SimplicialSurface, lengths) -> np.ndarray:
    """``2*pi - sum of interior angles`` at each interior vertex."""
    ang = face_angles(surface, lengths)
    total = np.bincount(surface.faces.reshape(-1), weights=ang.reshape(-1),
                        minlength=surface.vertex_count)
    return 2.0 * np.pi - total[surface.interior_vertices]


# ------------------------------------------------------------ vertex space
def _check_positions(surface: SimplicialSurface, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (surface.vertex_count, 3):
        raise ValueError(f"positions must have shape ({surface.vertex_count}, 3)")
    return X


def face_normals(surface: SimplicialSurface, X, check: bool = True):
    """Unit normals and areas of all faces (right-hand rule on face order)."""
    X = _check_positions(surface, X)
    P = X[surface.faces]
    n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    dbl = np.linalg.norm(n, axis=1)
    if check:
        scale = np.ptp(X, axis=0).max() if len(X) > 1 else 1.0
        bad = dbl <= 1e-14 * max(scale, 1e-300) ** 2
        if np.any(bad):
            raise DegenerateFace(f"{int(bad.sum())} degenerate face(s), first {np.flatnonzero(bad)[0]}")
    return n / dbl[:, None], 0.5 * dbl


def check_generic(surface: SimplicialSurface, X) -> None:
    """Raise :class:`DegenerateFace` if any face of ``X`` has zero area."""
    face_normals(surface, X)


def edge_lengths(surface: SimplicialSurface, X) -> np.ndarray:
    X = _check_positions(surface, X)
    d = X[surface.edges[:, 1]] - X[surface.edges[:, 0]]
    return np.linalg.norm(d, axis=1)


def dihedral_angles(surface: SimplicialSurface, X, normals=None) -> np.ndarray:
    """Signed dihedral angle at every interior edge.

    For edge ``(i, j)`` with ``i < j``, let ``f`` be the face containing the
    directed edge ``i -> j`` and ``g`` the other face; then
    ``theta = atan2(<N_f x N_g, e>, <N_f, N_g>)`` with ``e`` the unit vector
    from ``i`` to ``j``.
    """
    X = _check_positions(surface, X)
    if normals is None:
        normals, _ = face_normals(surface, X)
    ie = surface.interior_edges
    i, j = surface.edges[ie, 0], surface.edges[ie, 1]
    e = X[j] - X[i]
    e /= np.linalg.norm(e, axis=1)[:, None]
    nf = normals[surface.edge_faces[ie, 0]]
    ng = normals[surface.edge_faces[ie, 1]]
    s = np.einsum("ij,ij->i", np.cross(nf, ng), e)
    c = np.einsum("ij,ij->i", nf, ng)
    return np.arctan2(s, c)


def forward_map(surface: SimplicialSurface, X) -> np.ndarray:
    """NRIC vector ``Z(X) = (l(X), theta(X))`` of vertex positions ``X``."""
    normals, _ = face_normals(surface, X)
    return np.concatenate([edge_lengths(surface, X), dihedral_angles(surface, X, normals)])


def _opposite_vertices(surface: SimplicialSurface, edges_idx):
    """Vertices opposite edge ``(i, j)`` in its positive and negative face."""
    F = surface.faces
    i, j = surface.edges[edges_idx, 0], surface.edges[edges_idx, 1]
    out = []
    for side in (0, 1):
        tri = F[surface.edge_faces[edges_idx, side]]
        out.append(tri.sum(axis=1) - i - j)
    return out


def jacobian_forward_map(surface: SimplicialSurface, X) -> sparse.csr_matrix:
    """Sparse Jacobian of :func:`forward_map` with respect to flattened positions.

    Rows follow the NRIC layout; column ``3 * v + k`` is coordinate ``k`` of
    vertex ``v``.
    """
    X = _check_positions(surface, X)
    normals, areas = face_normals(surface, X)
    E = surface.edge_count
    i, j = surface.edges[:, 0], surface.edges[:, 1]
    d = X[j] - X[i]
    l = np.linalg.norm(d, axis=1)
    u = d / l[:, None]
    rows = [np.repeat(np.arange(E), 6)]
    cols = [np.stack([3 * i, 3 * i + 1, 3 * i + 2, 3 * j, 3 * j + 1, 3 * j + 2], 1).ravel()]
    vals = [np.concatenate([-u, u], axis=1).ravel()]

    ie = surface.interior_edges
    if len(ie):
        a, b = i[ie], j[ie]
        o1, o2 = _opposite_vertices(surface, ie)
        f1, f2 = surface.edge_faces[ie, 0], surface.edge_faces[ie, 1]
        le = l[ie]
        ue = u[ie]
        n1, n2 = normals[f1], normals[f2]
        h1 = 2.0 * areas[f1] / le
        h2 = 2.0 * areas[f2] / le
        # moving an opposite vertex along its face normal rotates that face about the edge
        g1 = -n1 / h1[:, None]
        g2 = -n2 / h2[:, None]
        t1 = np.einsum("ij,ij->i", X[o1] - X[a], ue) / le
        t2 = np.einsum("ij,ij->i", X[o2] - X[a], ue) / le
        ga = -(1 - t1)[:, None] * g1 - (1 - t2)[:, None] * g2
        gb = -t1[:, None] * g1 - t2[:, None] * g2
        r = E + np.arange(len(ie))
        for vert, g in ((a, ga), (b, gb), (o1, g1), (o2, g2)):
            rows.append(np.repeat(r, 3))
            cols.append((3 * vert[:, None] + np.arange(3)).ravel())
            vals.append(g.ravel())
    J = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(surface.dim, 3 * surface.vertex_count))
    return J.tocsr()

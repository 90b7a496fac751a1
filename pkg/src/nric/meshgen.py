"""Generators for the synthetic meshes used by tests, demos and the CLI.

All generators return ``(faces, positions)`` with faces oriented so that the
right-hand normal points outward (closed meshes) or towards +z (plates).
"""

from __future__ import annotations

import numpy as np


def tetrahedron(edge: float = 1.0):
    X = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    X *= edge / np.sqrt(8.0)
    F = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return F, X


def icosahedron(radius: float = 1.0):
    p = (1 + np.sqrt(5)) / 2
    X = np.array([[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
                  [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
                  [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], float)
    X *= radius / np.linalg.norm(X[0])
    F = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return F, X


def icosphere(subdivisions: int = 3, radius: float = 1.0):
    """Loop-style midpoint subdivision of the icosahedron projected to a sphere."""
    F, X = icosahedron(1.0)
    verts = [tuple(x) for x in X]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in F.tolist():
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = np.array(new_faces)
    return F, radius * np.array(verts)


def grid(nx: int, ny: int, width: float = 1.0, height: float | None = None,
         pattern: str = "alternating"):
    """Flat triangulated rectangle with ``nx x ny`` quads in the z = 0 plane.

    ``pattern`` selects the quad diagonals: ``"uniform"`` (all the same
    direction) or ``"alternating"`` (checkerboard, regular valence-8/4 vertices).
    """
    if height is None:
        height = width * ny / nx
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    X = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    F = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if pattern == "uniform" or (i + j) % 2 == 0:
                F += [[a, b, c], [a, c, d]]
            else:
                F += [[a, b, d], [b, c, d]]
    return np.array(F), X


def bumpy_plate(nx: int = 8, ny: int = 8, amplitude: float = 0.1, seed: int = 0):
    """Grid plate with a smooth random height field."""
    F, X = grid(nx, ny)
    rng = np.random.default_rng(seed)
    c = rng.normal(size=4)
    x, y = X[:, 0], X[:, 1]
    X[:, 2] = amplitude * (np.sin(np.pi * (c[0] + 2 * x)) * np.cos(np.pi * (c[1] + 1.5 * y))
                           + 0.5 * np.sin(np.pi * (c[2] + 3 * x * y + c[3])))
    return F, X


def dome(nx: int = 8, ny: int = 8, height: float = 0.2):
    """Plate bent into a paraboloid cap; ``height < 0`` bends it the other way."""
    F, X = grid(nx, ny)
    x, y = X[:, 0] - X[:, 0].mean(), X[:, 1] - X[:, 1].mean()
    r2 = (x * x + y * y) / max((x * x + y * y).max(), 1e-300)
    X[:, 2] = height * (1.0 - r2)
    return F, X


def cylinder_bend(nx: int = 8, ny: int = 8, angle: float = 1.0):
    """Plate rolled isometrically onto a cylinder around the y axis.

    ``angle`` is the total turning angle; its sign picks the bending direction.
    """
    F, X = grid(nx, ny)
    if abs(angle) < 1e-12:
        return F, X
    w = X[:, 0].max()
    R = w / angle
    s = X[:, 0] - w / 2
    X[:, 0] = R * np.sin(s / R)
    X[:, 2] = R * (1 - np.cos(s / R))
    return F, X


def saddle(nx: int = 6, ny: int = 6, amplitude: float = 0.3, monkey: bool = False):
    """Hyperbolic saddle patch ``z = a(x^2 - y^2)`` or monkey saddle ``a(x^3 - 3xy^2)``."""
    F, X = grid(nx, ny)
    x = 2 * (X[:, 0] - X[:, 0].mean())
    y = 2 * (X[:, 1] - X[:, 1].mean()) * nx / ny
    X[:, 2] = amplitude * ((x ** 3 - 3 * x * y * y) if monkey else (x * x - y * y))
    return F, X


def creased_strip(nx: int = 20, ny: int = 10, fold: float = 0.0, width: float = 2.0):
    """Flat strip with a straight crease along ``x = width / 2``.

    ``nx`` must be even so the crease lies on grid lines. The right half is
    rotated about the crease line by ``fold`` radians. Uses uniform diagonals,
    so no diagonal crosses the crease.
    """
    if nx % 2:
        raise ValueError("nx must be even")
    F, X = grid(nx, ny, width=width, height=width * ny / nx, pattern="uniform")
    xc = width / 2
    right = X[:, 0] > xc + 1e-12
    dx = X[right, 0] - xc
    X[right, 0] = xc + dx * np.cos(fold)
    X[right, 2] = dx * np.sin(fold)
    return F, X


def crease_edges(faces, X, x_crease: float, tol: float = 1e-9):
    """Edges (vertex pairs) lying on the line ``x = x_crease`` of a flat layout."""
    pairs = set()
    for tri in np.asarray(faces).tolist():
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            if abs(X[a, 0] - x_crease) < tol and abs(X[b, 0] - x_crease) < tol:
                pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


def torus(n_major: int = 8, n_minor: int = 6, R: float = 1.0, r: float = 0.3):
    """Closed genus-one mesh (rejected by :class:`SimplicialSurface`)."""
    u = np.linspace(0, 2 * np.pi, n_major, endpoint=False)
    v = np.linspace(0, 2 * np.pi, n_minor, endpoint=False)
    U, V = np.meshgrid(u, v, indexing="ij")
    X = np.stack([(R + r * np.cos(V)) * np.cos(U), (R + r * np.cos(V)) * np.sin(U),
                  r * np.sin(V)], -1).reshape(-1, 3)

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    F = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            F += [[a, b, c], [a, c, d]]
    return np.array(F), X


def random_rigid_motion(rng: np.random.Generator):
    """Random rotation matrix and translation vector."""
    A = rng.normal(size=(3, 3))
    Qm, R = np.linalg.qr(A)
    Qm *= np.sign(np.diag(R))
    if np.linalg.det(Qm) < 0:
        Qm[:, 0] *= -1
    return Qm, rng.normal(size=3)

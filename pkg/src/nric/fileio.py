"""Mesh and NRIC file formats.

NRIC files are plain text::

    NRIC <V> <E> <F>
    <v0> <v1> <length> <angle|NA>      # E lines, canonical edge order
    <a> <b> <c>                        # F lines, oriented faces

Numbers carry 17 significant digits so a write/read cycle is lossless. The
face lines are needed to rebuild the connectivity.

Constraint files fix NRIC entries, one directive per line::

    L <edge> [value]     fix the length of an edge
    A <edge> [value]     fix the dihedral angle of an interior edge
    L*                   fix all lengths
    A*                   fix all angles

A missing value keeps the current value of the entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import SimplicialSurface


# ------------------------------------------------------------------ meshes
def _index(tok: str, n_vertices: int, lineno: int) -> int:
    try:
        i = int(tok.split("/")[0])
    except ValueError:
        raise ParseError(f"line {lineno}: bad vertex index {tok!r}") from None
    return i - 1 if i > 0 else n_vertices + i


def read_obj(path):
    """Vertices and triangles of an OBJ file (other records are ignored)."""
    verts, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            try:
                verts.append([float(t) for t in parts[1:4]])
            except ValueError:
                raise ParseError(f"line {lineno}: bad vertex") from None
            if len(verts[-1]) != 3:
                raise ParseError(f"line {lineno}: vertex needs three coordinates")
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: only triangles are supported")
            faces.append([_index(t, len(verts), lineno) for t in parts[1:]])
    if not faces:
        raise ParseError("no faces found")
    F = np.array(faces, dtype=np.int64)
    if F.min() < 0 or F.max() >= len(verts):
        raise ParseError("face index out of range")
    return F, np.array(verts, float)


def write_obj(path, X, faces, header: str | None = None):
    lines = [f"# {h}" for h in (header.splitlines() if header else [])]
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(X, float)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_off(path):
    tokens = []
    for raw in Path(path).read_text().splitlines():
        tokens += raw.split("#", 1)[0].split()
    if not tokens or tokens[0] != "OFF":
        raise ParseError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        X = np.array(tokens[pos:pos + 3 * nv], float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise ParseError("only triangles are supported")
            faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += 1 + k
    except (IndexError, ValueError):
        raise ParseError("truncated or malformed OFF file") from None
    F = np.array(faces, dtype=np.int64)
    if F.size and (F.min() < 0 or F.max() >= nv):
        raise ParseError("face index out of range")
    return F, X


def write_off(path, X, faces):
    X = np.asarray(X, float)
    faces = np.asarray(faces)
    lines = ["OFF", f"{len(X)} {len(faces)} 0"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in X]
    lines += [f"3 {a} {b} {c}" for a, b, c in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".off":
        return read_off(path)
    raise ParseError(f"unsupported mesh format {suffix!r}")


def write_mesh(path, X, faces):
    if Path(path).suffix.lower() == ".off":
        write_off(path, X, faces)
    else:
        write_obj(path, X, faces)


# -------------------------------------------------------------------- NRIC
def write_nric(path, surface: SimplicialSurface, z):
    z = np.asarray(z, float)
    E = surface.edge_count
    lines = [f"NRIC {surface.vertex_count} {E} {surface.face_count}"]
    for e, (a, b) in enumerate(surface.edges):
        r = surface.interior_rank[e]
        ang = "NA" if r < 0 else f"{z[E + r]:.17g}"
        lines.append(f"{a} {b} {z[e]:.17g} {ang}")
    lines += [f"{a} {b} {c}" for a, b, c in surface.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_nric(path):
    """Returns ``(surface, z)``."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or rows[0][0] != "NRIC" or len(rows[0]) != 4:
        raise ParseError("missing 'NRIC <V> <E> <F>' header")
    try:
        V, E, F = (int(t) for t in rows[0][1:])
    except ValueError:
        raise ParseError("bad NRIC header") from None
    if len(rows) != 1 + E + F:
        raise ParseError(f"expected {E} edge and {F} face lines, found {len(rows) - 1} lines")
    try:
        faces = np.array([[int(t) for t in r] for r in rows[1 + E:]], dtype=np.int64)
    except ValueError:
        raise ParseError("bad face line") from None
    if faces.shape != (F, 3):
        raise ParseError("face lines need three vertex indices")
    surface = SimplicialSurface(faces, V)
    if surface.edge_count != E:
        raise ParseError("edge count does not match the faces")
    z = np.empty(surface.dim)
    for e, r in enumerate(rows[1:1 + E]):
        if len(r) != 4:
            raise ParseError(f"edge line {e + 1}: expected '<v0> <v1> <length> <angle|NA>'")
        a, b = int(r[0]), int(r[1])
        if (min(a, b), max(a, b)) != tuple(surface.edges[e]):
            raise ParseError(f"edge line {e + 1}: edges must be listed in canonical order")
        z[e] = float(r[2])
        k = surface.interior_rank[e]
        if (k < 0) != (r[3] == "NA"):
            raise ParseError(f"edge line {e + 1}: angle must be NA exactly on boundary edges")
        if k >= 0:
            z[E + k] = float(r[3])
    return surface, z


def write_order_sidecar(path, order):
    """One integer per line: the traversal rank of each face."""
    Path(path).write_text("".join(f"{int(r)}\n" for r in order))


# -------------------------------------------------------------- constraints
@dataclass
class CoordinateConstraints:
    """Fixed NRIC entries: ``free`` mask plus values to impose on fixed entries."""

    free: np.ndarray
    values: dict

    def apply(self, z) -> np.ndarray:
        z = np.array(z, float)
        for i, v in self.values.items():
            z[i] = v
        return z

    @property
    def n_fixed(self) -> int:
        return int(np.sum(~self.free))


def parse_constraints(text: str, surface: SimplicialSurface) -> CoordinateConstraints:
    """Parse constraint directives against ``surface``.

    Raises
    ------
    ParseError
        On unknown directives, out-of-range or boundary edges, or two
        different values for the same entry.
    """
    E = surface.edge_count
    free = np.ones(surface.dim, bool)
    values: dict[int, float] = {}

    def fix(i, val, lineno):
        if val is not None:
            if i in values and values[i] != val:
                raise ParseError(f"line {lineno}: conflicting values for NRIC entry {i}")
            values[i] = val
        free[i] = False

    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        kind = parts[0]
        if kind in ("L*", "A*"):
            if len(parts) != 1:
                raise ParseError(f"line {lineno}: {kind} takes no arguments")
            rng = range(E) if kind == "L*" else range(E, surface.dim)
            for i in rng:
                fix(i, None, lineno)
            continue
        if kind not in ("L", "A") or len(parts) not in (2, 3):
            raise ParseError(f"line {lineno}: expected 'L|A <edge> [value]', 'L*' or 'A*'")
        try:
            e = int(parts[1])
            val = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise ParseError(f"line {lineno}: bad number") from None
        if not 0 <= e < E:
            raise ParseError(f"line {lineno}: edge {e} out of range")
        if kind == "L":
            if val is not None and val <= 0:
                raise ParseError(f"line {lineno}: lengths must be positive")
            fix(e, val, lineno)
        else:
            r = surface.interior_rank[e]
            if r < 0:
                raise ParseError(f"line {lineno}: boundary edge {e} has no angle")
            if val is not None and not -np.pi < val < np.pi:
                raise ParseError(f"line {lineno}: angle must lie in (-pi, pi)")
            fix(E + r, val, lineno)
    return CoordinateConstraints(free, values)


def read_constraints(path, surface: SimplicialSurface) -> CoordinateConstraints:
    return parse_constraints(Path(path).read_text(), surface)

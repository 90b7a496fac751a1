import numpy as np
import pytest

from nric import meshgen
from nric.integrability import ConstraintSystem
from nric.mesh import SimplicialSurface, forward_map

MESHES = {
    "tetrahedron": lambda: meshgen.tetrahedron(),
    "icosahedron": lambda: meshgen.icosahedron(),
    "icosphere": lambda: meshgen.icosphere(2),
    "bumpy_plate": lambda: meshgen.bumpy_plate(6, 6, 0.15, seed=1),
    "dome": lambda: meshgen.dome(6, 6, 0.3),
    "saddle": lambda: meshgen.saddle(5, 5, 0.3),
    "creased_strip": lambda: meshgen.creased_strip(8, 4, 0.7),
}


def load(name):
    F, X = MESHES[name]()
    surface = SimplicialSurface(F, len(X))
    return surface, X, forward_map(surface, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(MESHES))
def any_mesh(request):
    return load(request.param)


@pytest.fixture
def dome_case():
    surface, X, z = load("dome")
    return surface, X, z, ConstraintSystem(surface)


def perturbed(z, surface, rng, scale=0.02):
    """Feasible point near ``z``: relative length noise and absolute angle noise."""
    E = surface.edge_count
    out = z.copy()
    out[:E] *= np.exp(scale * rng.standard_normal(E))
    out[E:] += scale * rng.standard_normal(len(z) - E)
    return out


def fd_gradient(f, x, h):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(f, x, h):
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


ACCEPTANCE_LINES = []


def record(number: int, ok: bool, detail: str):
    """Store (and print) one acceptance line."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

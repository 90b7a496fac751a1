import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from nric.errors import ParseError
from nric.fileio import (parse_constraints, read_mesh, read_nric, read_obj, write_mesh,
                         write_nric)
from nric.mesh import SimplicialSurface

from conftest import MESHES, load


@pytest.mark.parametrize("suffix", [".obj", ".off"])
def test_mesh_round_trip(tmp_path, suffix):
    surface, X, z = load("bumpy_plate")
    path = tmp_path / f"m{suffix}"
    write_mesh(path, X, surface.faces)
    F, Y = read_mesh(path)
    np.testing.assert_array_equal(F, surface.faces)
    np.testing.assert_array_equal(Y, X)


def test_obj_extras(tmp_path):
    path = tmp_path / "a.obj"
    path.write_text("# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 -1//1\n")
    F, X = read_obj(path)
    np.testing.assert_array_equal(F, [[0, 1, 2]])


@pytest.mark.parametrize("text", ["v 0 0 0\nf 1 2 3\n", "v 0 0\nf 1 1 1\n",
                                  "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n", "v 0 0 0\n",
                                  "v a b c\nf 1 2 3\n"])
def test_obj_errors(tmp_path, text):
    path = tmp_path / "bad.obj"
    path.write_text(text)
    with pytest.raises(ParseError):
        read_obj(path)


def test_unknown_format(tmp_path):
    with pytest.raises(ParseError):
        read_mesh(tmp_path / "x.ply")


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(name=st.sampled_from(sorted(MESHES)), seed=st.integers(0, 2 ** 31))
def test_nric_round_trip(tmp_path, name, seed):
    surface, X, z = load(name)
    rng = np.random.default_rng(seed)
    z = z * np.exp(1e-3 * rng.standard_normal(len(z)))
    path = tmp_path / "z.nric"
    write_nric(path, surface, z)
    s2, z2 = read_nric(path)
    np.testing.assert_array_equal(s2.faces, surface.faces)
    np.testing.assert_array_equal(z2, z)


def test_nric_errors(tmp_path):
    surface, X, z = load("saddle")
    path = tmp_path / "z.nric"
    write_nric(path, surface, z)
    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.nric"
    for broken in (["NRIX"] + lines[1:], lines[:-1], [lines[0], lines[2], lines[1]] + lines[3:]):
        bad.write_text("\n".join(broken))
        with pytest.raises(ParseError):
            read_nric(bad)
    # boundary edge with an angle
    e = surface.boundary_edges[0]
    tampered = list(lines)
    tampered[1 + e] = tampered[1 + e].replace("NA", "0.1")
    bad.write_text("\n".join(tampered))
    with pytest.raises(ParseError):
        read_nric(bad)


def test_constraints():
    surface, X, z = load("saddle")
    E = surface.edge_count
    e = surface.interior_edges[2]
    c = parse_constraints(f"# fix\nL 0 1.5\nA {e} 0.25\nL 3\n", surface)
    assert c.n_fixed == 3
    zc = c.apply(z)
    assert zc[0] == 1.5 and zc[E + surface.interior_rank[e]] == 0.25 and zc[3] == z[3]
    assert not c.free[3]
    c = parse_constraints("L*\nA*\n", surface)
    assert c.n_fixed == surface.dim
    # repeating the same value is fine
    parse_constraints("L 0 1.5\nL 0 1.5\n", surface)


@pytest.mark.parametrize("text", ["L 0 1\nL 0 2", "X 1", "L 99999", "L 0 -1", "A 0 0.1",
                                  "A* 3", "L zero", "A {interior} 4.0"])
def test_constraint_errors(text):
    surface, X, z = load("saddle")
    text = text.replace("{interior}", str(surface.interior_edges[0]))
    assert surface.interior_rank[0] < 0 or "A 0" not in text
    with pytest.raises(ParseError):
        parse_constraints(text, surface)

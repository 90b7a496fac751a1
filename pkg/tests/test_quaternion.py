import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from nric.errors import TriangleInequalityViolated
from nric.quaternion import (Quaternion, q0, q2, qconj, qmul, qrotation_matrix,
                             transition_derivatives, transition_quaternion)

from conftest import fd_jacobian, rel_err

unit = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.array(v) / np.linalg.norm(v))


@st.composite
def triangles(draw):
    a = draw(st.floats(0.2, 5))
    b = draw(st.floats(0.2, 5))
    frac = draw(st.floats(0.02, 0.98))
    c = abs(a - b) + frac * (a + b - abs(a - b))
    theta = draw(st.floats(-3.1, 3.1))
    return theta, a, b, c


@settings(max_examples=100, deadline=None)
@given(triangles())
def test_transition_is_unit(args):
    q = transition_quaternion(*args)
    assert abs(np.linalg.norm(q) - 1) < 1e-14


def test_transition_examples():
    np.testing.assert_allclose(transition_quaternion(0, 1, 1, 1), [np.sqrt(3) / 2, 0, 0, 0.5],
                               atol=1e-15)
    np.testing.assert_allclose(transition_quaternion(np.pi / 2, 3, 4, 5),
                               qmul(q0(np.pi / 2), q2(np.pi / 2)), atol=1e-15)
    with pytest.raises(TriangleInequalityViolated):
        transition_quaternion(0.0, 1, 1, 2)


@settings(max_examples=50, deadline=None)
@given(unit, unit)
def test_product_matches_scipy(p, q):
    # scipy stores (x, y, z, w)
    Rp = Rotation.from_quat(np.r_[p[1:], p[0]])
    Rq = Rotation.from_quat(np.r_[q[1:], q[0]])
    np.testing.assert_allclose(qrotation_matrix(qmul(p, q)), (Rp * Rq).as_matrix(), atol=1e-12)
    np.testing.assert_allclose(qmul(p, qconj(p)), [1, 0, 0, 0], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(unit, unit, unit)
def test_product_associative(p, q, r):
    np.testing.assert_allclose(qmul(qmul(p, q), r), qmul(p, qmul(q, r)), atol=1e-14)


def test_quaternion_class_rotate():
    q = Quaternion.from_axis_angle([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(q.rotate([1, 0, 0]), [0, 1, 0], atol=1e-15)
    assert (q * q.conjugate()).norm() == pytest.approx(1.0)


def test_transition_derivatives_fd(rng):
    for _ in range(20):
        a, b = rng.uniform(0.5, 2, 2)
        c = abs(a - b) + rng.uniform(0.1, 0.9) * (a + b - abs(a - b))
        x = np.array([rng.uniform(-2.5, 2.5), a, b, c])
        q, dq, d2q = transition_derivatives(*x)
        f = lambda y: transition_quaternion(*y)
        assert rel_err(dq, fd_jacobian(f, x, 1e-6).T) < 1e-8
        d2fd = fd_jacobian(lambda y: transition_derivatives(*y)[1], x, 1e-6)
        assert rel_err(d2q, np.moveaxis(d2fd, -1, 0)) < 1e-7

"""Quaternions and the transition rotations between adjacent faces.

Besides a small :class:`Quaternion` value type, the module offers vectorized
helpers working on arrays whose last axis holds ``(w, x, y, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TriangleInequalityViolated


def qmul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product of broadcastable arrays of quaternions."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def qconj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qidentity(shape=()) -> np.ndarray:
    out = np.zeros(tuple(shape) + (4,))
    out[..., 0] = 1.0
    return out


def qrotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of (unit) quaternion(s) ``q``."""
    q = np.asarray(q, float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def axis_rotation(axis: int, angle) -> np.ndarray:
    """Rotation matrix about basis vector ``axis`` (0, 1 or 2) by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    R = np.eye(3)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return R


@dataclass(frozen=True)
class Quaternion:
    """Quaternion ``w + x i + y j + z k``."""

    w: float
    x: float
    y: float
    z: float

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        a = np.asarray(a, float)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        s = np.sin(angle / 2)
        return cls(np.cos(angle / 2), *(s * axis))

    def to_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return float(np.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(qmul(self.to_array(), other.to_array()))

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def rotate(self, p) -> np.ndarray:
        """Conjugation ``q p q^-1`` of a 3-vector (``q`` assumed unit)."""
        pq = np.concatenate([[0.0], np.asarray(p, float)])
        return qmul(qmul(self.to_array(), pq), qconj(self.to_array()))[1:]

    def as_matrix(self) -> np.ndarray:
        return qrotation_matrix(self.to_array())

    def __iter__(self):
        return iter((self.w, self.x, self.y, self.z))


def q0(phi) -> np.ndarray:
    """Quaternion of the rotation about the first basis vector by ``phi``."""
    phi = np.asarray(phi, float)
    out = np.zeros(phi.shape + (4,))
    out[..., 0] = np.cos(phi / 2)
    out[..., 1] = np.sin(phi / 2)
    return out


def q2(phi) -> np.ndarray:
    """Quaternion of the rotation about the third basis vector by ``phi``."""
    phi = np.asarray(phi, float)
    out = np.zeros(phi.shape + (4,))
    out[..., 0] = np.cos(phi / 2)
    out[..., 3] = np.sin(phi / 2)
    return out


def transition_quaternion(theta, a, b, c) -> np.ndarray:
    """Transition rotation ``q0(theta) q2(gamma)`` with ``gamma`` the angle
    between sides ``a`` and ``b`` of a triangle whose third side is ``c``.

    Evaluated in closed form from ``Q = (a^2 + b^2 - c^2) / 2ab`` without
    calling ``arccos``. Broadcasts over array arguments.
    """
    theta, a, b, c = np.broadcast_arrays(*(np.asarray(t, float) for t in (theta, a, b, c)))
    if not np.all((a + b > c) & (a + c > b) & (b + c > a)):
        raise TriangleInequalityViolated("transition rotation needs a strict triangle")
    Q = (a * a + b * b - c * c) / (2 * a * b)
    Q = np.clip(Q, -1.0, 1.0)
    C = np.sqrt((1 + Q) / 2)
    S = np.sqrt((1 - Q) / 2)
    ct, st = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([ct * C, st * C, -st * S, ct * S], axis=-1)


# ---------------------------------------------------------- local derivatives
def cosine_rule_derivatives(a, b, c):
    """Value, gradient ``(..., 3)`` and Hessian ``(..., 3, 3)`` of ``Q(a, b, c)``
    with respect to ``(a, b, c)``."""
    a, b, c = np.broadcast_arrays(*(np.asarray(t, float) for t in (a, b, c)))
    Q = (a * a + b * b - c * c) / (2 * a * b)
    g = np.stack([
        (a * a - b * b + c * c) / (2 * a * a * b),
        (b * b - a * a + c * c) / (2 * a * b * b),
        -c / (a * b),
    ], axis=-1)
    H = np.empty(a.shape + (3, 3))
    H[..., 0, 0] = (b * b - c * c) / (a ** 3 * b)
    H[..., 1, 1] = (a * a - c * c) / (a * b ** 3)
    H[..., 2, 2] = -1.0 / (a * b)
    H[..., 0, 1] = H[..., 1, 0] = -(a * a + b * b + c * c) / (2 * a * a * b * b)
    H[..., 0, 2] = H[..., 2, 0] = c / (a * a * b)
    H[..., 1, 2] = H[..., 2, 1] = c / (a * b * b)
    return Q, g, H


def interior_angle_derivatives(a, b, c):
    """Angle ``gamma = arccos Q(a, b, c)`` with its gradient and Hessian in ``(a, b, c)``."""
    Q, gQ, HQ = cosine_rule_derivatives(a, b, c)
    s2 = 1.0 - Q * Q
    s = np.sqrt(s2)
    gamma = np.arccos(np.clip(Q, -1, 1))
    dg = -1.0 / s
    ddg = -Q / (s2 * s)
    g = dg[..., None] * gQ
    H = dg[..., None, None] * HQ + ddg[..., None, None] * gQ[..., :, None] * gQ[..., None, :]
    return gamma, g, H


def transition_derivatives(theta, a, b, c):
    """Transition quaternion with first and second derivatives.

    Local variables are ordered ``(theta, a, b, c)``. Returns ``q`` of shape
    ``(..., 4)``, ``dq`` of shape ``(..., 4, 4)`` (variable, component) and
    ``d2q`` of shape ``(..., 4, 4, 4)``.
    """
    theta = np.asarray(theta, float)
    gamma, gg, Hg = interior_angle_derivatives(a, b, c)
    ct, st = np.cos(theta / 2), np.sin(theta / 2)
    cg, sg = np.cos(gamma / 2), np.sin(gamma / 2)
    # q(theta, gamma) = (ct cg, st cg, -st sg, ct sg)
    q = np.stack([ct * cg, st * cg, -st * sg, ct * sg], axis=-1)
    q_t = 0.5 * np.stack([-st * cg, ct * cg, -ct * sg, -st * sg], axis=-1)
    q_g = 0.5 * np.stack([-ct * sg, -st * sg, -st * cg, ct * cg], axis=-1)
    q_tt = -0.25 * q
    q_gg = -0.25 * q
    q_tg = 0.25 * np.stack([st * sg, -ct * sg, -ct * cg, -st * cg], axis=-1)

    shape = q.shape[:-1]
    dq = np.empty(shape + (4, 4))
    dq[..., 0, :] = q_t
    dq[..., 1:, :] = gg[..., :, None] * q_g[..., None, :]
    d2q = np.empty(shape + (4, 4, 4))
    d2q[..., 0, 0, :] = q_tt
    cross = gg[..., :, None] * q_tg[..., None, :]
    d2q[..., 0, 1:, :] = cross
    d2q[..., 1:, 0, :] = cross
    d2q[..., 1:, 1:, :] = (gg[..., :, None, None] * gg[..., None, :, None] * q_gg[..., None, None, :]
                           + Hg[..., :, :, None] * q_g[..., None, None, :])
    return q, dq, d2q

"""Quaternion integrability conditions on NRIC vectors.

For each interior vertex the transition quaternions around its fan are
multiplied in order; the vector part of the product vanishes exactly when the
frames close up. Fans are grouped by valence so that all per-vertex work is
vectorized. Derivatives use prefix/suffix products, giving O(n_v) work per
vertex for the Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import TriangleInequalityViolated
from .mesh import INFEASIBLE, SimplicialSurface
from .quaternion import qconj, qidentity, qmul, transition_derivatives, transition_quaternion


@dataclass
class _ValenceGroup:
    n: int
    vertex_pos: np.ndarray   # (m,) position of vertex among interior vertices
    var_idx: np.ndarray      # (m, n, 4) NRIC indices of (theta, a, b, c) per transition

    @property
    def rows(self) -> np.ndarray:
        return 3 * self.vertex_pos[:, None] + np.arange(3)


class ConstraintSystem:
    """Integrability map ``Q: R^dim -> R^(3 |V_0|)`` of a simplicial surface.

    Rows ``3k .. 3k+2`` belong to ``surface.interior_vertices[k]``.
    """

    def __init__(self, surface: SimplicialSurface):
        self.surface = surface
        E = surface.edge_count
        by_n: dict[int, list] = {}
        for k, fan in enumerate(surface.vertex_fans):
            s = fan.spokes
            idx = np.stack([E + surface.interior_rank[s], s, np.roll(s, -1), fan.rims], axis=1)
            by_n.setdefault(fan.valence, []).append((k, idx))
        self.groups = [
            _ValenceGroup(n, np.array([k for k, _ in items]), np.stack([i for _, i in items]))
            for n, items in sorted(by_n.items())
        ]
        self.n_rows = 3 * len(surface.vertex_fans)

    @property
    def dim(self) -> int:
        return self.surface.dim

    # ----------------------------------------------------------------- values
    def _local(self, g: _ValenceGroup, z):
        v = np.asarray(z, float)[g.var_idx]
        theta, a, b, c = v[..., 0], v[..., 1], v[..., 2], v[..., 3]
        ok = (a + b > c) & (a - b + c > 0) & (-a + b + c > 0) & (np.abs(theta) < np.pi)
        return theta, a, b, c, ok.all(axis=1)

    def fan_products(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Ordered quaternion product per interior vertex and a feasibility mask."""
        nv = len(self.surface.vertex_fans)
        P = np.zeros((nv, 4))
        feas = np.ones(nv, dtype=bool)
        for g in self.groups:
            theta, a, b, c, ok = self._local(g, z)
            p = qidentity((len(g.vertex_pos),))
            if ok.any():
                q = transition_quaternion(theta[ok], a[ok], b[ok], c[ok])
                pk = qidentity((int(ok.sum()),))
                for i in range(g.n):
                    pk = qmul(pk, q[:, i])
                p[ok] = pk
            P[g.vertex_pos] = p
            feas[g.vertex_pos] = ok
        return P, feas

    def residual(self, z) -> np.ndarray:
        """Stacked vector parts of the fan products; infeasible fans give the sentinel."""
        P, feas = self.fan_products(z)
        out = P[:, 1:].copy()
        out[~feas] = INFEASIBLE
        return out.reshape(-1)

    def is_feasible(self, z) -> bool:
        return bool(self.fan_products(z)[1].all())

    def admissible(self, z) -> bool:
        """Strict triangle inequalities on every face and ``|theta| < pi``."""
        z = np.asarray(z, float)
        E = self.surface.edge_count
        L = z[:E][self.surface.face_edges]
        a, b, c = L[:, 0], L[:, 1], L[:, 2]
        ok = np.all((a + b > c) & (a - b + c > 0) & (-a + b + c > 0))
        return bool(ok and np.all(np.abs(z[E:]) < np.pi))

    def rotation_residual(self, z) -> np.ndarray:
        """``|tr I_v - 3|`` per interior vertex, via ``4 |vec p|^2`` for the fan product ``p``."""
        P, feas = self.fan_products(z)
        # |tr R(p) - 3| = |4 w^2 - 4| for unit p
        r = 4.0 * np.sum(P[:, 1:] ** 2, axis=1)
        r[~feas] = INFEASIBLE
        return r

    # ------------------------------------------------------------ derivatives
    def _prepare(self, g: _ValenceGroup, z, need_hessian: bool):
        theta, a, b, c, ok = self._local(g, z)
        if not ok.all():
            raise TriangleInequalityViolated(
                "constraint derivatives need strict triangle inequalities on every fan")
        q, dq, d2q = transition_derivatives(theta, a, b, c)
        m, n = theta.shape
        prefix = np.empty((m, n, 4))
        suffix = np.empty((m, n, 4))
        acc = qidentity((m,))
        for i in range(n):
            prefix[:, i] = acc
            acc = qmul(acc, q[:, i])
        acc = qidentity((m,))
        for i in reversed(range(n)):
            suffix[:, i] = acc
            acc = qmul(q[:, i], acc)
        return q, dq, (d2q if need_hessian else None), prefix, suffix

    def jacobian(self, z) -> sparse.csr_matrix:
        """Sparse Jacobian ``DQ(z)`` of shape ``(3 |V_0|, dim)``."""
        rows, cols, vals = [], [], []
        for g in self.groups:
            q, dq, _, P, S = self._prepare(g, z, False)
            # d(prod)/d var = P_i dq_i S_i
            D = qmul(qmul(P[:, :, None, :], dq), S[:, :, None, :])[..., 1:]  # (m, n, 4, 3)
            r = np.broadcast_to(g.rows[:, None, None, :], D.shape)
            c = np.broadcast_to(g.var_idx[..., None], D.shape)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(D.ravel())
        return _coo(rows, cols, vals, (self.n_rows, self.dim))

    def hessian_contraction(self, z, weights) -> sparse.csr_matrix:
        """``sum_v sum_m weights[v, m] * Hess (Q_v)_m``, symmetric ``dim x dim``."""
        w = np.asarray(weights, float).reshape(-1, 3)
        rows, cols, vals = [], [], []
        for g in self.groups:
            q, dq, d2q, P, S = self._prepare(g, z, True)
            m, n = q.shape[:2]
            Wq = np.zeros((m, 4))
            Wq[:, 1:] = w[g.vertex_pos]
            if not np.any(Wq):
                continue
            Pc, Sc = qconj(P), qconj(S)
            H = np.zeros((m, n, 4, n, 4))
            # <P X S, W> = <X, conj(P) W conj(S)>
            G = qmul(qmul(Pc, Wq[:, None, :]), Sc)                   # (m, n, 4)
            H[:, np.arange(n), :, np.arange(n), :] = np.einsum(
                "mnabc,mnc->nmab", d2q, G)
            for i in range(n):
                Mij = qidentity((m,))
                PW = qmul(Pc[:, i], Wq)                             # (m, 4)
                # conj(dq_i[a]) (conj(P_i) W conj(S_j)) paired with M_ij dq_j[b]
                for j in range(i + 1, n):
                    K = qmul(PW, Sc[:, j])
                    left = qmul(qconj(dq[:, i]), K[:, None, :])     # (m, 4, 4)
                    right = qmul(Mij[:, None, :], dq[:, j])        # (m, 4, 4)
                    blk = np.einsum("mac,mbc->mab", left, right)
                    H[:, i, :, j, :] = blk
                    H[:, j, :, i, :] = np.transpose(blk, (0, 2, 1))
                    Mij = qmul(Mij, q[:, j])
            idx = g.var_idx.reshape(m, 4 * n)
            Hl = H.reshape(m, 4 * n, 4 * n)
            rows.append(np.broadcast_to(idx[:, :, None], Hl.shape).ravel())
            cols.append(np.broadcast_to(idx[:, None, :], Hl.shape).ravel())
            vals.append(Hl.ravel())
        return _coo(rows, cols, vals, (self.dim, self.dim))

    def jacobian_pattern(self) -> sparse.csr_matrix:
        """Boolean structural sparsity of :meth:`jacobian`."""
        rows, cols = [], []
        for g in self.groups:
            shape = g.var_idx.shape + (3,)
            rows.append(np.broadcast_to(g.rows[:, None, None, :], shape).ravel())
            cols.append(np.broadcast_to(g.var_idx[..., None], shape).ravel())
        r, c = np.concatenate(rows), np.concatenate(cols)
        M = sparse.coo_matrix((np.ones(len(r), bool), (r, c)), shape=(self.n_rows, self.dim))
        return M.tocsr().astype(bool)


def _coo(rows, cols, vals, shape) -> sparse.csr_matrix:
    if not rows:
        return sparse.csr_matrix(shape)
    M = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=shape)
    return M.tocsr()


class StackedConstraints:
    """Independent copies of one :class:`ConstraintSystem` for several shapes.

    Acts on the concatenation of ``n_shapes`` NRIC vectors; the Jacobian is
    block diagonal.
    """

    def __init__(self, system: ConstraintSystem, n_shapes: int):
        self.system = system
        self.n_shapes = int(n_shapes)
        self.dim = system.dim * self.n_shapes
        self.n_rows = system.n_rows * self.n_shapes

    def _parts(self, z):
        return np.asarray(z, float).reshape(self.n_shapes, self.system.dim)

    def residual(self, z):
        return np.concatenate([self.system.residual(zk) for zk in self._parts(z)])

    def is_feasible(self, z):
        return all(self.system.is_feasible(zk) for zk in self._parts(z))

    def admissible(self, z):
        return all(self.system.admissible(zk) for zk in self._parts(z))

    def jacobian(self, z):
        return sparse.block_diag([self.system.jacobian(zk) for zk in self._parts(z)],
                                 format="csr")

    def hessian_contraction(self, z, weights):
        w = np.asarray(weights, float).reshape(self.n_shapes, -1)
        return sparse.block_diag(
            [self.system.hessian_contraction(zk, wk) for zk, wk in zip(self._parts(z), w)],
            format="csr")

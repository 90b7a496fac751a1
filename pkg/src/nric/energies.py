"""Deformation energies on NRIC vectors and their derivatives.

Two energies are provided, both as functions ``W[z, zt]`` of an undeformed
NRIC vector ``z`` and a deformed one ``zt``:

* :class:`NonlinearEnergy`, a hyperelastic membrane term evaluated from the
  six edge lengths of each face plus a discrete shells bending term;
* :class:`QuadraticEnergy`, a weighted squared distance in NRIC coordinates.

Both expose the gradient and Hessian with respect to either argument and the
mixed second derivative, which geodesic paths need.

Notes
-----
The membrane density is ``mu/2 tr A + lambda/4 det A - (mu/2 + lambda/4) log
det A - mu - lambda/4`` for the relative metric ``A`` of a face. With this
log coefficient the density is stationary and vanishes at ``A = Id``.

Per face, with ``u`` the squared undeformed lengths, ``s`` the squared
deformed lengths and ``M = 1 1^T - 2 Id``, one has ``16 a^2 = u^T M u``,
``16 at^2 = s^T M s`` and ``tr A = 2 s^T M u / u^T M u``. All membrane
derivatives are taken in ``(u, s)`` and chained to the lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import InfeasiblePoint, ReferenceDegenerate
from .mesh import INFEASIBLE, SimplicialSurface, face_areas_from_lengths

_M = np.ones((3, 3)) - 2.0 * np.eye(3)


@dataclass(frozen=True)
class MaterialParameters:
    """Membrane weights ``mu``, ``lambda_mat`` and thickness ``delta``."""

    mu: float = 1.0
    lambda_mat: float = 1.0
    delta: float = 1e-2

    def __post_init__(self):
        if not (self.mu > 0 and self.lambda_mat > 0 and self.delta >= 0):
            raise ValueError("need mu > 0, lambda_mat > 0 and delta >= 0")


# ------------------------------------------------------------ local pieces
def _admissible(L):
    a, b, c = L[..., 0], L[..., 1], L[..., 2]
    return (a + b > c) & (a - b + c > 0) & (-a + b + c > 0)


def _membrane_terms(u, s, params: MaterialParameters):
    """Per-face membrane values and the quantities shared by the derivatives."""
    mu, lam = params.mu, params.lambda_mat
    Mu, Ms = u @ _M, s @ _M
    g = np.einsum("fi,fi->f", u, Mu)
    h = np.einsum("fi,fi->f", s, Ms)
    A = np.einsum("fi,fi->f", s, Mu)
    r = np.sqrt(g)
    c3 = (mu / 2 + lam / 4) / 4
    c4 = (mu + lam / 4) / 4
    with np.errstate(divide="ignore", invalid="ignore"):
        logh = np.log(np.where(h > 0, h, 1.0))
    W = mu * A / (4 * r) + lam * h / (16 * r) - c3 * r * (logh - np.log(g)) - c4 * r
    return dict(Mu=Mu, Ms=Ms, g=g, h=h, A=A, r=r, logh=logh, c3=c3, c4=c4, W=W)


def local_membrane(a, b, c, at, bt, ct, params: MaterialParameters | None = None):
    """Area-weighted membrane density of one face (or arrays of faces).

    Returns :data:`INFEASIBLE` where the deformed triple is not a strict
    triangle.

    Raises
    ------
    ReferenceDegenerate
        If an undeformed triple is not a strict triangle.
    """
    params = params or MaterialParameters()
    L = np.stack(np.broadcast_arrays(*(np.asarray(t, float) for t in (a, b, c))), -1)
    Lt = np.stack(np.broadcast_arrays(*(np.asarray(t, float) for t in (at, bt, ct))), -1)
    shape = L.shape[:-1]
    L, Lt = L.reshape(-1, 3), Lt.reshape(-1, 3)
    if not np.all(_admissible(L)):
        raise ReferenceDegenerate("undeformed face is not a strict triangle")
    t = _membrane_terms(L ** 2, Lt ** 2, params)
    W = np.where(_admissible(Lt) & (t["h"] > 0), t["W"], INFEASIBLE)
    return W.reshape(shape) if shape else float(W[0])


def _membrane_derivatives(u, s, params, need_first: bool):
    """Gradient/Hessian blocks of the face density in ``(u, s)``.

    Returns ``Gs, Hss`` and, if ``need_first``, also ``Gu, Huu, Hus``
    (``Hus[f, i, j] = d^2 W / du_i ds_j``).
    """
    t = _membrane_terms(u, s, params)
    mu, lam = params.mu, params.lambda_mat
    Mu, Ms, g, h, A, r, c3, c4 = (t[k] for k in ("Mu", "Ms", "g", "h", "A", "r", "c3", "c4"))
    r_, h_ = r[:, None], h[:, None]
    Gs = mu * Mu / (4 * r_) + lam * Ms / (8 * r_) - 2 * c3 * r_ * Ms / h_
    MsMs = Ms[:, :, None] * Ms[:, None, :]
    Hss = (lam / (8 * r))[:, None, None] * _M \
        - (2 * c3 * r / h)[:, None, None] * _M + (4 * c3 * r / h ** 2)[:, None, None] * MsMs
    if not need_first:
        return Gs, Hss
    logr = np.log(g) - t["logh"]
    k0 = c3 * (logr + 2) - c4
    phi = -mu * A / (4 * r ** 3) - lam * h / (16 * r ** 3) + k0 / r
    Gu = mu * Ms / (4 * r_) + phi[:, None] * Mu
    psi = 3 * mu * A / (4 * r ** 5) + 3 * lam * h / (16 * r ** 5) + (2 * c3 - k0) / r ** 3
    MuMu = Mu[:, :, None] * Mu[:, None, :]
    MsMu = Ms[:, :, None] * Mu[:, None, :]
    grad_phi_outer = (-mu / (4 * r ** 3))[:, None, None] * MsMu.transpose(0, 2, 1) \
        + psi[:, None, None] * MuMu
    Huu = (-mu / (4 * r ** 3))[:, None, None] * MsMu + phi[:, None, None] * _M + grad_phi_outer
    # d(Gs)_i / du_j, then transpose to (u, s) layout
    Hsu = (mu / (4 * r))[:, None, None] * _M - (mu / (4 * r ** 3))[:, None, None] * MuMu \
        - (lam / (8 * r ** 3) + 2 * c3 / (r * h))[:, None, None] * MsMu
    return Gs, Hss, Gu, Huu, Hsu.transpose(0, 2, 1)


def _chain_grad(L, G):
    return 2 * L * G


def _chain_hess(L, H, G=None, Lr=None):
    """Hessian in lengths from a Hessian in squared lengths.

    ``G`` adds the diagonal first-order term (same-argument blocks only);
    ``Lr`` gives the column lengths for mixed blocks.
    """
    Lc = L if Lr is None else Lr
    out = 4 * L[:, :, None] * Lc[:, None, :] * H
    if G is not None:
        out[:, np.arange(3), np.arange(3)] += 2 * G
    return out


def _area_derivatives(L):
    """Face area with gradient and Hessian in the three lengths."""
    u = L ** 2
    Mu = u @ _M
    g = np.einsum("fi,fi->f", u, Mu)
    r = np.sqrt(g)
    area = r / 4
    Gu = Mu / (4 * r[:, None])
    Huu = _M / (4 * r[:, None, None]) - Mu[:, :, None] * Mu[:, None, :] / (4 * r[:, None, None] ** 3)
    return area, _chain_grad(L, Gu), _chain_hess(L, Huu, Gu)


# ---------------------------------------------------------------- energies
class Energy:
    """Common interface of deformation energies ``W[z, zt]``.

    Subclasses implement :meth:`value` and the derivative blocks. Gradients
    are dense vectors, Hessians are symmetric ``scipy.sparse`` CSR matrices of
    size ``dim x dim``; :meth:`hess_mixed` has rows indexed by ``z`` and
    columns by ``zt``.
    """

    surface: SimplicialSurface

    def value(self, z, zt) -> float:
        raise NotImplementedError

    def grad_second(self, z, zt) -> np.ndarray:
        raise NotImplementedError

    def hess_second(self, z, zt) -> sparse.csr_matrix:
        raise NotImplementedError

    def grad_first(self, z, zt) -> np.ndarray:
        raise NotImplementedError

    def hess_first(self, z, zt) -> sparse.csr_matrix:
        raise NotImplementedError

    def hess_mixed(self, z, zt) -> sparse.csr_matrix:
        raise NotImplementedError

    def metric(self, z) -> sparse.csr_matrix:
        """Riemannian metric ``1/2 Hess W[z, .]`` evaluated at ``zt = z``."""
        return (0.5 * self.hess_second(z, z)).tocsr()

    def metric_inner(self, z, v, w) -> float:
        """``g_z(v, w) = v^T G w`` with ``G`` from :meth:`metric`."""
        return float(np.asarray(v) @ (self.metric(z) @ np.asarray(w)))

    def is_feasible(self, z, zt) -> bool:
        return self.value(z, zt) < INFEASIBLE


class NonlinearEnergy(Energy):
    """Membrane plus ``delta^2`` times bending energy.

    Parameters
    ----------
    surface : SimplicialSurface
    params : MaterialParameters, optional
        Defaults to ``mu = lambda = 1``, ``delta = 1e-2``.
    """

    def __init__(self, surface: SimplicialSurface, params: MaterialParameters | None = None):
        self.surface = surface
        self.params = params or MaterialParameters()
        E = surface.edge_count
        fe = surface.face_edges
        self._face_idx = fe                                     # (F, 3) length indices
        ie = surface.interior_edges
        self._bend_theta = E + np.arange(len(ie))
        ef = surface.edge_faces[ie]
        # per interior edge: own length, the three lengths of each adjacent face
        self._bend_idx = np.concatenate([ie[:, None], fe[ef[:, 0]], fe[ef[:, 1]]], axis=1)
        rows = np.repeat(fe, 3, axis=1).ravel()
        cols = np.tile(fe, (1, 3)).ravel()
        self._face_pattern = (rows, cols)

    # ---------------------------------------------------------- helpers
    def _split(self, z):
        z = np.asarray(z, float)
        E = self.surface.edge_count
        return z[:E], z[E:]

    def _reference(self, z):
        l, _ = self._split(z)
        L = l[self._face_idx]
        if not np.all(_admissible(L)):
            raise ReferenceDegenerate("undeformed NRIC vector violates a triangle inequality")
        return L

    def _deformed(self, zt, strict: bool):
        lt, _ = self._split(zt)
        Lt = lt[self._face_idx]
        ok = _admissible(Lt)
        if strict and not np.all(ok):
            raise InfeasiblePoint("deformed NRIC vector violates a triangle inequality")
        return Lt, ok

    def _bend_weights(self, z):
        """``l_e^2 / d_e`` per interior edge, from the undeformed lengths."""
        l, _ = self._split(z)
        areas = face_areas_from_lengths(self.surface, l)
        ef = self.surface.edge_faces[self.surface.interior_edges]
        d = (areas[ef[:, 0]] + areas[ef[:, 1]]) / 3.0
        return l[self.surface.interior_edges] ** 2 / d

    # ---------------------------------------------------------- values
    def membrane_per_face(self, z, zt) -> np.ndarray:
        L = self._reference(z)
        Lt, ok = self._deformed(zt, strict=False)
        t = _membrane_terms(L ** 2, Lt ** 2, self.params)
        return np.where(ok & (t["h"] > 0), t["W"], INFEASIBLE)

    def membrane(self, z, zt) -> float:
        W = self.membrane_per_face(z, zt)
        return INFEASIBLE if np.any(W >= INFEASIBLE) else float(np.sum(W))

    def bending(self, z, zt) -> float:
        self._reference(z)
        _, th = self._split(z)
        _, tht = self._split(zt)
        return float(np.sum((th - tht) ** 2 * self._bend_weights(z)))

    def value(self, z, zt) -> float:
        m = self.membrane(z, zt)
        if m >= INFEASIBLE:
            return INFEASIBLE
        return m + self.params.delta ** 2 * self.bending(z, zt)

    # ------------------------------------------------------- derivatives
    def _membrane_blocks(self, z, zt, need_first):
        L = self._reference(z)
        Lt, _ = self._deformed(zt, strict=True)
        if np.any(np.einsum("fi,fi->f", Lt ** 2, (Lt ** 2) @ _M) <= 0):
            raise InfeasiblePoint("deformed face with non-positive area")
        return L, Lt, _membrane_derivatives(L ** 2, Lt ** 2, self.params, need_first)

    def _assemble(self, blocks, rows_idx, cols_idx):
        n = self.surface.dim
        k = rows_idx.shape[1]
        m = cols_idx.shape[1]
        r = np.broadcast_to(rows_idx[:, :, None], (len(rows_idx), k, m)).ravel()
        c = np.broadcast_to(cols_idx[:, None, :], (len(cols_idx), k, m)).ravel()
        return sparse.coo_matrix((blocks.ravel(), (r, c)), shape=(n, n)).tocsr()

    def _scatter(self, idx, vals):
        out = np.zeros(self.surface.dim)
        np.add.at(out, idx.ravel(), vals.ravel())
        return out

    def _bend_parts(self, z, zt):
        _, th = self._split(z)
        _, tht = self._split(zt)
        return th - tht, self._bend_weights(z)

    def grad_second(self, z, zt):
        L, Lt, (Gs, _) = self._membrane_blocks(z, zt, False)
        g = self._scatter(self._face_idx, _chain_grad(Lt, Gs))
        D, w = self._bend_parts(z, zt)
        g[self._bend_theta] += -2 * self.params.delta ** 2 * D * w
        return g

    def hess_second(self, z, zt):
        L, Lt, (Gs, Hss) = self._membrane_blocks(z, zt, False)
        H = self._assemble(_chain_hess(Lt, Hss, Gs), self._face_idx, self._face_idx)
        _, w = self._bend_parts(z, zt)
        n = self.surface.dim
        H = H + sparse.coo_matrix((2 * self.params.delta ** 2 * w,
                                   (self._bend_theta, self._bend_theta)), shape=(n, n))
        return H.tocsr()

    def _bend_first_derivatives(self, z):
        """Gradient ``(Eint, 7)`` and Hessian ``(Eint, 7, 7)`` of ``l_e^2 / d_e``
        over the local lengths ``[l_e, face f, face f']``."""
        l, _ = self._split(z)
        idx = self._bend_idx
        le = l[idx[:, 0]]
        a1, g1, H1 = _area_derivatives(l[idx[:, 1:4]])
        a2, g2, H2 = _area_derivatives(l[idx[:, 4:7]])
        d = (a1 + a2) / 3
        N = le ** 2
        m = len(le)
        dd = np.zeros((m, 7))
        dd[:, 1:4], dd[:, 4:7] = g1 / 3, g2 / 3
        Hd = np.zeros((m, 7, 7))
        Hd[:, 1:4, 1:4], Hd[:, 4:7, 4:7] = H1 / 3, H2 / 3
        w = N / d
        gw = -(N / d ** 2)[:, None] * dd
        gw[:, 0] += 2 * le / d
        Hw = (2 * N / d ** 3)[:, None, None] * dd[:, :, None] * dd[:, None, :] \
            - (N / d ** 2)[:, None, None] * Hd
        cross = -(2 * le / d ** 2)[:, None] * dd
        Hw[:, 0, :] += cross
        Hw[:, :, 0] += cross
        Hw[:, 0, 0] += 2 / d
        return w, gw, Hw

    def grad_first(self, z, zt):
        L, Lt, (_, _, Gu, _, _) = self._membrane_blocks(z, zt, True)
        g = self._scatter(self._face_idx, _chain_grad(L, Gu))
        D, _ = self._bend_parts(z, zt)
        w, gw, _ = self._bend_first_derivatives(z)
        d2 = self.params.delta ** 2
        g[self._bend_theta] += 2 * d2 * D * w
        g += self._scatter(self._bend_idx, d2 * (D ** 2)[:, None] * gw)
        return g

    def _bend_first_local(self, z, zt, sign_second: bool):
        """Local blocks over ``[theta_e, 7 lengths]`` for first/mixed Hessians."""
        D, _ = self._bend_parts(z, zt)
        w, gw, Hw = self._bend_first_derivatives(z)
        d2 = self.params.delta ** 2
        m = len(D)
        if not sign_second:
            B = np.zeros((m, 8, 8))
            B[:, 0, 0] = 2 * w
            B[:, 0, 1:] = B[:, 1:, 0] = 2 * D[:, None] * gw
            B[:, 1:, 1:] = (D ** 2)[:, None, None] * Hw
            return d2 * B
        # rows: [theta_e, lengths] of z; column: theta_e of zt
        B = np.zeros((m, 8, 1))
        B[:, 0, 0] = -2 * w
        B[:, 1:, 0] = -2 * D[:, None] * gw
        return d2 * B

    def hess_first(self, z, zt):
        L, Lt, (_, _, Gu, Huu, _) = self._membrane_blocks(z, zt, True)
        H = self._assemble(_chain_hess(L, Huu, Gu), self._face_idx, self._face_idx)
        idx = np.concatenate([self._bend_theta[:, None], self._bend_idx], axis=1)
        H = H + self._assemble(self._bend_first_local(z, zt, False), idx, idx)
        return H.tocsr()

    def hess_mixed(self, z, zt):
        L, Lt, (_, _, _, _, Hus) = self._membrane_blocks(z, zt, True)
        H = self._assemble(_chain_hess(L, Hus, Lr=Lt), self._face_idx, self._face_idx)
        idx = np.concatenate([self._bend_theta[:, None], self._bend_idx], axis=1)
        H = H + self._assemble(self._bend_first_local(z, zt, True), idx,
                               self._bend_theta[:, None])
        return H.tocsr()


# ---------------------------------------------------------------- quadratic
@dataclass(frozen=True)
class QuadraticWeights:
    """Per-edge length weights ``alpha`` and per-interior-edge angle weights ``beta``.

    ``recipe`` is ``"default"`` (``alpha = l^-2``, ``beta = l^2 / d``) or
    ``"dual_area"`` (``alpha = d l^-2``, same ``beta``), evaluated at ``reference``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    reference: np.ndarray = field(repr=False)
    recipe: str = "default"


def quadratic_weights(surface: SimplicialSurface, zbar, recipe: str = "default") -> QuadraticWeights:
    """Weights of the quadratic energy computed from a reference ``zbar``.

    ``d_e`` is a third of the summed areas of the faces adjacent to edge ``e``
    (one face for boundary edges).
    """
    zbar = np.asarray(zbar, float)
    l = zbar[:surface.edge_count]
    L = l[surface.face_edges]
    if not np.all(_admissible(L)):
        raise ReferenceDegenerate("reference NRIC vector violates a triangle inequality")
    areas = face_areas_from_lengths(surface, l)
    ef = surface.edge_faces
    d = (areas[ef[:, 0]] + np.where(ef[:, 1] >= 0, areas[np.maximum(ef[:, 1], 0)], 0.0)) / 3.0
    ie = surface.interior_edges
    beta = l[ie] ** 2 / d[ie]
    if recipe == "default":
        alpha = l ** -2.0
    elif recipe == "dual_area":
        alpha = d * l ** -2.0
    else:
        raise ValueError(f"unknown weight recipe {recipe!r}")
    return QuadraticWeights(alpha, beta, zbar.copy(), recipe)


class QuadraticEnergy(Energy):
    """``sum alpha (l - lt)^2 + delta^2 sum beta (theta - thetat)^2`` with fixed weights.

    Parameters
    ----------
    surface : SimplicialSurface
    weights : QuadraticWeights or array_like
        Either precomputed weights or a reference NRIC vector to compute them from.
    delta : float
        Bending weight.
    """

    def __init__(self, surface: SimplicialSurface, weights, delta: float = 1e-2,
                 recipe: str = "default"):
        self.surface = surface
        if not isinstance(weights, QuadraticWeights):
            weights = quadratic_weights(surface, weights, recipe)
        self.weights = weights
        self.delta = float(delta)
        self.diag = np.concatenate([weights.alpha, self.delta ** 2 * weights.beta])

    def value(self, z, zt):
        lt = np.asarray(zt, float)[:self.surface.edge_count]
        if not np.all(_admissible(lt[self.surface.face_edges])):
            return INFEASIBLE
        r = np.asarray(z, float) - np.asarray(zt, float)
        return float(np.sum(self.diag * r * r))

    def residuals(self, z, zt) -> np.ndarray:
        """Weighted residual vector whose squared norm is the energy."""
        return np.sqrt(self.diag) * (np.asarray(zt, float) - np.asarray(z, float))

    def grad_second(self, z, zt):
        return 2 * self.diag * (np.asarray(zt, float) - np.asarray(z, float))

    def grad_first(self, z, zt):
        return -self.grad_second(z, zt)

    def hess_second(self, z=None, zt=None):
        return sparse.diags(2 * self.diag, format="csr")

    hess_first = hess_second

    def hess_mixed(self, z=None, zt=None):
        return sparse.diags(-2 * self.diag, format="csr")


def make_energy(kind: str, surface: SimplicialSurface, reference=None,
                params: MaterialParameters | None = None, recipe: str = "default") -> Energy:
    """Build a :class:`NonlinearEnergy` or :class:`QuadraticEnergy` by name.

    The quadratic energy needs a ``reference`` NRIC vector for its weights.
    """
    params = params or MaterialParameters()
    if kind == "nonlinear":
        return NonlinearEnergy(surface, params)
    if kind == "quadratic":
        if reference is None:
            raise ValueError("quadratic energy needs a reference NRIC vector")
        return QuadraticEnergy(surface, reference, params.delta, recipe)
    raise ValueError(f"unknown energy kind {kind!r}")

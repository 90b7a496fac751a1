"""Tangent spaces of the integrable set and infinitesimal rigidity.

The tangent space at an integrable ``z`` is the kernel of ``DQ(z)``. A shape
admits an infinitesimal isometric variation when that kernel meets the
subspace of pure angle changes nontrivially; this is detected by the smallest
singular value of the two stacked orthonormal bases. Dense SVDs are used, so
this module targets meshes with a few thousand edges at most.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NotOnManifold

logger = logging.getLogger(__name__)


@dataclass
class TangentBasis:
    """Orthonormal columns spanning ``ker DQ(z)``."""

    basis: np.ndarray
    rank: int
    singular_values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]


@dataclass
class RigidityResult:
    """Outcome of :func:`rigidity_test`.

    ``status`` is ``"rigid"``, ``"flexible"`` or ``"no_candidate_subspace"``
    (the angle selector was empty). ``variation`` is a unit vector in the
    tangent space with zero length components, returned only when flexible.
    """

    lambda0: float
    sigma_max: float
    threshold: float
    status: str
    tangent_dimension: int
    variation: np.ndarray | None = None
    support: np.ndarray | None = None

    @property
    def normalized_lambda0(self) -> float:
        return self.lambda0 / self.sigma_max if self.sigma_max > 0 else 0.0

    @property
    def flexible(self) -> bool:
        return self.status == "flexible"


def _check_on_manifold(system, z, tol):
    q = system.residual(z)
    qinf = float(np.max(np.abs(q))) if q.size else 0.0
    if qinf > tol:
        raise NotOnManifold(f"integrability residual {qinf:.3e} exceeds {tol:.1e}")


def tangent_basis(system, z, tol: float = 1e-8) -> TangentBasis:
    """Orthonormal basis of ``ker DQ(z)`` from a full SVD.

    Singular values below ``max(shape) * eps * sigma_max`` count as zero.

    Raises
    ------
    NotOnManifold
        If ``|Q(z)|_inf > tol``.
    """
    _check_on_manifold(system, z, tol)
    D = system.jacobian(z).toarray()
    n = D.shape[1]
    if D.shape[0] == 0:
        return TangentBasis(np.eye(n), 0, np.zeros(0))
    _, s, Vt = np.linalg.svd(D, full_matrices=True)
    cutoff = max(D.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return TangentBasis(Vt[rank:].T.copy(), rank, s)


def rigidity_test(system, z, selector=None, threshold: float = 1e-7, tol: float = 1e-8,
                  basis: TangentBasis | None = None) -> RigidityResult:
    """Smallest singular value of ``(B_T | B_theta)``.

    Parameters
    ----------
    system : ConstraintSystem
    z : ndarray
        Integrable NRIC vector.
    selector : array_like of bool or int, optional
        Interior-edge (angle) indices allowed to vary; all by default.
        Excluded angles model additional fixed-angle constraints.
    threshold : float
        ``lambda0 < threshold * sigma_max`` counts as zero.
    """
    surface = system.surface
    E, nA = surface.edge_count, surface.n_angles
    if selector is None:
        cols = np.arange(nA)
    else:
        sel = np.asarray(selector)
        cols = np.flatnonzero(sel) if sel.dtype == bool else np.unique(sel.astype(int))
    tb = basis if basis is not None else tangent_basis(system, z, tol)
    B = tb.basis
    if len(cols) == 0:
        s = np.linalg.svd(B, compute_uv=False) if B.size else np.zeros(0)
        return RigidityResult(float(s[-1]) if s.size else 0.0, float(s[0]) if s.size else 0.0,
                              threshold, "no_candidate_subspace", tb.dimension)
    Bth = np.zeros((surface.dim, len(cols)))
    Bth[E + cols, np.arange(len(cols))] = 1.0
    C = np.hstack([B, Bth])
    U, s, Vt = np.linalg.svd(C, full_matrices=True)
    sigma_max = float(s[0])
    if C.shape[1] > C.shape[0]:
        lambda0 = 0.0
    else:
        lambda0 = float(s[-1])
    logger.info("rigidity: tangent dim %d, %d angle columns, lambda0 = %.3e (sigma_max %.3e)",
                tb.dimension, len(cols), lambda0, sigma_max)
    if lambda0 >= threshold * sigma_max:
        return RigidityResult(lambda0, sigma_max, threshold, "rigid", tb.dimension)
    c = Vt[-1]
    w = B @ c[:B.shape[1]]
    w /= np.linalg.norm(w)
    support = np.flatnonzero(np.abs(w[E:]) > 1e-8)
    return RigidityResult(lambda0, sigma_max, threshold, "flexible", tb.dimension, w, support)


def extrapolate(system, z, variation, h: float | None = None, config=None, delta: float = 1e-2):
    """Step along an isometric variation and project back onto ``{Q = 0}``.

    The angle part of ``variation`` (scaled to unit max norm) is added with
    step ``h`` (default ``0.05 * max(mean |theta|, 1)``); the result is the
    closest integrable vector under the quadratic energy.

    Returns
    -------
    z_new, report
    """
    from .energies import QuadraticEnergy
    from .objectives import dissimilarity_objective
    from .optim import solve_constrained

    surface = system.surface
    E = surface.edge_count
    z = np.asarray(z, float)
    w = np.zeros(surface.dim)
    w[E:] = np.asarray(variation, float)[E:]
    scale = np.max(np.abs(w))
    if scale == 0:
        raise ValueError("variation has no angle component")
    w /= scale
    if h is None:
        h = 0.05 * max(float(np.mean(np.abs(z[E:]))) if surface.n_angles else 0.0, 1.0)
    target = z + h * w
    energy = QuadraticEnergy(surface, z, delta)
    zn, _, report = solve_constrained(dissimilarity_objective(energy, target), system, target, config)
    return zn, report

"""Objectives for shape projection, elastic averages and discrete geodesics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .energies import Energy
from .errors import EndpointInfeasible
from .mesh import INFEASIBLE, SimplicialSurface, triangle_inequalities
from .optim import ObjectiveFunction


def dissimilarity_objective(energy: Energy, z_star) -> ObjectiveFunction:
    """``E(z) = W[z_star, z]``."""
    z_star = np.array(z_star, float)
    return ObjectiveFunction(
        value=lambda z: energy.value(z_star, z),
        gradient=lambda z: energy.grad_second(z_star, z),
        hessian=lambda z: energy.hess_second(z_star, z),
        name="dissimilarity",
    )


def elastic_average_objective(energies, examples, weights) -> ObjectiveFunction:
    """``E(z) = sum_i weights[i] W_i[examples[i], z]``.

    ``energies`` is a single :class:`Energy` or one per example (quadratic
    energies carry per-reference weights).
    """
    examples = [np.array(e, float) for e in examples]
    w = np.asarray(weights, float)
    if len(w) != len(examples):
        raise ValueError("one weight per example required")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise ValueError("weights must be nonnegative and sum to one")
    if isinstance(energies, Energy):
        energies = [energies] * len(examples)

    def value(z):
        total = 0.0
        for Wi, zi, wi in zip(energies, examples, w):
            v = Wi.value(zi, z)
            if not v < INFEASIBLE:
                return INFEASIBLE
            total += wi * v
        return total

    def gradient(z):
        return sum(wi * Wi.grad_second(zi, z) for Wi, zi, wi in zip(energies, examples, w))

    def hessian(z):
        return sum(wi * Wi.hess_second(zi, z) for Wi, zi, wi in zip(energies, examples, w)).tocsr()

    return ObjectiveFunction(value, gradient, hessian, name="elastic_average")


@dataclass
class GeodesicPath:
    """Discrete path ``z_0, ..., z_K`` with fixed endpoints."""

    surface: SimplicialSurface
    shapes: np.ndarray       # (K + 1, dim)
    energy: Energy

    @property
    def K(self) -> int:
        return len(self.shapes) - 1

    @property
    def interior(self) -> np.ndarray:
        return self.shapes[1:-1].reshape(-1)

    def with_interior(self, x) -> "GeodesicPath":
        shapes = self.shapes.copy()
        shapes[1:-1] = np.asarray(x, float).reshape(self.K - 1, -1)
        return GeodesicPath(self.surface, shapes, self.energy)

    def segment_energies(self) -> np.ndarray:
        return np.array([self.energy.value(self.shapes[k - 1], self.shapes[k])
                         for k in range(1, self.K + 1)])

    def path_energy(self) -> float:
        e = self.segment_energies()
        return INFEASIBLE if np.any(e >= INFEASIBLE) else float(self.K * e.sum())


def geodesic_objective(path: GeodesicPath) -> ObjectiveFunction:
    """``K sum_k W[z_{k-1}, z_k]`` as a function of the stacked free shapes.

    The Hessian is block tridiagonal: the mixed derivative of ``W`` couples
    consecutive shapes.
    """
    K = path.K
    if K < 2:
        raise ValueError("a geodesic needs K >= 2")
    W = path.energy
    za, zb = path.shapes[0], path.shapes[-1]
    n = path.surface.dim

    def chain(x):
        return np.concatenate([za[None], np.asarray(x, float).reshape(K - 1, n), zb[None]])

    def value(x):
        Z = chain(x)
        total = 0.0
        for k in range(1, K + 1):
            v = W.value(Z[k - 1], Z[k])
            if not v < INFEASIBLE:
                return INFEASIBLE
            total += v
        return K * total

    def gradient(x):
        Z = chain(x)
        g = np.empty((K - 1, n))
        for k in range(1, K):
            g[k - 1] = W.grad_second(Z[k - 1], Z[k]) + W.grad_first(Z[k], Z[k + 1])
        return K * g.reshape(-1)

    def hessian(x):
        Z = chain(x)
        blocks = [[None] * (K - 1) for _ in range(K - 1)]
        for k in range(1, K):
            blocks[k - 1][k - 1] = W.hess_second(Z[k - 1], Z[k]) + W.hess_first(Z[k], Z[k + 1])
            if k < K - 1:
                M = W.hess_mixed(Z[k], Z[k + 1])
                blocks[k - 1][k] = M
                blocks[k][k - 1] = M.T
        return (K * sparse.bmat(blocks, format="csr")).tocsr()

    return ObjectiveFunction(value, gradient, hessian, name="geodesic")


def initialize_geodesic(surface: SimplicialSurface, z_a, z_b, K: int, energy: Energy) -> GeodesicPath:
    """Linear interpolation ``z_k = (1 - k/K) z_a + (k/K) z_b``.

    Entries on which the endpoints agree are copied exactly. Where a blend violates a triangle inequality its lengths are blended
    geometrically instead.

    Raises
    ------
    EndpointInfeasible
        If an endpoint violates a triangle inequality.
    """
    z_a, z_b = np.asarray(z_a, float), np.asarray(z_b, float)
    for z in (z_a, z_b):
        if not triangle_inequalities(surface, z)[1]:
            raise EndpointInfeasible("geodesic endpoint violates a triangle inequality")
    E = surface.edge_count
    shapes = np.empty((K + 1, surface.dim))
    for k in range(K + 1):
        t = k / K
        z = (1 - t) * z_a + t * z_b
        if not triangle_inequalities(surface, z)[1]:
            z[:E] = np.exp((1 - t) * np.log(z_a[:E]) + t * np.log(z_b[:E]))
        # shared entries are copied so that eliminated coordinates stay bit-exact
        shapes[k] = np.where(z_a == z_b, z_a, z)
    shapes[0], shapes[-1] = z_a, z_b
    return GeodesicPath(surface, shapes, energy)


def linear_blend(z_a, z_b, t: float) -> np.ndarray:
    """Componentwise blend ``(1 - t) z_a + t z_b``."""
    return (1 - t) * np.asarray(z_a, float) + t * np.asarray(z_b, float)

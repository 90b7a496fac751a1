import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from nric.energies import QuadraticEnergy
from nric.errors import InfeasibleStart, ParseError
from nric.integrability import ConstraintSystem
from nric.mesh import triangle_inequalities
from nric.objectives import dissimilarity_objective
from nric.optim import (ObjectiveFunction, ReducedProblem, SolverConfig, augmented_lagrangian,
                        newton_inner, solve_constrained)

from conftest import load, perturbed


class SphereConstraint:
    """``|z|^2 - 1 = 0`` as a one-row constraint system."""

    n_rows = 1

    def residual(self, z):
        return np.array([z @ z - 1.0])

    def jacobian(self, z):
        return sparse.csr_matrix(2 * z[None, :])

    def hessian_contraction(self, z, w):
        return sparse.identity(len(z), format="csr") * (2 * w[0])

    def admissible(self, z):
        return True


def distance_objective(a):
    return ObjectiveFunction(lambda z: float((z - a) @ (z - a)), lambda z: 2 * (z - a),
                             lambda z: sparse.identity(len(z), format="csr") * 2.0)


# ------------------------------------------------------------------ config
finite = st.floats(1e-6, 1e6)


@settings(max_examples=50, deadline=None)
@given(mu0=finite, mu_plus=st.floats(1.5, 1e4), eta_plus=st.floats(0.01, 1.0), eps_Q=finite,
       j_max=st.integers(1, 10000), warm=st.booleans())
def test_config_round_trip(mu0, mu_plus, eta_plus, eps_Q, j_max, warm):
    cfg = SolverConfig(mu0=mu0, mu_plus=mu_plus, eta_plus=eta_plus, eps_Q=eps_Q, j_max=j_max,
                       bfgs_warmstart=warm)
    assert SolverConfig.from_text(cfg.to_text()) == cfg


def test_config_defaults():
    cfg = SolverConfig()
    assert (cfg.mu0, cfg.mu_plus, cfg.eta_plus) == (10.0, 100.0, 0.9)
    assert (cfg.eps_Q, cfg.k_max, cfg.j_max, cfg.tau_plus, cfg.beta_shift) == \
        (1e-8, 100, 500, 10.0, 1e-3)
    assert not cfg.bfgs_warmstart and cfg.bfgs_iterations == 25


@pytest.mark.parametrize("text", ["mu0 10", "nonsense = 1", "mu0 = abc", "mu_plus = 0.5",
                                  "bfgs_warmstart = maybe", "j_max = 1.5"])
def test_config_parse_errors(text):
    with pytest.raises(ParseError):
        SolverConfig.from_text(text)


def test_config_comments_and_blanks():
    cfg = SolverConfig.from_text("# header\n\nmu0 = 3   # penalty\n eps_L=1e-5\n")
    assert cfg.mu0 == 3 and cfg.eps_L == 1e-5


# --------------------------------------------------------- augmented L
def test_augmented_lagrangian_reductions(rng):
    surface, X, z = load("saddle")
    system = ConstraintSystem(surface)
    zp = perturbed(z, surface, rng)
    obj = dissimilarity_objective(QuadraticEnergy(surface, z), z)
    lam = rng.standard_normal(system.n_rows)
    val, g, H = augmented_lagrangian(obj, system, zp, np.zeros(system.n_rows), 0.0)
    assert val == pytest.approx(obj.value(zp))
    np.testing.assert_allclose(g, obj.gradient(zp))
    # on the manifold the gradient is the stationarity expression DE - DQ^T lam
    val, g, H = augmented_lagrangian(obj, system, z, lam, 7.0)
    np.testing.assert_allclose(g, obj.gradient(z) - system.jacobian(z).T @ lam, atol=1e-12)
    assert abs(H - H.T).max() < 1e-10


# ------------------------------------------------------------------ Newton
def test_newton_quadratic_one_step(rng):
    surface, X, z = load("dome")
    system = ConstraintSystem(surface)
    obj = dissimilarity_objective(QuadraticEnergy(surface, z), z)
    prob = ReducedProblem(obj, system, z)
    x0 = perturbed(z, surface, rng)
    res = newton_inner(prob, x0, np.zeros(system.n_rows), 0.0, 1e-10, SolverConfig())
    assert res.status == "converged" and res.iterations == 1
    np.testing.assert_allclose(res.x, z, atol=1e-12)


def test_newton_descent_and_feasibility(rng):
    surface, X, z = load("dome")
    system = ConstraintSystem(surface)
    zt = perturbed(z, surface, rng, 0.05)
    # squeeze one face close to degeneracy
    for f in surface.face_edges:
        trial = zt.copy()
        trial[f[2]] = 0.999 * (zt[f[0]] + zt[f[1]])
        if triangle_inequalities(surface, trial)[1]:
            zt = trial
            break
    else:
        pytest.fail("no face could be squeezed")
    obj = dissimilarity_objective(QuadraticEnergy(surface, z), z)
    prob = ReducedProblem(obj, system, zt)
    lam = np.zeros(system.n_rows)
    res = newton_inner(prob, zt, lam, 100.0, 1e-9, SolverConfig(), audit=True)
    vals = [prob.lagrangian_value(x, lam, 100.0) for x in res.trace]
    assert len(vals) > 2
    assert np.all(np.diff(vals) <= 1e-12 * abs(vals[0]))
    assert all(system.admissible(x) for x in res.trace)


# ------------------------------------------------------------- outer loop
def test_sphere_projection_and_multiplier():
    a = np.array([3.0, -1.0, 2.0])
    z, lam, rep = solve_constrained(distance_objective(a), SphereConstraint(), np.ones(3) * 0.2)
    assert rep.converged
    np.testing.assert_allclose(z, a / np.linalg.norm(a), atol=1e-8)
    assert lam[0] == pytest.approx(1 - np.linalg.norm(a), rel=1e-6)


def test_optimal_start_returns_immediately():
    surface, X, z = load("saddle")
    obj = dissimilarity_objective(QuadraticEnergy(surface, z), z)
    zs, lam, rep = solve_constrained(obj, ConstraintSystem(surface), z)
    assert rep.converged and rep.outer_iterations == 1 and rep.penalty_increases == 0
    assert rep.inner_iterations == 0
    np.testing.assert_array_equal(zs, z)


def projection_problem(rng):
    surface, X, z = load("dome")
    system = ConstraintSystem(surface)
    zt = perturbed(z, surface, rng, 0.05)
    return surface, system, zt, dissimilarity_objective(QuadraticEnergy(surface, zt), zt)


def test_projection_converges(rng):
    surface, system, zt, obj = projection_problem(rng)
    z, lam, rep = solve_constrained(obj, system, zt, audit=True)
    assert rep.converged and rep.status == "converged"
    assert np.abs(system.residual(z)).max() <= 1e-8
    assert rep.lagrangian_grad <= 1e-6
    assert all(system.admissible(x) for x in rep.iterates)
    assert set(rep.timings) >= {"evaluation", "hessian", "solve", "line_search", "total"}
    assert len(rep.history) == rep.outer_iterations


def test_multiplier_steps_shrink(rng):
    surface, system, zt, obj = projection_problem(rng)
    lams = []
    for k in range(1, 8):
        cfg = SolverConfig(k_max=k)
        lams.append(solve_constrained(obj, system, zt, cfg)[1])
    steps = [np.linalg.norm(b - a) for a, b in zip(lams, lams[1:])]
    tail = [s for s in steps if s > 0][-3:]
    assert len(tail) >= 2 and all(b < a for a, b in zip(tail, tail[1:]))


def test_deterministic(rng):
    surface, system, zt, obj = projection_problem(rng)
    z1, l1, _ = solve_constrained(obj, system, zt)
    z2, l2, _ = solve_constrained(obj, system, zt)
    np.testing.assert_array_equal(z1, z2)
    np.testing.assert_array_equal(l1, l2)


def test_max_outer_iterations(rng):
    surface, system, zt, obj = projection_problem(rng)
    z, lam, rep = solve_constrained(obj, system, zt, SolverConfig(k_max=1))
    assert not rep.converged and rep.status == "max_outer_iterations"
    assert system.admissible(z)


def test_fixed_entries_are_eliminated(rng):
    surface, system, zt, obj = projection_problem(rng)
    free = np.ones(surface.dim, bool)
    free[:surface.edge_count] = False
    z, lam, rep = solve_constrained(obj, system, zt, free=free)
    np.testing.assert_array_equal(z[:surface.edge_count], zt[:surface.edge_count])
    assert rep.converged


def test_bfgs_warmstart(rng):
    surface, system, zt, obj = projection_problem(rng)
    z, lam, rep = solve_constrained(obj, system, zt, SolverConfig(bfgs_warmstart=True))
    assert rep.converged


def test_infeasible_start():
    surface, X, z = load("saddle")
    bad = z.copy()
    bad[0] = 50.0
    obj = dissimilarity_objective(QuadraticEnergy(surface, z), z)
    with pytest.raises(InfeasibleStart):
        solve_constrained(obj, ConstraintSystem(surface), bad)


def test_report_as_dict():
    a = np.array([1.0, 2.0, 2.0])
    _, _, rep = solve_constrained(distance_objective(a), SphereConstraint(), np.ones(3))
    d = rep.as_dict()
    assert d["converged"] is True and "time_total" in d
    assert dataclasses.is_dataclass(rep)

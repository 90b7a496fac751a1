"""Augmented Lagrange solver for ``min E(z)`` subject to ``Q(z) = 0``.

The outer loop updates multipliers or the penalty weight; the inner loop is a
line search Newton method on the augmented Lagrangian
``L = E - Q . lambda + mu/2 |Q|^2`` with a diagonally shifted sparse Cholesky
factorization. Points violating a triangle inequality, or with a dihedral
angle outside ``(-pi, pi)``, evaluate to :data:`INFEASIBLE` and are never
accepted by the line search.

Fixed coordinates are eliminated: the solver works on the free entries of the
NRIC vector only and keeps all other entries at their initial values.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize, sparse

from .errors import InfeasibleStart, ParseError
from .linalg import CholeskySolver, shifted_cholesky
from .mesh import INFEASIBLE

logger = logging.getLogger(__name__)


@dataclass
class ObjectiveFunction:
    """Bundle of callables defining an objective on full NRIC vectors.

    ``value`` must return :data:`INFEASIBLE` where the objective is not
    defined; ``gradient`` and ``hessian`` are only called at points with a
    finite value.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], sparse.spmatrix]
    name: str = "objective"

    def is_feasible(self, z) -> bool:
        return self.value(z) < INFEASIBLE


@dataclass
class SolverConfig:
    """Parameters of the augmented Lagrange and Newton loops.

    ``inner_tol_floor`` bounds the inner tolerance from below by
    ``inner_tol_floor * eps_L``; ``armijo_slack`` admits steps whose decrease
    is lost in roundoff (relative to ``|L|``).
    """

    mu0: float = 10.0
    lambda0: float = 0.0
    mu_plus: float = 100.0
    eta_plus: float = 0.9
    eps_Q: float = 1e-8
    eps_L: float = 1e-6
    k_max: int = 100
    j_max: int = 500
    tau_plus: float = 10.0
    beta_shift: float = 1e-3
    armijo_sigma: float = 0.1
    backtrack: float = 0.5
    min_step: float = 1e-14
    inner_tol_floor: float = 0.1
    armijo_slack: float = 1e2 * np.finfo(float).eps
    bfgs_warmstart: bool = False
    bfgs_iterations: int = 25

    def __post_init__(self):
        if not self.mu_plus > 1:
            raise ValueError("mu_plus must exceed 1")
        if not 0 < self.eta_plus <= 1:
            raise ValueError("eta_plus must lie in (0, 1]")
        if not self.beta_shift > 0:
            raise ValueError("beta_shift must be positive")

    @classmethod
    def from_text(cls, text: str) -> "SolverConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"config line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ParseError(f"config line {lineno}: unknown key {key!r}")
            try:
                if types[key] in ("bool", bool):
                    if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(val)
                    kwargs[key] = val.lower() in ("true", "1", "yes")
                elif types[key] in ("int", int):
                    kwargs[key] = int(val)
                else:
                    kwargs[key] = float(val)
            except ValueError:
                raise ParseError(f"config line {lineno}: bad value {val!r} for {key}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ParseError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "SolverConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


@dataclass
class AugLagState:
    """Iterate, multipliers, penalty and tolerances of the outer loop."""

    z: np.ndarray
    multipliers: np.ndarray
    mu: float
    eta: float
    omega: float
    outer: int = 0
    inner_total: int = 0
    penalty_increases: int = 0


@dataclass
class SolveReport:
    """Outcome of :func:`solve_constrained`."""

    converged: bool
    status: str
    outer_iterations: int
    inner_iterations: int
    penalty_increases: int
    constraint_inf: float
    lagrangian_grad: float
    objective: float
    final_mu: float
    timings: dict = field(default_factory=dict)
    history: list = field(default_factory=list)      # one dict per outer iteration
    iterates: list = field(default_factory=list)     # accepted iterates when audited
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "converged", "status", "outer_iterations", "inner_iterations",
            "penalty_increases", "constraint_inf", "lagrangian_grad", "objective", "final_mu")}
        for k, v in self.timings.items():
            out[f"time_{k}"] = v
        return out


class _Timer:
    def __init__(self):
        self.t = {"evaluation": 0.0, "hessian": 0.0, "solve": 0.0, "line_search": 0.0}

    def add(self, key, t0):
        self.t[key] += time.perf_counter() - t0


class ReducedProblem:
    """Objective and constraints restricted to the free entries of a full vector.

    Parameters
    ----------
    objective : ObjectiveFunction
    system : ConstraintSystem or StackedConstraints
        Anything with ``residual``, ``jacobian``, ``hessian_contraction`` and
        ``admissible``.
    z_full : ndarray
        Template holding the values of the fixed entries.
    free : ndarray of bool, optional
        Mask of free entries; all entries are free by default.
    """

    def __init__(self, objective: ObjectiveFunction, system, z_full, free=None):
        self.objective = objective
        self.system = system
        self.template = np.array(z_full, float)
        self.free = np.ones(len(self.template), bool) if free is None else np.asarray(free, bool)
        self.free_idx = np.flatnonzero(self.free)
        self.timer = _Timer()

    def full(self, x) -> np.ndarray:
        z = self.template.copy()
        z[self.free_idx] = x
        return z

    def reduce(self, z) -> np.ndarray:
        return np.asarray(z, float)[self.free_idx]

    # L = E - Q . lam + mu/2 |Q|^2
    def lagrangian_value(self, x, lam, mu) -> float:
        t0 = time.perf_counter()
        try:
            z = self.full(x)
            if not self.system.admissible(z):
                return INFEASIBLE
            E = self.objective.value(z)
            if not E < INFEASIBLE:
                return INFEASIBLE
            Q = self.system.residual(z)
            return float(E - Q @ lam + 0.5 * mu * Q @ Q)
        finally:
            self.timer.add("evaluation", t0)

    def lagrangian_gradient(self, x, lam, mu):
        t0 = time.perf_counter()
        z = self.full(x)
        Q = self.system.residual(z)
        J = self.system.jacobian(z)
        g = self.objective.gradient(z) + J.T @ (mu * Q - lam)
        self.timer.add("evaluation", t0)
        return g[self.free_idx], Q, J

    def lagrangian_hessian(self, x, lam, mu, Q=None, J=None):
        t0 = time.perf_counter()
        z = self.full(x)
        if Q is None:
            Q = self.system.residual(z)
        if J is None:
            J = self.system.jacobian(z)
        Jf = J[:, self.free_idx]
        H = self.objective.hessian(z)[self.free_idx][:, self.free_idx]
        H = H + self.system.hessian_contraction(z, mu * Q - lam)[self.free_idx][:, self.free_idx]
        H = H + mu * (Jf.T @ Jf)
        self.timer.add("hessian", t0)
        return sparse.csr_matrix(H)


def augmented_lagrangian(objective: ObjectiveFunction, system, z, multipliers, mu):
    """Value, gradient and Hessian of ``E - Q . lambda + mu/2 |Q|^2`` at ``z``.

    Returns ``(INFEASIBLE, None, None)`` at inadmissible points.
    """
    prob = ReducedProblem(objective, system, z)
    x = prob.reduce(z)
    lam = np.asarray(multipliers, float)
    val = prob.lagrangian_value(x, lam, mu)
    if not val < INFEASIBLE:
        return INFEASIBLE, None, None
    g, Q, J = prob.lagrangian_gradient(x, lam, mu)
    return val, g, prob.lagrangian_hessian(x, lam, mu, Q, J)


@dataclass
class InnerResult:
    x: np.ndarray
    iterations: int
    grad_norm: float
    status: str          # "converged", "stalled" or "max_iterations"
    trace: list = field(default_factory=list)


def newton_inner(prob: ReducedProblem, x, lam, mu, omega, config: SolverConfig,
                 solver: CholeskySolver | None = None, audit: bool = False) -> InnerResult:
    """Line search Newton iterations on the augmented Lagrangian.

    Stops when ``|grad L| <= omega`` or after ``config.j_max`` steps. With
    ``audit`` set, every accepted iterate is recorded in ``trace``.
    """
    solver = solver or CholeskySolver()
    x = np.array(x, float)
    Lx = prob.lagrangian_value(x, lam, mu)
    if not Lx < INFEASIBLE:
        raise InfeasibleStart("Newton iteration started at an inadmissible point")
    trace = [x.copy()] if audit else []
    g, Q, J = prob.lagrangian_gradient(x, lam, mu)
    for j in range(config.j_max):
        gn = float(np.linalg.norm(g))
        if gn <= omega:
            return InnerResult(x, j, gn, "converged", trace)
        H = prob.lagrangian_hessian(x, lam, mu, Q, J)
        t0 = time.perf_counter()
        factor, tau = shifted_cholesky(H, solver, config.beta_shift, config.tau_plus)
        d = -factor(g)
        prob.timer.add("solve", t0)
        slope = float(g @ d)
        alpha = 1.0
        slack = config.armijo_slack * abs(Lx)
        t_ls, t_eval = time.perf_counter(), prob.timer.t["evaluation"]
        while True:
            xn = x + alpha * d
            Ln = prob.lagrangian_value(xn, lam, mu)
            if Ln < INFEASIBLE and Ln <= Lx + config.armijo_sigma * alpha * slope + slack:
                break
            alpha *= config.backtrack
            if alpha < config.min_step:
                break
        prob.timer.t["evaluation"] = t_eval
        prob.timer.add("line_search", t_ls)
        if alpha < config.min_step:
            logger.debug("line search stalled at |grad L| = %.3e", gn)
            return InnerResult(x, j, gn, "stalled", trace)
        x, Lx = xn, Ln
        if audit:
            trace.append(x.copy())
        g, Q, J = prob.lagrangian_gradient(x, lam, mu)
        logger.debug("newton %d: L=%.12e |g|=%.3e tau=%.2e alpha=%.3g", j, Lx,
                     np.linalg.norm(g), tau, alpha)
    gn = float(np.linalg.norm(g))
    status = "converged" if gn <= omega else "max_iterations"
    return InnerResult(x, config.j_max, gn, status, trace)


def _bfgs_warmstart(prob: ReducedProblem, x, lam, mu, iterations):
    def fun(y):
        v = prob.lagrangian_value(y, lam, mu)
        if not v < INFEASIBLE:
            return INFEASIBLE, np.zeros_like(y)
        return v, prob.lagrangian_gradient(y, lam, mu)[0]

    res = optimize.minimize(fun, x, jac=True, method="L-BFGS-B",
                            options=dict(maxiter=iterations))
    y = res.x
    if prob.lagrangian_value(y, lam, mu) <= prob.lagrangian_value(x, lam, mu):
        return y
    return x


def solve_constrained(objective: ObjectiveFunction, system, z0, config: SolverConfig | None = None,
                      free=None, multipliers=None, audit: bool = False):
    """Minimize ``objective`` on ``{Q = 0}`` starting from ``z0``.

    Parameters
    ----------
    objective : ObjectiveFunction
    system : ConstraintSystem or StackedConstraints
    z0 : ndarray
        Full initial NRIC vector (or stacked vectors). Must be admissible;
        ``Q(z0)`` need not vanish.
    config : SolverConfig, optional
    free : ndarray of bool, optional
        Mask of free entries; the others stay at their values in ``z0``.
    multipliers : ndarray, optional
        Initial multipliers; defaults to ``config.lambda0`` everywhere.
    audit : bool
        Keep every accepted iterate (full vectors) in ``report.iterates``.

    Returns
    -------
    z : ndarray
        Final full vector.
    multipliers : ndarray
    report : SolveReport
    """
    config = config or SolverConfig()
    prob = ReducedProblem(objective, system, z0, free)
    x = prob.reduce(z0)
    if not system.admissible(prob.full(x)) or not objective.is_feasible(prob.full(x)):
        raise InfeasibleStart("initial NRIC vector is not admissible")
    lam = (np.full(system.n_rows, config.lambda0) if multipliers is None
           else np.array(multipliers, float))
    mu = config.mu0
    # Initial tolerances follow the penalty-update formulas at mu0.
    state = AugLagState(prob.full(x), lam, mu, eta=1.0 / mu ** 0.1, omega=1.0 / mu)
    solver = CholeskySolver()
    t_start = time.perf_counter()
    history, iterates, notes = [], [], []
    status = "max_outer_iterations"
    gnorm = np.inf
    if config.bfgs_warmstart:
        x = _bfgs_warmstart(prob, x, lam, mu, config.bfgs_iterations)

    for k in range(config.k_max):
        omega_eff = max(state.omega, config.inner_tol_floor * config.eps_L)
        inner = newton_inner(prob, x, lam, mu, omega_eff, config, solver, audit)
        x = inner.x
        state.inner_total += inner.iterations
        state.outer = k + 1
        if audit:
            iterates.extend(prob.full(xi) for xi in inner.trace)
        Q = system.residual(prob.full(x))
        qinf = float(np.max(np.abs(Q))) if Q.size else 0.0
        gnorm = inner.grad_norm
        logger.info("outer %d: |Q|=%.3e |grad L|=%.3e mu=%.1e inner=%d (%s)",
                    k, qinf, gnorm, mu, inner.iterations, inner.status)
        history.append(dict(outer=k, constraint_inf=qinf, lagrangian_grad=gnorm, mu=mu,
                            inner=inner.iterations, inner_status=inner.status))
        if inner.status == "stalled":
            notes.append(f"line search stalled in outer iteration {k}")
        if qinf <= config.eps_Q and gnorm <= config.eps_L:
            status = "converged"
            break
        if qinf <= state.eta:
            # grad(E - Q.lam_new) equals the augmented gradient just measured
            lam = lam - mu * Q
            state.eta = max(state.eta / mu ** config.eta_plus, config.eps_Q)
            state.omega = state.omega / mu
        else:
            mu = config.mu_plus * mu
            state.penalty_increases += 1
            state.eta = max(1.0 / mu ** 0.1, config.eps_Q)
            state.omega = 1.0 / mu

    z = prob.full(x)
    Q = system.residual(z)
    E = objective.value(z)
    prob.timer.t["total"] = time.perf_counter() - t_start
    report = SolveReport(
        converged=status == "converged", status=status, outer_iterations=state.outer,
        inner_iterations=state.inner_total, penalty_increases=state.penalty_increases,
        constraint_inf=float(np.max(np.abs(Q))) if Q.size else 0.0,
        lagrangian_grad=float(gnorm), objective=float(E), final_mu=float(mu),
        timings=dict(prob.timer.t), history=history, iterates=iterates, notes=notes)
    return z, lam, report

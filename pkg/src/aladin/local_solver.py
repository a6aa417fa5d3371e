"""Newton-KKT solver for the per-node augmented-Lagrangian subproblem

    min_x  f(x) + lambda^T A x + (rho/2) ||x - y_ref||^2   s.t.  g(x) = 0

and a centralized reference solver for the stacked problem. All constraints
are equalities, so a plain Newton iteration on the KKT conditions with
inertia-correcting regularization and a residual-norm line search suffices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import ShapeError, SolveStalled
from .problem import DistributedProblem, NodeProblem

Array = np.ndarray


@dataclass(frozen=True)
class LocalSolveConfig:
    kkt_tol: float = 1e-12
    max_newton_steps: int = 50
    regularization_floor: float = 1e-8
    backtracking_factor: float = 0.5
    min_step: float = 1e-12

    def __post_init__(self):
        if min(self.kkt_tol, self.regularization_floor, self.min_step) <= 0:
            raise ShapeError("tolerances must be positive")
        if not (0.0 < self.backtracking_factor < 1.0):
            raise ShapeError("backtracking factor must lie in (0, 1)")
        if self.max_newton_steps < 1:
            raise ShapeError("max_newton_steps must be >= 1")


@dataclass(frozen=True)
class LocalSolution:
    x: Array
    mu: Array
    kkt_residual: float
    newton_steps: int
    converged: bool


def _kkt_solve(W: Array, J: Array, rhs: Array, tau0: float) -> Tuple[Array, float]:
    """Solve the symmetric-indefinite KKT system, bumping the Hessian block
    by tau*I (tau = 0, tau0, 10*tau0, ...) until the factorization yields a
    finite solution."""
    n = W.shape[0]
    c = J.shape[0]
    K = np.zeros((n + c, n + c))
    K[n:, :n] = J
    K[:n, n:] = J.T
    tau = 0.0
    while True:
        K[:n, :n] = W if tau == 0.0 else W + tau * np.eye(n)
        try:
            # Conditioning warnings are expected for badly scaled subproblems;
            # every direction is validated downstream by merit decrease.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                sol = sla.solve(K, rhs, assume_a="sym")
            if np.all(np.isfinite(sol)):
                return sol, tau
        except (sla.LinAlgError, ValueError):
            pass
        tau = tau0 if tau == 0.0 else 10.0 * tau
        if tau > 1e16:
            raise SolveStalled("KKT regularization exceeded 1e16 without a usable factorization")


def _newton_kkt(objective_gradient, constraint, constraint_jacobian, lag_hessian,
                x0: Array, mu0: Array, cfg: LocalSolveConfig) -> LocalSolution:
    """Newton iteration on the KKT residual of an equality-constrained problem.

    The callables already absorb any augmented-Lagrangian terms; lag_hessian(x, mu)
    is the Hessian of the full stationarity map.
    """
    x = x0.copy()
    mu = mu0.copy()
    n = x.shape[0]

    def residual(x, mu):
        g = constraint(x)
        stat = objective_gradient(x)
        if g.shape[0]:
            stat = stat + constraint_jacobian(x).T @ mu
        return stat, g

    stat, g = residual(x, mu)
    kkt = max(np.max(np.abs(stat), initial=0.0), np.max(np.abs(g), initial=0.0))
    steps = 0
    while kkt > cfg.kkt_tol and steps < cfg.max_newton_steps:
        J = constraint_jacobian(x)
        W = lag_hessian(x, mu)
        rhs = -np.concatenate([stat, g])
        merit0 = np.sqrt(stat @ stat + g @ g)

        # Inertia handling: if the Newton direction is not a descent direction
        # for the residual merit (indefinite W on the nullspace), convexify by
        # growing tau and recomputing the direction.
        tau = 0.0
        accepted = False
        while not accepted:
            sol, tau_used = _kkt_solve(W if tau == 0.0 else W + tau * np.eye(n),
                                       J, rhs, cfg.regularization_floor)
            dx, dmu = sol[:n], sol[n:]
            alpha = 1.0
            while alpha >= cfg.min_step:
                x_new = x + alpha * dx
                mu_new = mu + alpha * dmu
                stat_n, g_n = residual(x_new, mu_new)
                merit = np.sqrt(stat_n @ stat_n + g_n @ g_n)
                if np.isfinite(merit) and merit < merit0 * (1.0 - 1e-4 * alpha):
                    accepted = True
                    break
                alpha *= cfg.backtracking_factor
            if not accepted:
                tau = cfg.regularization_floor if tau == 0.0 else 10.0 * tau
                tau = max(tau, tau_used * 10.0)
                if tau > 1e8:
                    if merit0 <= 1e3 * cfg.kkt_tol * (1.0 + np.sqrt(n)):
                        # floating-point floor of the residual, not a true stall
                        return LocalSolution(x=x, mu=mu, kkt_residual=float(kkt),
                                             newton_steps=steps,
                                             converged=bool(kkt <= cfg.kkt_tol))
                    raise SolveStalled(
                        f"line search stalled at merit {merit0:.3e}",
                        best=LocalSolution(x=x, mu=mu, kkt_residual=float(kkt),
                                           newton_steps=steps, converged=False))
        x, mu, stat, g = x_new, mu_new, stat_n, g_n
        kkt = max(np.max(np.abs(stat), initial=0.0), np.max(np.abs(g), initial=0.0))
        steps += 1

    return LocalSolution(x=x, mu=mu, kkt_residual=float(kkt),
                         newton_steps=steps, converged=bool(kkt <= cfg.kkt_tol))


def solve_local(node: NodeProblem, lam: Array, y_ref: Array, A: Array, rho: float,
                warm_start: Optional[Tuple[Array, Array]] = None,
                cfg: LocalSolveConfig = LocalSolveConfig()) -> LocalSolution:
    """Solve one node's augmented subproblem to the configured KKT tolerance."""
    lam = np.asarray(lam, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    A = np.asarray(A, dtype=float)
    if y_ref.shape != (node.n,) or A.shape != (lam.shape[0], node.n):
        raise ShapeError("solve_local: inconsistent dimensions")
    if rho <= 0:
        raise ShapeError("rho must be positive")
    if node.lagrangian_hessian is None:
        raise ShapeError("solve_local requires a lagrangian_hessian oracle")

    ATlam = A.T @ lam
    rho_eye = rho * np.eye(node.n)

    def grad(x):
        return node.objective_gradient(x) + ATlam + rho * (x - y_ref)

    def hess(x, mu):
        return node.lagrangian_hessian(x, mu) + rho_eye

    if warm_start is not None:
        x0, mu0 = np.asarray(warm_start[0], float).copy(), np.asarray(warm_start[1], float).copy()
    else:
        x0, mu0 = y_ref.copy(), np.zeros(node.c)
    return _newton_kkt(grad, node.eval_constraint, node.eval_constraint_jacobian,
                       hess, x0, mu0, cfg)


def centralized_solve(problem: DistributedProblem, init: Array,
                      cfg: LocalSolveConfig = LocalSolveConfig()
                      ) -> Tuple[Array, Array, list]:
    """Solve the stacked problem (all nodes concatenated, coupling rows appended
    to the equality constraints) with the same Newton-KKT machinery.

    Returns (x_star, lambda_star, mu_star) where mu_star is the list of
    per-node local multipliers.
    """
    nodes = problem.nodes
    dims = [nd.n for nd in nodes]
    offsets = np.concatenate([[0], np.cumsum(dims)])
    n_total = int(offsets[-1])
    init = np.asarray(init, dtype=float)
    if init.shape != (n_total,):
        raise ShapeError(f"init has shape {init.shape}, expected ({n_total},)")

    cons_dims = [nd.c for nd in nodes]
    c_local = int(sum(cons_dims))
    m = problem.coupling.m
    A_full = np.hstack(list(problem.coupling.blocks))
    b = problem.coupling.rhs

    def split(x):
        return [x[offsets[i]:offsets[i + 1]] for i in range(len(nodes))]

    def grad(x):
        return np.concatenate([nd.objective_gradient(xi) for nd, xi in zip(nodes, split(x))])

    def constraint(x):
        parts = [nd.eval_constraint(xi) for nd, xi in zip(nodes, split(x))]
        parts.append(A_full @ x - b)
        return np.concatenate(parts)

    def jacobian(x):
        J = np.zeros((c_local + m, n_total))
        row = 0
        for i, (nd, xi) in enumerate(zip(nodes, split(x))):
            J[row:row + nd.c, offsets[i]:offsets[i + 1]] = nd.eval_constraint_jacobian(xi)
            row += nd.c
        J[row:, :] = A_full
        return J

    def hess(x, mu):
        W = np.zeros((n_total, n_total))
        row = 0
        for i, (nd, xi) in enumerate(zip(nodes, split(x))):
            if nd.lagrangian_hessian is None:
                raise ShapeError(f"node {i} lacks a lagrangian_hessian oracle")
            sl = slice(offsets[i], offsets[i + 1])
            W[sl, sl] = nd.lagrangian_hessian(xi, mu[row:row + nd.c])
            row += nd.c
        return W

    sol = _newton_kkt(grad, constraint, jacobian, hess,
                      init, np.zeros(c_local + m), cfg)
    mu_star = []
    row = 0
    for nd in nodes:
        mu_star.append(sol.mu[row:row + nd.c])
        row += nd.c
    lambda_star = sol.mu[row:]
    return sol.x, lambda_star, mu_star

import numpy as np
import pytest
import scipy.linalg as sla

from aladin import (CouplingSpec, DistributedProblem, LocalSolveConfig,
                    ShapeError, centralized_solve, quadratic_node, solve_local)


def test_unconstrained_sphere_minimum():
    node = quadratic_node(np.eye(3), np.zeros(3))
    sol = solve_local(node, np.zeros(0), np.zeros(3), np.zeros((0, 3)), rho=1.0)
    assert sol.converged
    assert np.allclose(sol.x, 0.0, atol=1e-12)
    assert sol.kkt_residual <= 1e-12


def test_constrained_sphere_kkt_point():
    # min 0.5||x||^2 + 0.5||x||^2 s.t. x1 = 1 -> 2x + mu*e1 = 0, x1 = 1
    node = quadratic_node(np.eye(2), np.zeros(2),
                          C=np.array([[1.0, 0.0]]), d=np.array([-1.0]))
    sol = solve_local(node, np.zeros(0), np.zeros(2), np.zeros((0, 2)), rho=1.0)
    assert sol.converged
    assert np.allclose(sol.x, [1.0, 0.0], atol=1e-10)
    assert np.allclose(sol.mu, [-2.0], atol=1e-10)


def test_quadratic_matches_dense_kkt_oracle():
    rng = np.random.default_rng(11)
    n, c, m = 5, 2, 3
    Q = np.eye(n) * 2.0 + 0.1 * np.ones((n, n))
    lin = rng.standard_normal(n)
    C = rng.standard_normal((c, n))
    d = rng.standard_normal(c)
    node = quadratic_node(Q, lin, C, d)
    lam = rng.standard_normal(m)
    A = rng.standard_normal((m, n))
    y = rng.standard_normal(n)
    rho = 25.0

    sol = solve_local(node, lam, y, A, rho)

    # oracle: one saddle-point solve of the augmented quadratic
    Qs = 0.5 * (Q + Q.T)
    K = np.block([[Qs + rho * np.eye(n), C.T], [C, np.zeros((c, c))]])
    rhs = np.concatenate([-(lin + A.T @ lam - rho * y), -d])
    ref = sla.solve(K, rhs)
    assert np.allclose(sol.x, ref[:n], atol=1e-10)
    assert np.allclose(sol.mu, ref[n:], atol=1e-10)


def test_quadratic_converges_in_one_newton_step():
    rng = np.random.default_rng(2)
    node = quadratic_node(np.diag([1.0, 4.0, 9.0]), rng.standard_normal(3),
                          C=rng.standard_normal((1, 3)))
    sol = solve_local(node, np.zeros(0), rng.standard_normal(3),
                      np.zeros((0, 3)), rho=2.0)
    assert sol.converged
    assert sol.newton_steps == 1


def test_converged_respects_tolerance():
    node = quadratic_node(np.eye(2), np.array([1.0, -2.0]))
    cfg = LocalSolveConfig(kkt_tol=1e-10)
    sol = solve_local(node, np.zeros(0), np.zeros(2), np.zeros((0, 2)),
                      rho=1.0, cfg=cfg)
    assert sol.converged and sol.kkt_residual <= 1e-10


def test_solve_local_requires_positive_rho():
    node = quadratic_node(np.eye(2), np.zeros(2))
    with pytest.raises(ShapeError):
        solve_local(node, np.zeros(0), np.zeros(2), np.zeros((0, 2)), rho=0.0)


def test_solve_local_dimension_check():
    node = quadratic_node(np.eye(2), np.zeros(2))
    with pytest.raises(ShapeError):
        solve_local(node, np.zeros(0), np.zeros(3), np.zeros((0, 2)), rho=1.0)


def test_config_validation():
    with pytest.raises(ShapeError):
        LocalSolveConfig(kkt_tol=0.0)
    with pytest.raises(ShapeError):
        LocalSolveConfig(backtracking_factor=1.5)
    with pytest.raises(ShapeError):
        LocalSolveConfig(max_newton_steps=0)


def test_centralized_two_node_consensus():
    # f_i = 0.5||x_i - a_i||^2 with consensus coupling x1 - x2 = 0
    a1, a2 = np.array([1.0]), np.array([3.0])
    nodes = [quadratic_node(np.eye(1), -a1), quadratic_node(np.eye(1), -a2)]
    coupling = CouplingSpec(blocks=[np.array([[1.0]]), np.array([[-1.0]])],
                            rhs=np.zeros(1))
    prob = DistributedProblem(nodes=nodes, coupling=coupling, rho=1.0)
    x, lam, mu = centralized_solve(prob, np.zeros(2))
    assert np.allclose(x, [2.0, 2.0], atol=1e-10)
    assert len(mu) == 2 and all(mi.shape == (0,) for mi in mu)


def test_centralized_matches_single_node_limit():
    rng = np.random.default_rng(8)
    node = quadratic_node(np.diag([2.0, 3.0]), rng.standard_normal(2),
                          C=np.array([[1.0, 1.0]]), d=np.array([-1.0]))
    coupling = CouplingSpec(blocks=[np.zeros((0, 2))], rhs=np.zeros(0))
    prob = DistributedProblem(nodes=[node], coupling=coupling, rho=1.0)
    x_star, _, _ = centralized_solve(prob, np.zeros(2))
    sol = solve_local(node, np.zeros(0), x_star, np.zeros((0, 2)), rho=1e-12)
    assert np.allclose(sol.x, x_star, atol=1e-8)

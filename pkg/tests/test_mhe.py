import numpy as np
import pytest

from aladin import (LayoutError, MeasurementSingular, check_derivatives,
                    coupling_residual)
from aladin.mhe import (RobotParams, benchmark_instance, build_split_problem,
                        build_unsplit_problem, default_controls, dynamics_jacobian,
                        dynamics_step, measure, measurement_jacobian,
                        simulate_truth, split_boundaries, stack_states,
                        unstack_states)


PARAMS = RobotParams()


def test_dynamics_step_examples():
    x = np.array([0.0, 0.0, 0.0])
    u = np.array([1.0, 0.0])
    assert np.allclose(dynamics_step(x, u, 0.1), [0.1, 0.0, 0.0])
    x = np.array([1.0, 2.0, np.pi / 2])
    u = np.array([2.0, 0.5])
    assert np.allclose(dynamics_step(x, u, 0.1),
                       [1.0, 2.2, np.pi / 2 + 0.05], atol=1e-12)


def test_dynamics_jacobian_finite_difference():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3)
    u = rng.standard_normal(2)
    J = dynamics_jacobian(x, u, 0.1)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (dynamics_step(x + e, u, 0.1) - dynamics_step(x - e, u, 0.1)) / (2 * h)
        assert np.allclose(J[:, j], fd, atol=1e-8)


def test_measure_three_four_five():
    y = measure(np.array([3.0, 4.0, 0.7]))
    assert np.isclose(y[0], 5.0)
    assert np.isclose(y[1], np.arctan2(4.0, 3.0))


def test_measure_origin_singular():
    with pytest.raises(MeasurementSingular):
        measure(np.zeros(3))


def test_measurement_jacobian_finite_difference():
    x = np.array([0.6, -0.8, 1.0])
    J = measurement_jacobian(x)
    h = 1e-7
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (measure(x + e) - measure(x - e)) / (2 * h)
        assert np.allclose(J[:, j], fd, atol=1e-6)


def test_simulate_truth_deterministic():
    controls = default_controls(10)
    t1 = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, PARAMS, seed=7)
    t2 = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, PARAMS, seed=7)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.measurements, t2.measurements)
    t3 = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, PARAMS, seed=8)
    assert not np.array_equal(t1.measurements, t3.measurements)


def test_simulate_truth_states_are_noiseless_rollout():
    controls = default_controls(5)
    traj = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, PARAMS, seed=3)
    x = np.array([0.1, 0.1, 0.0])
    for k in range(5):
        x = dynamics_step(x, controls[k], PARAMS.T)
        assert np.allclose(traj.states[k + 1], x, atol=1e-15)


def test_split_boundaries_25_by_4():
    bounds = split_boundaries(25, 25, 4)
    assert bounds == (0, 6, 12, 18, 25)
    with pytest.raises(LayoutError):
        split_boundaries(25, 25, 1)
    with pytest.raises(LayoutError):
        split_boundaries(10, 25, 4)


def test_benchmark_instance_dims():
    inst = benchmark_instance(seed=7)
    assert inst.layout.dims == ((21, 18), (21, 18), (21, 18), (24, 21))
    assert inst.layout.m == 9
    assert inst.problem.coupling.m == 9
    assert inst.unsplit.n == 78 and inst.unsplit.c == 75


def test_split_objective_tiles_unsplit():
    inst = benchmark_instance(seed=7)
    states = inst.trajectory.states[:26]
    blocks = stack_states(inst.layout, states)
    split_total = sum(node.objective(xb)
                      for node, xb in zip(inst.problem.nodes, blocks))
    whole = inst.unsplit.objective(states.ravel())
    assert np.isclose(split_total, whole, rtol=1e-12)


def test_split_constraints_cover_dynamics():
    inst = benchmark_instance(seed=7)
    states = inst.trajectory.states[:26]
    blocks = stack_states(inst.layout, states)
    # the noiseless truth satisfies the dynamics exactly in every window
    for node, xb in zip(inst.problem.nodes, blocks):
        assert np.max(np.abs(node.eval_constraint(xb))) <= 1e-12
    assert np.max(np.abs(inst.unsplit.eval_constraint(states.ravel()))) <= 1e-12


def test_coupling_residual_zero_on_consistent_stack():
    inst = benchmark_instance(seed=7)
    blocks = stack_states(inst.layout, inst.trajectory.states[:26])
    res = coupling_residual(inst.problem, blocks)
    assert res.shape == (9,)
    assert np.max(np.abs(res)) <= 1e-15


def test_stack_unstack_roundtrip():
    inst = benchmark_instance(seed=7)
    states = inst.trajectory.states[:26]
    assert np.array_equal(unstack_states(inst.layout, stack_states(inst.layout, states)),
                          states)


def test_window_derivatives_check():
    inst = benchmark_instance(seed=7)
    rng = np.random.default_rng(5)
    blocks = stack_states(inst.layout, inst.trajectory.states[:26])
    for node, xb in zip(inst.problem.nodes, blocks):
        point = xb + 0.01 * rng.standard_normal(node.n)
        report = check_derivatives(node, point, rel_tol=1e-5)
        assert report["pass"], report


def test_gn_hessian_positive_definite():
    inst = benchmark_instance(seed=7)
    for node, xb in zip(inst.problem.nodes,
                        stack_states(inst.layout, inst.trajectory.states[:26])):
        eig = np.linalg.eigvalsh(node.gn_hessian(xb))
        assert eig.min() > 0


def test_initial_guess_layout():
    inst = benchmark_instance(seed=7)
    guess = unstack_states(inst.layout, inst.initial_guess)
    assert np.array_equal(guess[:, :2], inst.trajectory.states[:26, :2])
    assert np.array_equal(guess[:, 2], np.zeros(26))


def test_build_split_rejects_short_trajectory():
    controls = default_controls(5)
    traj = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, PARAMS, seed=1)
    with pytest.raises(LayoutError):
        build_split_problem(traj, 10, 10, 2, PARAMS, np.zeros(3), 25.0)
    with pytest.raises(LayoutError):
        build_unsplit_problem(traj, 3, 5, PARAMS, np.zeros(3))

"""Differential-drive robot moving-horizon-estimation benchmark.

State x = (phi, psi, theta): lateral position, longitudinal position,
heading. Controls u = (v, omega). Range-bearing measurements of the
position relative to the origin. The horizon objective is

    0.5 ||x_{l-L} - prior||^2_{P^-1} + 0.5 sum_n ||h(x_n) - y_n||^2_{V^-1}

subject to Euler-discretized unicycle dynamics, split into N consecutive
sub-windows with duplicated boundary states tied together by homogeneous
consistency constraints, which yields a DistributedProblem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import LayoutError, MeasurementSingular, ShapeError
from .problem import CouplingSpec, DistributedProblem, NodeProblem

Array = np.ndarray

# Keeps the Gauss-Newton Hessian invertible: range-bearing measurements carry
# no heading information, so J^T V^-1 J has an exact null direction per state.
# Too small a value amplifies rounding noise through H^-1 in the coordination
# step; 1e-3 is negligible next to the V^-1-scaled curvature (~1e4).
GN_JITTER = 1e-3


@dataclass(frozen=True)
class RobotParams:
    T: float = 0.1
    sigma_r: float = 0.01
    sigma_alpha: float = 0.01
    P: Array = field(default_factory=lambda: 0.1 * np.eye(3))
    V: Optional[Array] = None

    def __post_init__(self):
        if self.T <= 0:
            raise ShapeError("sampling period must be positive")
        if self.V is None:
            object.__setattr__(self, "V", np.diag([self.sigma_r**2, self.sigma_alpha**2]))
        np.linalg.cholesky(self.P)
        np.linalg.cholesky(self.V)

    @property
    def P_inv(self) -> Array:
        return np.linalg.inv(self.P)

    @property
    def V_inv(self) -> Array:
        return np.linalg.inv(self.V)


@dataclass(frozen=True)
class Trajectory:
    states: Array       # (K+1, 3) noiseless rollout
    controls: Array     # (K, 2)
    measurements: Array  # (K+1, 2) noisy range-bearing


@dataclass(frozen=True)
class SplitLayout:
    L: int
    N: int
    base: int                      # global index of the oldest state in the horizon
    boundaries: Tuple[int, ...]    # global state indices s_1 < ... < s_{N+1}
    dims: Tuple[Tuple[int, int], ...]  # per-window (n_i, c_i)

    @property
    def m(self) -> int:
        return 3 * (self.N - 1)

    def window_steps(self, i: int) -> int:
        return self.boundaries[i + 1] - self.boundaries[i]

    def to_json(self) -> str:
        return json.dumps({"L": self.L, "N": self.N, "base": self.base,
                           "boundaries": list(self.boundaries),
                           "dims": [list(d) for d in self.dims]})


def dynamics_step(x: Array, u: Array, T: float) -> Array:
    """One Euler step of the unicycle model."""
    phi, psi, theta = x
    v, omega = u
    return np.array([phi + T * v * np.cos(theta),
                     psi + T * v * np.sin(theta),
                     theta + T * omega])


def dynamics_jacobian(x: Array, u: Array, T: float) -> Array:
    theta = x[2]
    v = u[0]
    J = np.eye(3)
    J[0, 2] = -T * v * np.sin(theta)
    J[1, 2] = T * v * np.cos(theta)
    return J


def measure(x: Array, noise=(0.0, 0.0)) -> Array:
    """Range and bearing of the position (phi, psi) seen from the origin."""
    phi, psi = x[0], x[1]
    r = np.hypot(phi, psi)
    if r < 1e-12:
        raise MeasurementSingular("range-bearing measurement undefined at the origin")
    return np.array([r + noise[0], np.arctan2(psi, phi) + noise[1]])


def measurement_jacobian(x: Array) -> Array:
    phi, psi = x[0], x[1]
    r2 = phi * phi + psi * psi
    r = np.sqrt(r2)
    return np.array([[phi / r, psi / r, 0.0],
                     [-psi / r2, phi / r2, 0.0]])


def _measurement_hessians(x: Array) -> Tuple[Array, Array]:
    """3x3 Hessians of range and bearing (zero rows/cols for theta)."""
    phi, psi = x[0], x[1]
    r2 = phi * phi + psi * psi
    r = np.sqrt(r2)
    Hr = np.zeros((3, 3))
    Hr[:2, :2] = (np.eye(2) - np.outer([phi, psi], [phi, psi]) / r2) / r
    Ha = np.zeros((3, 3))
    Ha[:2, :2] = np.array([[2 * phi * psi, psi * psi - phi * phi],
                           [psi * psi - phi * phi, -2 * phi * psi]]) / (r2 * r2)
    return Hr, Ha


def default_controls(steps: int) -> Array:
    """Smooth open-loop profile keeping the robot away from the origin."""
    n = np.arange(steps)
    return np.column_stack([np.ones(steps), 0.5 * np.sin(0.1 * n)])


def simulate_truth(x0: Array, controls: Array, params: RobotParams, seed: int) -> Trajectory:
    """Noiseless state rollout plus Gaussian-noise measurements.

    Noise comes from numpy's default_rng(seed) (PCG64), so a fixed seed
    reproduces the trajectory bit-for-bit.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != 2 or controls.shape[0] == 0:
        raise ShapeError("controls must be a non-empty (K, 2) array")
    K = controls.shape[0]
    states = np.zeros((K + 1, 3))
    states[0] = np.asarray(x0, dtype=float)
    for k in range(K):
        states[k + 1] = dynamics_step(states[k], controls[k], params.T)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((K + 1, 2)) * np.array([params.sigma_r, params.sigma_alpha])
    measurements = np.array([measure(states[k], noise[k]) for k in range(K + 1)])
    return Trajectory(states=states, controls=controls, measurements=measurements)


def _make_window(traj: Trajectory, params: RobotParams, start: int, steps: int,
                 measure_last: bool, arrival: Optional[Tuple[Array, Array]]) -> NodeProblem:
    """NodeProblem over states start..start+steps with analytic derivatives.

    Fit terms cover local states 0..steps-1; the terminal window also owns
    the final measurement (measure_last). The first window additionally
    carries the arrival cost (prior, P_inv). Duplicated boundary states are
    never measured twice.
    """
    n = 3 * (steps + 1)
    c = 3 * steps
    T = params.T
    V_inv = params.V_inv
    meas_idx = list(range(steps + 1)) if measure_last else list(range(steps))
    y_meas = traj.measurements[start:start + steps + 1]
    u_win = traj.controls[start:start + steps]
    if arrival is not None:
        prior, P_inv = np.asarray(arrival[0], dtype=float), arrival[1]

    def as_states(X):
        return X.reshape(steps + 1, 3)

    def objective(X):
        xs = as_states(X)
        total = 0.0
        for s in meas_idx:
            r = measure(xs[s]) - y_meas[s]
            total += 0.5 * r @ V_inv @ r
        if arrival is not None:
            e = xs[0] - prior
            total += 0.5 * e @ P_inv @ e
        return float(total)

    def objective_gradient(X):
        xs = as_states(X)
        g = np.zeros((steps + 1, 3))
        for s in meas_idx:
            r = measure(xs[s]) - y_meas[s]
            g[s] += measurement_jacobian(xs[s]).T @ (V_inv @ r)
        if arrival is not None:
            g[0] += P_inv @ (xs[0] - prior)
        return g.ravel()

    def constraint(X):
        xs = as_states(X)
        out = np.zeros((steps, 3))
        for s in range(steps):
            out[s] = xs[s + 1] - dynamics_step(xs[s], u_win[s], T)
        return out.ravel()

    def constraint_jacobian(X):
        xs = as_states(X)
        J = np.zeros((c, n))
        for s in range(steps):
            rows = slice(3 * s, 3 * s + 3)
            J[rows, 3 * s:3 * s + 3] = -dynamics_jacobian(xs[s], u_win[s], T)
            J[rows, 3 * (s + 1):3 * (s + 1) + 3] = np.eye(3)
        return J

    def lagrangian_hessian(X, mu):
        xs = as_states(X)
        W = np.zeros((n, n))
        for s in meas_idx:
            Jh = measurement_jacobian(xs[s])
            r = measure(xs[s]) - y_meas[s]
            w = V_inv @ r
            Hr, Ha = _measurement_hessians(xs[s])
            blk = Jh.T @ V_inv @ Jh + w[0] * Hr + w[1] * Ha
            W[3 * s:3 * s + 3, 3 * s:3 * s + 3] += blk
        if arrival is not None:
            W[:3, :3] += P_inv
        mu2 = mu.reshape(steps, 3)
        for s in range(steps):
            theta = xs[s, 2]
            v = u_win[s, 0]
            W[3 * s + 2, 3 * s + 2] += T * v * (mu2[s, 0] * np.cos(theta)
                                                + mu2[s, 1] * np.sin(theta))
        return W

    def gn_hessian(X):
        xs = as_states(X)
        W = np.zeros((n, n))
        for s in meas_idx:
            Jh = measurement_jacobian(xs[s])
            W[3 * s:3 * s + 3, 3 * s:3 * s + 3] += Jh.T @ V_inv @ Jh
        if arrival is not None:
            W[:3, :3] += P_inv
        return W + GN_JITTER * np.eye(n)

    return NodeProblem(n=n, c=c, objective=objective,
                       objective_gradient=objective_gradient,
                       constraint=constraint, constraint_jacobian=constraint_jacobian,
                       lagrangian_hessian=lagrangian_hessian, gn_hessian=gn_hessian)


def split_boundaries(l: int, L: int, N: int) -> Tuple[int, ...]:
    """Global state indices delimiting the sub-windows; interior windows get
    floor(L/N) steps and the last window absorbs the remainder."""
    if not (2 <= N <= L):
        raise LayoutError(f"need 2 <= N <= L, got N={N}, L={L}")
    if l < L:
        raise LayoutError(f"anchor l={l} precedes horizon length L={L}")
    t = L // N
    if t < 1:
        raise LayoutError("sub-windows must contain at least one step")
    base = l - L
    bounds = [base + i * t for i in range(N)]
    bounds.append(l)
    return tuple(bounds)


def build_split_problem(traj: Trajectory, l: int, L: int, N: int, params: RobotParams,
                        prior: Array, rho: float) -> Tuple[DistributedProblem, SplitLayout]:
    """Time-splitting decomposition of the horizon MHE into N coupled nodes."""
    bounds = split_boundaries(l, L, N)
    if traj.states.shape[0] < l + 1:
        raise LayoutError("trajectory shorter than the anchor index")
    P_inv = params.P_inv
    nodes: List[NodeProblem] = []
    dims = []
    for i in range(N):
        steps = bounds[i + 1] - bounds[i]
        node = _make_window(traj, params, bounds[i], steps,
                            measure_last=(i == N - 1),
                            arrival=(prior, P_inv) if i == 0 else None)
        nodes.append(node)
        dims.append((node.n, node.c))

    m = 3 * (N - 1)
    blocks = []
    for i, node in enumerate(nodes):
        A = np.zeros((m, node.n))
        if i < N - 1:  # +I on this window's terminal boundary state
            A[3 * i:3 * i + 3, node.n - 3:] = np.eye(3)
        if i > 0:      # -I on this window's initial boundary state
            A[3 * (i - 1):3 * (i - 1) + 3, :3] = -np.eye(3)
        blocks.append(A)
    coupling = CouplingSpec(blocks=blocks, rhs=np.zeros(m))
    layout = SplitLayout(L=L, N=N, base=l - L, boundaries=bounds, dims=tuple(dims))
    return DistributedProblem(nodes=nodes, coupling=coupling, rho=rho), layout


def build_unsplit_problem(traj: Trajectory, l: int, L: int, params: RobotParams,
                          prior: Array) -> NodeProblem:
    """The same horizon as a single node with no duplicated states."""
    if l < L:
        raise LayoutError(f"anchor l={l} precedes horizon length L={L}")
    return _make_window(traj, params, l - L, L, measure_last=True,
                        arrival=(prior, params.P_inv))


def stack_states(layout: SplitLayout, states: Array) -> List[Array]:
    """Map horizon states (rows base..base+L) into per-window stacked vectors,
    duplicating the boundary states."""
    out = []
    for i in range(layout.N):
        s0, s1 = layout.boundaries[i], layout.boundaries[i + 1]
        out.append(states[s0 - layout.base:s1 - layout.base + 1].ravel().copy())
    return out


def unstack_states(layout: SplitLayout, blocks: List[Array]) -> Array:
    """Inverse of stack_states; boundary duplicates are taken from the later
    window (they agree at any coupling-feasible point)."""
    states = np.zeros((layout.L + 1, 3))
    for i in range(layout.N):
        s0, s1 = layout.boundaries[i] - layout.base, layout.boundaries[i + 1] - layout.base
        states[s0:s1 + 1] = blocks[i].reshape(-1, 3)
    return states


@dataclass(frozen=True)
class BenchmarkInstance:
    problem: DistributedProblem
    layout: SplitLayout
    trajectory: Trajectory
    prior: Array
    initial_guess: List[Array]   # per-window stacked (phi*, psi*, 0)
    unsplit: NodeProblem


def benchmark_instance(seed: int, L: int = 25, N: int = 4,
                       params: RobotParams = RobotParams(),
                       rho: float = 25.0) -> BenchmarkInstance:
    """Fully seeded L-step MHE instance at anchor l = L."""
    controls = default_controls(L)
    traj = simulate_truth(np.array([0.1, 0.1, 0.0]), controls, params, seed)
    rng = np.random.default_rng(seed + 1)
    prior = traj.states[0] + np.linalg.cholesky(params.P) @ rng.standard_normal(3)
    problem, layout = build_split_problem(traj, L, L, N, params, prior, rho)
    guess_states = traj.states[: L + 1].copy()
    guess_states[:, 2] = 0.0
    return BenchmarkInstance(problem=problem, layout=layout, trajectory=traj,
                             prior=prior,
                             initial_guess=stack_states(layout, guess_states),
                             unsplit=build_unsplit_problem(traj, L, L, params, prior))

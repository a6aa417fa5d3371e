"""Self-contained property suites behind the ``verify`` CLI command.

Each suite returns (name, passed, detail); the CLI prints one line per
suite and exits nonzero on the first failure.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from . import mhe
from .coordinator import assemble_blocks, solve_closed_form, solve_kkt_oracle
from .local_solver import LocalSolveConfig, centralized_solve, solve_local
from .problem import check_derivatives
from .runtime import RunConfig, Variant, run, uplink_cost
from .sensitivity import DiffPack, adjoint_jacobian_update, bfgs_update, is_trigger


def random_spd(rng, n, cond=100.0):
    """Random SPD matrix with the given condition number."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.logspace(0.0, np.log10(cond), n)
    return (Q * eigs) @ Q.T


def random_coordination_instance(rng):
    """One well-conditioned coupled-QP instance with b != 0.

    The coupling row count m is capped by the free dimension sum(n_i - c_i)
    so the Schur complement is nonsingular (LICQ holds almost surely).
    """
    N = int(rng.integers(1, 6))
    dims = []
    for _ in range(N):
        n = int(rng.integers(2, 9))
        c = int(rng.integers(0, min(3, n - 1) + 1))
        dims.append((n, c))
    slack = sum(n - c for n, c in dims)
    m = int(rng.integers(1, min(4, slack) + 1))
    H, C, A, x, v = [], [], [], [], []
    for n, c in dims:
        H.append(random_spd(rng, n, cond=10.0 ** rng.uniform(0.0, 3.0)))
        C.append(rng.standard_normal((c, n)))
        A.append(rng.standard_normal((m, n)))
        x.append(rng.standard_normal(n))
        v.append(rng.standard_normal(n))
    b = rng.standard_normal(m) + 0.5
    return H, C, A, x, v, b


def _rel_err(a, b):
    a = np.concatenate([np.atleast_1d(ai).ravel() for ai in a]) if isinstance(a, list) else a
    b = np.concatenate([np.atleast_1d(bi).ravel() for bi in b]) if isinstance(b, list) else b
    return np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b)))


def suite_oracle_equivalence(n_instances=100, seed=1234, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        H, C, A, x, v, b = random_coordination_instance(rng)
        blocks = [assemble_blocks(Hi, Ci, Ai) for Hi, Ci, Ai in zip(H, C, A)]
        cf = solve_closed_form(blocks, x, v, b)
        kk = solve_kkt_oracle(H, C, A, x, v, b)
        worst = max(worst,
                    _rel_err(cf.lam, kk.lam),
                    _rel_err(cf.mu_tilde, kk.mu_tilde) if any(c.shape[0] for c in C) else 0.0,
                    _rel_err(cf.delta_x, kk.delta_x))
    return "oracle-equivalence", worst <= tol, f"worst relative error {worst:.3e}"


def suite_quasi_newton(n_updates=1000, seed=99, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst_secant = worst_sym = 0.0
    min_eig = np.inf
    for _ in range(n_updates):
        n = int(rng.integers(2, 9))
        H = random_spd(rng, n, cond=10.0 ** rng.uniform(0, 2))
        W = random_spd(rng, n, cond=10.0 ** rng.uniform(0, 2))
        S = rng.standard_normal(n)
        d = W @ S  # guarantees positive curvature
        H_next, applied = bfgs_update(H, S, d, 1e-8)
        if not applied:
            return "quasi-newton", False, "curvature guard rejected a PD-curvature pair"
        worst_secant = max(worst_secant,
                           np.max(np.abs(H_next @ S - d)) / (1.0 + np.max(np.abs(d))))
        worst_sym = max(worst_sym, np.max(np.abs(H_next - H_next.T)))
        min_eig = min(min_eig, np.min(np.linalg.eigvalsh(H_next)))

    worst_adj = 0.0
    for _ in range(n_updates):
        n = int(rng.integers(2, 9))
        c = int(rng.integers(1, 4))
        M = rng.standard_normal((c, n))
        C0 = rng.standard_normal((c, n))
        S = rng.standard_normal(n)
        sigma = rng.standard_normal(c)
        diffs = DiffPack(S=S, d=np.zeros(n), z=M @ S, sigma=sigma, gamma=M.T @ sigma)
        C_next, applied = adjoint_jacobian_update(C0, diffs, 1e-12)
        if not applied:
            continue
        worst_adj = max(worst_adj,
                        np.max(np.abs(C_next @ S - M @ S)) / (1.0 + np.max(np.abs(M @ S))),
                        np.max(np.abs(C_next.T @ sigma - M.T @ sigma))
                        / (1.0 + np.max(np.abs(M.T @ sigma))))
    ok = worst_secant <= tol and worst_sym <= 1e-12 and min_eig > 0 and worst_adj <= tol
    return ("quasi-newton", ok,
            f"secant {worst_secant:.2e}, sym {worst_sym:.2e}, "
            f"min-eig {min_eig:.2e}, adjoint {worst_adj:.2e}")


def suite_trigger():
    got = {k for k in range(1, 10**4 + 1) if is_trigger(k)}
    expected = {3, 9, 27, 81, 243, 729, 2187, 6561}
    return "trigger-schedule", got == expected, f"trigger set {sorted(got)}"


def suite_accounting():
    inst = mhe.benchmark_instance(seed=7, L=25, N=4)
    dims = inst.layout.dims
    full = uplink_cost(Variant.GAUSS_NEWTON, dims)
    compact = uplink_cost(Variant.ADJOINT_BFGS, dims)
    expected_full = sum(2 * n + n * n + c * n for n, c in dims)
    expected_compact = sum(2 * n + 3 * c for n, c in dims)
    ratio = compact / full
    cfg = RunConfig(variant=Variant.ADJOINT_BFGS, y0=inst.initial_guess, max_iters=3)
    trace = run(inst.problem, cfg)
    logged_ok = all(rec.uplink_scalars == compact for rec in trace)
    ok = (full == expected_full and compact == expected_compact
          and ratio < 0.25 and logged_ok)
    return "accounting", ok, f"full {full}, compact {compact}, ratio {ratio:.4f}"


def suite_split_unsplit(seed=3, L=12, N=3, tol=1e-8):
    params = mhe.RobotParams()
    inst = mhe.benchmark_instance(seed=seed, L=L, N=N, params=params)
    cfg = LocalSolveConfig(kkt_tol=1e-10, max_newton_steps=100)
    x_split, _, _ = centralized_solve(inst.problem, np.concatenate(inst.initial_guess), cfg)
    offsets = np.concatenate([[0], np.cumsum([n for n, _ in inst.layout.dims])]).astype(int)
    split_blocks = [x_split[offsets[i]:offsets[i + 1]] for i in range(N)]
    split_states = mhe.unstack_states(inst.layout, split_blocks)

    guess = inst.trajectory.states[:L + 1].copy()
    guess[:, 2] = 0.0
    sol = solve_local(inst.unsplit, np.zeros(0), guess.ravel(),
                      np.zeros((0, inst.unsplit.n)), rho=1e-12, cfg=cfg)
    unsplit_states = sol.x.reshape(L + 1, 3)
    err = float(np.max(np.abs(split_states - unsplit_states)))
    return "split-unsplit", err <= tol, f"max state deviation {err:.3e}"


def suite_derivatives(seed=17, points=5, tol=1e-4):
    inst = mhe.benchmark_instance(seed=seed, L=12, N=3)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for node, guess in zip(inst.problem.nodes, inst.initial_guess):
        for _ in range(points):
            pt = guess + 0.1 * rng.standard_normal(node.n)
            rep = check_derivatives(node, pt, tol)
            worst = max(worst, rep["max_gradient_error"], rep["max_jacobian_error"])
            if not rep["pass"]:
                return "derivatives", False, f"finite-difference mismatch {worst:.3e}"
    return "derivatives", True, f"worst finite-difference error {worst:.3e}"


def run_all() -> List[Tuple[str, bool, str]]:
    return [
        suite_oracle_equivalence(),
        suite_quasi_newton(),
        suite_trigger(),
        suite_accounting(),
        suite_split_unsplit(),
        suite_derivatives(),
    ]

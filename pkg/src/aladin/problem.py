"""Distributed problem class: per-node objectives, equality constraints,
affine coupling, and the derivative-oracle interface the solvers consume.

A problem is a list of nodes, each owning smooth oracles for its objective
f_i and equality constraints g_i, coupled through sum_i A_i x_i = b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OracleError, ShapeError

Array = np.ndarray


@dataclass(frozen=True)
class NodeProblem:
    """One node's smooth optimization data.

    Oracles must be pure and callable concurrently on distinct inputs.
    ``lagrangian_hessian`` maps (x, mu) to the exact Hessian of
    f(x) + mu^T g(x); ``gn_hessian`` is a PSD surrogate for least-squares
    objectives. Either may be absent when a caller does not need it.
    """

    n: int
    c: int
    objective: Callable[[Array], float]
    objective_gradient: Callable[[Array], Array]
    constraint: Optional[Callable[[Array], Array]] = None
    constraint_jacobian: Optional[Callable[[Array], Array]] = None
    lagrangian_hessian: Optional[Callable[[Array, Array], Array]] = None
    gn_hessian: Optional[Callable[[Array], Array]] = None

    def __post_init__(self):
        if self.n <= 0:
            raise ShapeError(f"node dimension must be positive, got {self.n}")
        if self.c < 0:
            raise ShapeError(f"constraint count must be >= 0, got {self.c}")
        if self.c > 0 and (self.constraint is None or self.constraint_jacobian is None):
            raise ShapeError("c > 0 requires constraint and constraint_jacobian oracles")

    def eval_constraint(self, x: Array) -> Array:
        if self.c == 0:
            return np.zeros(0)
        return np.asarray(self.constraint(x), dtype=float)

    def eval_constraint_jacobian(self, x: Array) -> Array:
        if self.c == 0:
            return np.zeros((0, self.n))
        return np.asarray(self.constraint_jacobian(x), dtype=float)


@dataclass(frozen=True)
class CouplingSpec:
    """Affine coupling sum_i A_i x_i = b across N nodes."""

    blocks: Sequence[Array]
    rhs: Array
    m: int = field(init=False)

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ShapeError("coupling needs at least one block")
        rhs = np.asarray(self.rhs, dtype=float)
        m = rhs.shape[0]
        for i, A in enumerate(self.blocks):
            if A.ndim != 2 or A.shape[0] != m:
                raise ShapeError(f"coupling block {i} has shape {A.shape}, expected {m} rows")
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class DistributedProblem:
    """N coupled nodes plus the augmented-Lagrangian penalty rho."""

    nodes: Sequence[NodeProblem]
    coupling: CouplingSpec
    rho: float

    def __post_init__(self):
        if len(self.nodes) != len(self.coupling.blocks):
            raise ShapeError(
                f"{len(self.nodes)} nodes but {len(self.coupling.blocks)} coupling blocks"
            )
        for i, (node, A) in enumerate(zip(self.nodes, self.coupling.blocks)):
            if A.shape[1] != node.n:
                raise ShapeError(
                    f"coupling block {i} has {A.shape[1]} columns, node has dimension {node.n}"
                )
        if self.rho <= 0:
            raise ShapeError(f"rho must be positive, got {self.rho}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def _central_diff_gradient(fun, x, h):
    n = x.shape[0]
    g = np.zeros(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def _central_diff_jacobian(fun, x, h, out_dim):
    n = x.shape[0]
    J = np.zeros((out_dim, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * h)
    return J


def check_derivatives(node: NodeProblem, point: Array, rel_tol: float) -> dict:
    """Compare analytic gradient/Jacobian oracles against central differences.

    Step size is 1e-6 * (1 + |point|_inf). Returns a report dict with the
    worst relative errors and an overall pass flag.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (node.n,):
        raise ShapeError(f"point has shape {point.shape}, expected ({node.n},)")
    if rel_tol <= 0:
        raise ShapeError("rel_tol must be positive")

    h = 1e-6 * (1.0 + np.max(np.abs(point)))

    grad = np.asarray(node.objective_gradient(point), dtype=float)
    if not np.all(np.isfinite(grad)):
        raise OracleError(f"objective_gradient returned non-finite output at {point}")
    fd_grad = _central_diff_gradient(node.objective, point, h)
    if not np.all(np.isfinite(fd_grad)):
        raise OracleError(f"objective returned non-finite output near {point}")
    scale_g = 1.0 + np.max(np.abs(fd_grad))
    max_gradient_error = float(np.max(np.abs(grad - fd_grad)) / scale_g)

    max_jacobian_error = 0.0
    if node.c > 0:
        J = node.eval_constraint_jacobian(point)
        if not np.all(np.isfinite(J)):
            raise OracleError(f"constraint_jacobian returned non-finite output at {point}")
        fd_J = _central_diff_jacobian(node.eval_constraint, point, h, node.c)
        if not np.all(np.isfinite(fd_J)):
            raise OracleError(f"constraint returned non-finite output near {point}")
        scale_j = 1.0 + np.max(np.abs(fd_J))
        max_jacobian_error = float(np.max(np.abs(J - fd_J)) / scale_j)

    return {
        "max_gradient_error": max_gradient_error,
        "max_jacobian_error": max_jacobian_error,
        "pass": max_gradient_error <= rel_tol and max_jacobian_error <= rel_tol,
    }


def coupling_residual(problem: DistributedProblem, x: Sequence[Array]) -> Array:
    """sum_i A_i x_i - b."""
    if len(x) != problem.n_nodes:
        raise ShapeError(f"expected {problem.n_nodes} primal blocks, got {len(x)}")
    res = -problem.coupling.rhs.copy()
    for A, xi in zip(problem.coupling.blocks, x):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (A.shape[1],):
            raise ShapeError(f"primal block has shape {xi.shape}, expected ({A.shape[1]},)")
        res += A @ xi
    return res


def quadratic_node(Q: Array, c: Array, C: Optional[Array] = None, d: Optional[Array] = None) -> NodeProblem:
    """Node with f(x) = 0.5 x^T Q x + c^T x and affine g(x) = C x + d."""
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if Q.shape != (n, n):
        raise ShapeError(f"Q has shape {Q.shape}, expected ({n}, {n})")
    Qs = 0.5 * (Q + Q.T)
    if C is None:
        C_, d_, nc = np.zeros((0, n)), np.zeros(0), 0
    else:
        C_ = np.asarray(C, dtype=float)
        d_ = np.zeros(C_.shape[0]) if d is None else np.asarray(d, dtype=float)
        nc = C_.shape[0]
        if C_.shape[1] != n or d_.shape != (nc,):
            raise ShapeError("constraint data inconsistent with node dimension")
    return NodeProblem(
        n=n,
        c=nc,
        objective=lambda x: float(0.5 * x @ Qs @ x + c @ x),
        objective_gradient=lambda x: Qs @ x + c,
        constraint=(lambda x: C_ @ x + d_) if nc else None,
        constraint_jacobian=(lambda x: C_) if nc else None,
        lagrangian_hessian=lambda x, mu: Qs,
        gn_hessian=lambda x: Qs,
    )


def load_problem_json(source) -> DistributedProblem:
    """Build a DistributedProblem from the quadratic/affine JSON config.

    ``source`` is a path, file object, or already-parsed dict. Schema:
    {"nodes": [{"Q": [[..]], "c": [..], "C": [[..]], "d": [..]}, ...],
     "coupling": {"A": [[[..]], ...], "b": [..]}, "rho": 25.0}
    """
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        with open(source) as fh:
            cfg = json.load(fh)

    nodes = []
    for spec in cfg["nodes"]:
        C = np.asarray(spec["C"], dtype=float) if "C" in spec else None
        d = np.asarray(spec["d"], dtype=float) if "d" in spec else None
        nodes.append(quadratic_node(np.asarray(spec["Q"], dtype=float),
                                    np.asarray(spec["c"], dtype=float), C, d))
    coupling = CouplingSpec(
        blocks=[np.asarray(A, dtype=float) for A in cfg["coupling"]["A"]],
        rhs=np.asarray(cfg["coupling"]["b"], dtype=float),
    )
    return DistributedProblem(nodes=nodes, coupling=coupling, rho=float(cfg.get("rho", 25.0)))

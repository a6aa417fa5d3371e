"""Iteration driver for the four algorithm variants over a simulated
coordinator-worker topology.

Workers solve their local subproblems concurrently between barriers; the
coordinator owns all sensitivity state and performs the coordination solve
single-threaded. Messages are value-passing and reductions run in fixed
node order, so a run is deterministic given its configuration.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .coordinator import assemble_blocks, factorize_schur, solve_closed_form
from .errors import DomainError, ShapeError, SolveStalled
from .local_solver import LocalSolution, LocalSolveConfig, solve_local
from .problem import DistributedProblem
from .sensitivity import (BFGS_GUARD_EPS, DiffPack, SensitivityState,
                          bfgs_update, is_trigger, make_diffs)

Array = np.ndarray


class Variant(Enum):
    GAUSS_NEWTON = "gn"
    ADJOINT_BFGS = "abfgs"
    RT_GAUSS_NEWTON = "rt-gn"
    RT_ADJOINT_BFGS = "rt-abfgs"

    @property
    def is_rt(self) -> bool:
        return self in (Variant.RT_GAUSS_NEWTON, Variant.RT_ADJOINT_BFGS)

    @property
    def is_bfgs(self) -> bool:
        return self in (Variant.ADJOINT_BFGS, Variant.RT_ADJOINT_BFGS)


@dataclass
class NodeState:
    """Per-node iterate bundle plus previous-iterate copies for differencing."""

    x: Array
    y: Array
    mu: Array
    v: Array
    g_val: Array
    prev: Optional["NodeState"] = None

    def snapshot(self) -> "NodeState":
        return NodeState(x=self.x.copy(), y=self.y.copy(), mu=self.mu.copy(),
                         v=self.v.copy(), g_val=self.g_val.copy())


@dataclass(frozen=True)
class UplinkMessage:
    """One node's per-iteration transmission, with its scalar payload count.

    kind "full": (x, v, H, C) -> 2n + n^2 + c*n scalars.
    kind "compact": (S, d, z, sigma, gamma) -> 2n + 3c scalars.
    """

    kind: str
    x: Array
    v: Array
    H: Optional[Array] = None
    C: Optional[Array] = None
    diffs: Optional[DiffPack] = None
    init_jacobian: Optional[Array] = None  # one-time payload of the first iteration
    scalar_count: int = 0


@dataclass
class IterationRecord:
    k: int
    lam: Array
    err_to_ref: float
    coupling_res: float
    local_feas: float
    triggered: bool
    uplink_scalars: int
    coord_wall_ns: int
    contraction_ratio: Optional[float] = None
    local_warnings: int = 0
    snapshot: Optional[dict] = None  # instrumentation: copies of H/C/G/Q/R/Schur


@dataclass
class RunConfig:
    variant: Variant
    y0: Sequence[Array]
    max_iters: int = 50
    rho: float = 25.0
    lambda0: Optional[Array] = None
    seed: int = 0
    local_cfg: LocalSolveConfig = field(default_factory=lambda: LocalSolveConfig(kkt_tol=1e-10))
    stop_tol: float = 0.0
    accumulate_diffs: bool = False
    instrument: bool = False

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "max_iters": self.max_iters,
            "rho": self.rho,
            "lambda0": None if self.lambda0 is None else np.asarray(self.lambda0).tolist(),
            "seed": self.seed,
            "stop_tol": self.stop_tol,
            "accumulate_diffs": self.accumulate_diffs,
            "local_cfg": {
                "kkt_tol": self.local_cfg.kkt_tol,
                "max_newton_steps": self.local_cfg.max_newton_steps,
                "regularization_floor": self.local_cfg.regularization_floor,
                "backtracking_factor": self.local_cfg.backtracking_factor,
                "min_step": self.local_cfg.min_step,
            },
        }


def uplink_cost(variant: Variant, dims: Sequence) -> int:
    """Per-iteration uplink scalars for a variant over node dimensions (n, c)."""
    if not dims:
        raise ShapeError("dims must be non-empty")
    if variant.is_bfgs:
        return int(sum(2 * n + 3 * c for n, c in dims))
    return int(sum(2 * n + n * n + c * n for n, c in dims))


def _worker_count(n_nodes: int) -> int:
    cap = os.environ.get("ALADIN_THREADS")
    if cap:
        return max(1, min(n_nodes, int(cap)))
    return n_nodes


def run(problem: DistributedProblem, cfg: RunConfig,
        reference: Optional[Sequence[Array]] = None) -> List[IterationRecord]:
    """Execute one full ALADIN run and return the per-iteration trace."""
    nodes = problem.nodes
    A_blocks = [np.asarray(A, float) for A in problem.coupling.blocks]
    b = problem.coupling.rhs
    N = len(nodes)
    variant = cfg.variant
    rho = cfg.rho
    lam = np.zeros(problem.coupling.m) if cfg.lambda0 is None else np.asarray(cfg.lambda0, float).copy()

    states: List[NodeState] = []
    for node, y0 in zip(nodes, cfg.y0):
        x0 = np.asarray(y0, float).copy()
        states.append(NodeState(
            x=x0, y=x0.copy(), mu=np.zeros(node.c),
            v=np.asarray(node.objective_gradient(x0), float),
            g_val=node.eval_constraint(x0)))

    # Sensitivity state is created at the first iteration, from the first
    # uplink: BFGS variants set H = I and take the exact Jacobian at x^[1];
    # Gauss-Newton variants take the transmitted (H, C) at x^[1]. Quasi-Newton
    # updates begin at k = 2.
    sens: List[SensitivityState] = []
    blocks = None
    schur = None

    trace: List[IterationRecord] = []
    prev_err = None
    with ThreadPoolExecutor(max_workers=_worker_count(N)) as pool:
        for k in range(1, cfg.max_iters + 1):
            # ---- uplink half-iteration: parallel local solves + messages ----
            def node_step(args):
                i, node, st = args
                try:
                    sol = solve_local(node, lam, st.y, A_blocks[i], rho,
                                      warm_start=(st.x, st.mu), cfg=cfg.local_cfg)
                except SolveStalled as exc:
                    # keep going with the best iterate; logged as a warning
                    sol = exc.best if exc.best is not None else LocalSolution(
                        x=st.x.copy(), mu=st.mu.copy(), kkt_residual=float("inf"),
                        newton_steps=0, converged=False)
                prev = st.snapshot()
                new = NodeState(x=sol.x, y=st.y, mu=sol.mu,
                                v=np.asarray(node.objective_gradient(sol.x), float),
                                g_val=node.eval_constraint(sol.x), prev=prev)
                jac = node.eval_constraint_jacobian(sol.x)
                if variant.is_bfgs:
                    msg = UplinkMessage(
                        kind="compact", x=new.x, v=new.v,
                        diffs=make_diffs(prev, new, jac),
                        init_jacobian=jac if k == 1 else None,
                        scalar_count=2 * node.n + 3 * node.c)
                else:
                    msg = UplinkMessage(
                        kind="full", x=new.x, v=new.v,
                        H=np.asarray(node.gn_hessian(new.x), float), C=jac,
                        scalar_count=2 * node.n + node.n * node.n + node.c * node.n)
                return new, msg, sol.converged

            results = list(pool.map(node_step, [(i, nodes[i], states[i]) for i in range(N)]))
            states = [r[0] for r in results]
            messages = [r[1] for r in results]
            warnings = sum(0 if r[2] else 1 for r in results)

            # ---- coordinator: sensitivity refresh policy ----
            triggered = True if not variant.is_rt else is_trigger(k)
            if k == 1:
                # First-iteration initialization from the first uplink. The
                # BFGS family starts from H = I (immediately refined by the
                # first difference pair) and the exact Jacobian at x^[1];
                # the Gauss-Newton family adopts the transmitted (H, C).
                for node, msg in zip(nodes, messages):
                    if variant.is_bfgs:
                        H1, _ = bfgs_update(np.eye(node.n), msg.diffs.S,
                                            msg.diffs.d, BFGS_GUARD_EPS)
                        sens.append(SensitivityState(
                            H=H1, C=msg.init_jacobian.copy(),
                            last_update_iter=1, accumulate=cfg.accumulate_diffs))
                    else:
                        sens.append(SensitivityState(H=msg.H, C=msg.C,
                                                     last_update_iter=1))
                refresh_blocks = True
            elif variant.is_bfgs:
                for s, msg in zip(sens, messages):
                    s.push(msg.diffs)
                if triggered:
                    for s in sens:
                        s.flush(k)
                refresh_blocks = triggered
            else:
                if triggered:
                    for s, msg in zip(sens, messages):
                        s.H, s.C = msg.H, msg.C
                        s.last_update_iter = k
                refresh_blocks = triggered

            # ---- coordination step (timed: QP construction + solve) ----
            xs = [msg.x for msg in messages]
            vs = [msg.v for msg in messages]
            t0 = time.perf_counter_ns()
            if refresh_blocks:
                blocks = [assemble_blocks(s.H, s.C, A) for s, A in zip(sens, A_blocks)]
                schur = factorize_schur(blocks)
            coord = solve_closed_form(blocks, xs, vs, b, reuse_schur=schur)
            coord_ns = time.perf_counter_ns() - t0

            lam = coord.lam
            for st, y_new in zip(states, coord.y_next):
                st.y = y_new

            # ---- logging ----
            if reference is not None:
                err = max(float(np.max(np.abs(st.y - ref), initial=0.0))
                          for st, ref in zip(states, reference))
            else:
                err = float("nan")
            coupling = -b.copy()
            for A, msg in zip(A_blocks, messages):
                coupling += A @ msg.x
            rec = IterationRecord(
                k=k, lam=lam.copy(), err_to_ref=err,
                coupling_res=float(np.max(np.abs(coupling), initial=0.0)),
                local_feas=max(float(np.max(np.abs(st.g_val), initial=0.0)) for st in states),
                triggered=triggered,
                uplink_scalars=sum(msg.scalar_count for msg in messages),
                coord_wall_ns=int(coord_ns),
                contraction_ratio=(err / prev_err) if (prev_err is not None and np.isfinite(err)
                                                       and prev_err > 0.0) else None,
                local_warnings=warnings)
            if cfg.instrument:
                rec.snapshot = {
                    "H": [s.H.copy() for s in sens],
                    "C": [s.C.copy() for s in sens],
                    "G": [blk.G.copy() for blk in blocks],
                    "Q": [blk.Q.copy() for blk in blocks],
                    "R": [blk.R.copy() for blk in blocks],
                    "schur": (schur[0], schur[1][0].copy()),
                }
            trace.append(rec)
            prev_err = err if np.isfinite(err) else prev_err

            if cfg.stop_tol > 0.0:
                metric = err if reference is not None else rec.coupling_res
                if np.isfinite(metric) and metric <= cfg.stop_tol:
                    break
    return trace


def empirical_contraction(trace: Sequence[IterationRecord], tail: int) -> float:
    """Geometric-mean error ratio over the last ``tail`` iterations before the
    error hits its numerical floor (records <= 1e-13 are excluded)."""
    errs = []
    for rec in trace:
        if not np.isfinite(rec.err_to_ref):
            continue
        if rec.err_to_ref <= 1e-13:
            break
        errs.append(rec.err_to_ref)
    if len(errs) < tail + 1:
        raise DomainError(f"need {tail + 1} pre-floor records, have {len(errs)}")
    window = errs[-(tail + 1):]
    ratios = np.array(window[1:]) / np.array(window[:-1])
    return float(np.exp(np.mean(np.log(ratios))))


def write_trace(trace: Sequence[IterationRecord], cfg: RunConfig, csv_path) -> None:
    """CSV trace plus a JSON sidecar holding the resolved config and the
    lambda history."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "err_to_ref", "coupling_res", "local_feas",
                         "triggered", "uplink_scalars", "coord_wall_ns"])
        for rec in trace:
            writer.writerow([rec.k, repr(rec.err_to_ref), repr(rec.coupling_res),
                             repr(rec.local_feas), int(rec.triggered),
                             rec.uplink_scalars, rec.coord_wall_ns])
    sidecar = {
        "config": cfg.to_dict(),
        "lambda_history": [rec.lam.tolist() for rec in trace],
    }
    side_path = str(csv_path)
    side_path = side_path[:-4] + ".json" if side_path.endswith(".csv") else side_path + ".json"
    with open(side_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)

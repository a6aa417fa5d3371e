"""Coordinator-side recovery of local curvature and constraint geometry.

The coordinator never sees full Hessians or Jacobians from the compact
uplink; it reconstructs them from per-iteration difference vectors via a
BFGS rank-two update and an adjoint Broyden rank-one Jacobian update, on a
power-of-three event-trigger schedule for the real-time variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import DomainError, NumericalError, ShapeError

Array = np.ndarray

BFGS_GUARD_EPS = 1e-8
ADJOINT_GUARD_EPS = 1e-12


@dataclass(frozen=True)
class DiffPack:
    """Difference vectors one node uploads per iteration.

    S = x+ - x, d = v+ - v (objective-gradient difference), z = g(x+) - g(x),
    sigma = mu+ - mu, gamma = jac(x+)^T sigma (adjoint direction).
    """

    S: Array
    d: Array
    z: Array
    sigma: Array
    gamma: Array

    def __post_init__(self):
        n = self.S.shape[0]
        c = self.z.shape[0]
        if self.d.shape != (n,) or self.gamma.shape != (n,) or self.sigma.shape != (c,):
            raise ShapeError("DiffPack vector lengths inconsistent")


@dataclass
class SensitivityState:
    """Per-node curvature state owned by the coordinator."""

    H: Array
    C: Array
    last_update_iter: int = 0
    skipped_bfgs: int = 0
    skipped_adjoint: int = 0
    accumulate: bool = False  # fold diffs since the last trigger instead of latest-only
    pending: list = field(default_factory=list)

    def apply(self, diffs: DiffPack, k: int) -> Tuple[bool, bool]:
        """Apply both quasi-Newton updates from one DiffPack."""
        self.H, h_ok = bfgs_update(self.H, diffs.S, diffs.d, BFGS_GUARD_EPS)
        self.C, c_ok = adjoint_jacobian_update(self.C, diffs, ADJOINT_GUARD_EPS)
        if not h_ok:
            self.skipped_bfgs += 1
        if not c_ok:
            self.skipped_adjoint += 1
        self.last_update_iter = k
        return h_ok, c_ok

    def push(self, diffs: DiffPack) -> None:
        """Queue a DiffPack for a future trigger (real-time variants)."""
        if self.accumulate:
            self.pending.append(diffs)
        else:
            self.pending = [diffs]

    def flush(self, k: int) -> None:
        for diffs in self.pending:
            self.apply(diffs, k)
        self.pending = []


def make_diffs(prev, curr, jacobian_at_curr: Array) -> DiffPack:
    """Form the difference vectors between two consecutive node states.

    ``prev`` and ``curr`` expose x, v, g_val, mu (see runtime.NodeState).
    ``jacobian_at_curr`` is the exact constraint Jacobian at the new iterate,
    evaluated node-side (reverse-mode adjoint direction gamma = J^T sigma).
    """
    if prev.x.shape != curr.x.shape or prev.mu.shape != curr.mu.shape:
        raise ShapeError("state dimensions changed between iterations")
    sigma = curr.mu - prev.mu
    return DiffPack(
        S=curr.x - prev.x,
        d=curr.v - prev.v,
        z=curr.g_val - prev.g_val,
        sigma=sigma,
        gamma=jacobian_at_curr.T @ sigma,
    )


def bfgs_update(H: Array, S: Array, d: Array, guard_eps: float) -> Tuple[Array, bool]:
    """Rank-two BFGS update H+ = H - H S S^T H / (S^T H S) + d d^T / (S^T d).

    Skipped (H returned unchanged) when the curvature condition
    S^T d > guard_eps * ||S|| ||d|| fails, so the update never destroys
    positive definiteness.
    """
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(S)) and np.all(np.isfinite(d))):
        raise NumericalError("non-finite input to bfgs_update")
    sd = float(S @ d)
    if sd <= guard_eps * np.linalg.norm(S) * np.linalg.norm(d):
        return H, False
    HS = H @ S
    sHs = float(S @ HS)
    if sHs <= 0.0:
        return H, False
    H_next = H - np.outer(HS, HS) / sHs + np.outer(d, d) / sd
    H_next = 0.5 * (H_next + H_next.T)
    return H_next, True


def adjoint_jacobian_update(C: Array, diffs: DiffPack, guard_eps: float) -> Tuple[Array, bool]:
    """Adjoint Broyden (TR1) rank-one Jacobian update.

    C+ = C + (z - C S)(gamma^T - sigma^T C) / ((gamma^T - sigma^T C) S).
    Skipped when the scalar denominator is below guard_eps * (1 + ||S||),
    which happens exactly when C is already consistent with the new data.
    """
    if not (np.all(np.isfinite(C)) and np.all(np.isfinite(diffs.S))
            and np.all(np.isfinite(diffs.z)) and np.all(np.isfinite(diffs.sigma))
            and np.all(np.isfinite(diffs.gamma))):
        raise NumericalError("non-finite input to adjoint_jacobian_update")
    S, z, sigma, gamma = diffs.S, diffs.z, diffs.sigma, diffs.gamma
    row = gamma - C.T @ sigma  # (gamma^T - sigma^T C) as a column
    denom = float(row @ S)
    if abs(denom) <= guard_eps * (1.0 + np.linalg.norm(S)):
        return C, False
    return C + np.outer(z - C @ S, row) / denom, True


def is_trigger(k: int) -> bool:
    """True iff log_3(k) is a positive integer, i.e. k in {3, 9, 27, 81, ...}."""
    if k < 1:
        raise DomainError(f"iteration index must be >= 1, got {k}")
    if k < 3:
        return False
    while k % 3 == 0:
        k //= 3
    return k == 1

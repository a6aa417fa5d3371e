"""Coordination step: solve the coupled equality-constrained QP

    min  sum_i 0.5 dx_i^T H_i dx_i + v_i^T dx_i
    s.t. sum_i A_i (dx_i + x_i) = b   | lambda
         C_i dx_i = 0                 | mu_i

two ways: the block-elimination closed form (Schur complement in lambda)
and a direct dense saddle-point solve used as an oracle. All inverse
applications are factorization-backed; no explicit inverses are formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import CoordinationSingular, NotPositiveDefinite, RankDeficientConstraints

Array = np.ndarray


@dataclass(frozen=True)
class NodeBlocks:
    """Per-node auxiliary matrices G = A H^-1 A^T, Q = A H^-1 C^T, R = C H^-1 C^T."""

    G: Array
    Q: Array
    R: Array
    H_factor: tuple  # cho_factor of H
    R_factor: Optional[tuple]  # cho_factor of R, None when c = 0
    A: Array
    C: Array

    @property
    def c(self) -> int:
        return self.R.shape[0]

    def h_solve(self, rhs: Array) -> Array:
        return sla.cho_solve(self.H_factor, rhs)

    def r_solve(self, rhs: Array) -> Array:
        return sla.cho_solve(self.R_factor, rhs)


@dataclass(frozen=True)
class CoordinationResult:
    lam: Array
    mu_tilde: List[Array]
    delta_x: List[Array]
    y_next: List[Array]
    schur_factor: Optional[tuple] = None


def assemble_blocks(H: Array, C: Array, A: Array) -> NodeBlocks:
    """Build one node's (G, Q, R) via a cached Cholesky factorization of H."""
    try:
        H_factor = sla.cho_factor(H)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite(f"Hessian block is not positive definite: {exc}") from None
    HinvAT = sla.cho_solve(H_factor, A.T)
    G = A @ HinvAT
    c = C.shape[0]
    if c == 0:
        Q = np.zeros((A.shape[0], 0))
        R = np.zeros((0, 0))
        R_factor = None
    else:
        HinvCT = sla.cho_solve(H_factor, C.T)
        Q = A @ HinvCT
        R = C @ HinvCT
        R = 0.5 * (R + R.T)
        if np.linalg.matrix_rank(R, tol=1e-12 * max(1.0, np.linalg.norm(R, 2))) < c:
            raise RankDeficientConstraints(
                "R = C H^-1 C^T is numerically singular; constraint rows are dependent"
            )
        try:
            R_factor = sla.cho_factor(R)
        except sla.LinAlgError:
            raise RankDeficientConstraints("R = C H^-1 C^T is not positive definite") from None
    return NodeBlocks(G=G, Q=Q, R=R, H_factor=H_factor, R_factor=R_factor, A=A, C=C)


def schur_matrix(blocks: Sequence[NodeBlocks]) -> Array:
    """M = sum_i (G_i - Q_i R_i^-1 Q_i^T), accumulated in fixed node order."""
    m = blocks[0].G.shape[0]
    M = np.zeros((m, m))
    for blk in blocks:
        M += blk.G
        if blk.c:
            M -= blk.Q @ blk.r_solve(blk.Q.T)
    return 0.5 * (M + M.T)


def factorize_schur(blocks: Sequence[NodeBlocks]):
    """Factorize M, preferring Cholesky and falling back to a pivoted
    symmetric-indefinite factorization when quasi-Newton drift breaks SPD."""
    M = schur_matrix(blocks)
    try:
        return ("cho", sla.cho_factor(M))
    except sla.LinAlgError:
        pass
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(M)
    except sla.LinAlgError as exc:
        raise CoordinationSingular(f"Schur complement is singular: {exc}") from None
    if not np.all(np.isfinite(lu)):
        raise CoordinationSingular("Schur complement factorization is non-finite")
    cond = np.linalg.cond(M)
    if cond > 1e14:
        raise CoordinationSingular("Schur complement is numerically singular",
                                   cond_estimate=float(cond))
    return ("lu", (lu, piv))


def _schur_solve(factor, rhs: Array) -> Array:
    kind, fac = factor
    if kind == "cho":
        return sla.cho_solve(fac, rhs)
    return sla.lu_solve(fac, rhs)


def solve_closed_form(blocks: Sequence[NodeBlocks], x: Sequence[Array],
                      v: Sequence[Array], b: Array,
                      reuse_schur=None) -> CoordinationResult:
    """Closed-form coordination: lambda from the Schur system, then local
    mu_tilde and primal steps by back-substitution.

    q = sum (Q R^-1 C - A) H^-1 v,  p = sum A x + q - b,  lambda = M^-1 p,
    mu_tilde = -R^-1 (C H^-1 v + Q^T lambda),
    dx = -H^-1 (v + C^T mu_tilde + A^T lambda).

    Passing ``reuse_schur`` skips re-assembly and re-factorization of M
    (valid while every H_i, C_i is unchanged).
    """
    m = b.shape[0]
    p = -b.astype(float).copy()
    h_inv_v = []
    for blk, xi, vi in zip(blocks, x, v):
        Hv = blk.h_solve(vi)
        h_inv_v.append(Hv)
        p += blk.A @ xi - blk.A @ Hv
        if blk.c:
            p += blk.Q @ blk.r_solve(blk.C @ Hv)

    schur = reuse_schur if reuse_schur is not None else factorize_schur(blocks)
    lam = _schur_solve(schur, p)

    mu_tilde, delta_x, y_next = [], [], []
    for blk, xi, vi, Hv in zip(blocks, x, v, h_inv_v):
        if blk.c:
            mt = -blk.r_solve(blk.C @ Hv + blk.Q.T @ lam)
            dx = -blk.h_solve(vi + blk.C.T @ mt + blk.A.T @ lam)
        else:
            mt = np.zeros(0)
            dx = -blk.h_solve(vi + blk.A.T @ lam)
        mu_tilde.append(mt)
        delta_x.append(dx)
        y_next.append(xi + dx)
    return CoordinationResult(lam=lam, mu_tilde=mu_tilde, delta_x=delta_x,
                              y_next=y_next, schur_factor=schur)


def solve_kkt_oracle(H: Sequence[Array], C: Sequence[Array], A: Sequence[Array],
                     x: Sequence[Array], v: Sequence[Array], b: Array) -> CoordinationResult:
    """Reference solve of the coupled QP via one dense symmetric-indefinite
    KKT factorization. Canonical definition the closed form is checked against."""
    dims = [Hi.shape[0] for Hi in H]
    cons = [Ci.shape[0] for Ci in C]
    m = b.shape[0]
    n_total = int(sum(dims))
    c_total = int(sum(cons))
    size = n_total + m + c_total

    K = np.zeros((size, size))
    rhs = np.zeros(size)
    xoff = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    coff = n_total + m + np.concatenate([[0], np.cumsum(cons)]).astype(int)

    coupled = -b.astype(float).copy()
    for i, (Hi, Ci, Ai, xi, vi) in enumerate(zip(H, C, A, x, v)):
        sl = slice(xoff[i], xoff[i + 1])
        K[sl, sl] = Hi
        K[n_total:n_total + m, sl] = Ai
        K[sl, n_total:n_total + m] = Ai.T
        csl = slice(coff[i], coff[i + 1])
        K[csl, sl] = Ci
        K[sl, csl] = Ci.T
        rhs[sl] = -vi
        coupled += Ai @ xi
    rhs[n_total:n_total + m] = -coupled

    try:
        sol = sla.solve(K, rhs, assume_a="sym")
    except sla.LinAlgError as exc:
        raise CoordinationSingular(f"coupled-QP KKT matrix is singular: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise CoordinationSingular("coupled-QP KKT solve returned non-finite values")

    lam = sol[n_total:n_total + m]
    mu_tilde, delta_x, y_next = [], [], []
    for i, xi in enumerate(x):
        dx = sol[xoff[i]:xoff[i + 1]]
        mu_tilde.append(sol[coff[i]:coff[i + 1]])
        delta_x.append(dx)
        y_next.append(xi + dx)
    return CoordinationResult(lam=lam, mu_tilde=mu_tilde, delta_x=delta_x, y_next=y_next)

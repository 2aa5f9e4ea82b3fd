"""Sparse SPD solves and the damped fixed-point linearization step."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import ModelProblem, Operators
from .space import DiscreteFunction, FeSpace


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    relative_residual: float
    reused_factorization: bool = False


def solve_spd(matrix, rhs, tol: float = 1e-12, method: str = "pcg"):
    """Solve an SPD system to ||A x - b|| <= tol ||b||.

    ``pcg``: Jacobi-preconditioned conjugate gradients, iteration cap 10*n.
    ``direct``: sparse LU with iterative refinement behind the same contract.
    """
    if not (0 < tol <= 1e-6):
        raise SolverError("tolerance must lie in (0, 1e-6]")
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), LinearSolveReport(0, 0.0)

    if method == "direct":
        lu = spla.splu(sp.csc_matrix(matrix))
        x = lu.solve(rhs)
        for it in range(4):
            res = rhs - matrix @ x
            rel = np.linalg.norm(res) / bnorm
            if rel <= tol:
                return x, LinearSolveReport(it, rel)
            x = x + lu.solve(res)
        raise SolverError(f"direct solve stalled at relative residual {rel:.3e}")

    if method != "pcg":
        raise SolverError(f"unknown method {method!r}")

    diag = np.asarray(matrix.diagonal() if sp.issparse(matrix) else np.diag(matrix))
    if np.any(diag <= 0):
        raise SolverError("matrix is not SPD (non-positive diagonal)")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    max_iter = 10 * n
    it = 0
    while it < max_iter:
        it += 1
        Ap = matrix @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            true = rhs - matrix @ x
            rel = np.linalg.norm(true) / bnorm
            if rel <= tol:
                return x, LinearSolveReport(it, rel)
            r = true  # recurrence drifted: restart from the true residual
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not converge within {max_iter} iterations")


def zarantonello_step(problem: ModelProblem, space: FeSpace, u_prev: DiscreteFunction,
                      delta: float, operators: Optional[Operators] = None) -> DiscreteFunction:
    """One damped linearization step: solve <Phi, v> = <u, v> + delta (F - A u)(v).

    The system matrix is the inner-product matrix itself; passing ``operators``
    reuses its factorization across all steps on a fixed mesh.
    """
    if delta <= 0:
        raise SolverError("damping parameter must be positive")
    ops = operators or Operators(problem, space)
    update = ops.solve(ops.residual(u_prev))
    return space.function(u_prev.coefficients + delta * update)

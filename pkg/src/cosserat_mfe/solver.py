"""Saddle-point solvers: sparse direct (reference path) and MINRES with
a norm-equivalent block-diagonal preconditioner (robustness path).

The assembled system is [[M, -B^T], [B, 0]] (p, u) = (0, b). The MINRES
path negates the second block row to obtain the symmetric indefinite
form [[M, -B^T], [-B, 0]] (p, u) = (0, -b) and preconditions with
diag(P_p, P_u), P_p = M + (S_l ., S_l .) (the H_ell M inner product in
operator form) and P_u the L2 mass of the u-block, each applied by a
sparse factorization.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla


@dataclass
class SolveReport:
    method: str
    iterations: int
    final_relative_residual: float
    wall_time: float


def _full_system(mass, coupling):
    return sps.bmat([[mass, -coupling.T], [coupling, None]], format="csc")


def _residual(mass, coupling, z, rhs_u):
    n_p = mass.shape[0]
    K = _full_system(mass, coupling)
    b = np.concatenate([np.zeros(n_p), rhs_u])
    return np.linalg.norm(K @ z - b) / np.linalg.norm(b)


def solve_direct(mass, coupling, rhs_u, tol=1e-10):
    """Sparse LU solve of the full system; residual must meet tol."""
    t0 = time.perf_counter()
    n_p = mass.shape[0]
    K = _full_system(mass, coupling)
    b = np.concatenate([np.zeros(n_p), rhs_u])
    z = spla.splu(K).solve(b)
    res = _residual(mass, coupling, z, rhs_u)
    if not np.isfinite(res) or res > tol:
        raise RuntimeError(f"direct solve residual {res:.3e} exceeds {tol:g}")
    report = SolveReport("direct", 0, float(res), time.perf_counter() - t0)
    return z[:n_p], z[n_p:], report


def solve_minres(mass, coupling, rhs_u, p_precond, u_precond,
                 tol=1e-10, max_iter=500):
    """Preconditioned MINRES on the symmetrized system.

    p_precond, u_precond: SPD sparse matrices whose inverses form the
    block-diagonal preconditioner (factorized once).
    """
    t0 = time.perf_counter()
    n_p, n_u = mass.shape[0], coupling.shape[0]
    K = sps.bmat([[mass, -coupling.T], [-coupling, None]], format="csc")
    b = np.concatenate([np.zeros(n_p), -rhs_u])
    lu_p = spla.splu(p_precond.tocsc())
    lu_u = spla.splu(u_precond.tocsc())

    def apply_pc(v):
        out = np.empty_like(v)
        out[:n_p] = lu_p.solve(v[:n_p])
        out[n_p:] = lu_u.solve(v[n_p:])
        return out

    pc = spla.LinearOperator(K.shape, matvec=apply_pc)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    z, info = spla.minres(K, b, M=pc, rtol=tol, maxiter=max_iter,
                          callback=count)
    res = _residual(mass, coupling, z, rhs_u)
    report = SolveReport("minres", iters, float(res),
                         time.perf_counter() - t0)
    if info != 0:
        raise RuntimeError(
            f"MINRES did not converge in {max_iter} iterations "
            f"(residual {res:.3e})")
    return z[:n_p], z[n_p:], report

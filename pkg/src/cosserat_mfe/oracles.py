"""Independent cross-checks for the main code paths.

These deliberately avoid the kernels used by the library: derivatives
are approximated by central finite differences instead of symbolic
differentiation, and small linear systems are solved by dense LAPACK
factorizations instead of sparse LU.
"""

import numpy as np

from .cosserat_core import asym


def fd_divergence(field, x, step=1e-6):
    """Row-wise divergence of a matrix- or vector-valued field by central
    differences; x has shape (n, d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    parts = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        parts.append((np.asarray(field(x + e)) - np.asarray(field(x - e)))
                     / (2 * step))
    sample = parts[0]
    if sample.ndim == 2:  # vector field: scalar divergence
        return sum(parts[j][:, j] for j in range(d))
    return sum(parts[j][:, :, j] for j in range(d))


def fd_gradient(field, x, step=1e-6):
    """Gradient (..., d) of a scalar or vector field by central differences."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        cols.append((np.asarray(field(x + e)) - np.asarray(field(x - e)))
                    / (2 * step))
    return np.stack(cols, axis=-1)


def fd_strong_residual(exact, x, step=1e-6):
    """Finite-difference evaluation of the momentum balances.

    Returns (f_u, f_r) computed as (-div sigma, -div omega + S sigma)
    from the exact sigma and omega fields alone; the closed-form loads
    carried by the manufactured solution must match.
    """
    x = np.asarray(x, dtype=float)
    f_u = -fd_divergence(exact.sigma, x, step)
    sig = np.asarray(exact.sigma(x))
    s_sig = asym(sig)
    f_r = -fd_divergence(exact.omega, x, step)
    return f_u, f_r + s_sig


def dense_solve(mass, coupling, rhs_u):
    """Dense LAPACK solution of the saddle-point system; oracle for the
    sparse direct and iterative solvers on small problems."""
    M = np.asarray(mass.todense())
    B = np.asarray(coupling.todense())
    n_p, n_u = M.shape[0], B.shape[0]
    K = np.zeros((n_p + n_u, n_p + n_u))
    K[:n_p, :n_p] = M
    K[:n_p, n_p:] = -B.T
    K[n_p:, :n_p] = B
    b = np.concatenate([np.zeros(n_p), np.asarray(rhs_u)])
    z = np.linalg.solve(K, b)
    return z[:n_p], z[n_p:]


def kernel_coercivity(mass, coupling, norm):
    """Smallest Rayleigh quotient of the mass form over the discrete
    kernel of the coupling, measured in the given p-norm (dense)."""
    import scipy.linalg
    B = np.asarray(coupling.todense())
    _, s, vt = np.linalg.svd(B)
    tol = max(B.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
    null = vt[np.sum(s > tol):].T
    M = null.T @ np.asarray(mass.todense()) @ null
    N = null.T @ np.asarray(norm.todense()) @ null
    return float(scipy.linalg.eigh(M, N, eigvals_only=True)[0])


def random_spd_check(apply_fwd, apply_inv, shape, rng, n=100):
    """Maximum relative round-trip defect of a forward/inverse pair on
    random inputs, scaled by the intermediate magnitude."""
    worst = 0.0
    for _ in range(n):
        tau = rng.standard_normal(shape)
        mid = apply_inv(tau)
        back = apply_fwd(mid)
        scale = max(1.0, float(np.max(np.abs(mid))))
        worst = max(worst, float(np.max(np.abs(back - tau))) / scale)
    return worst

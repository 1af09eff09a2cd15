"""Quadrature rules on reference simplices.

Rules are built as collapsed Gauss-Jacobi tensor products (Duffy
transform), which gives positive weights and exactness for polynomials
up to the requested degree on the unit reference simplex
conv{0, e_1, ..., e_d}.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _gauss_jacobi(npts, alpha):
    # nodes/weights for int_0^1 (1-x)^alpha f(x) dx
    x, w = roots_jacobi(npts, alpha, 0.0)
    x = 0.5 * (x + 1.0)
    w = w / 2.0 ** (alpha + 1)
    return x, w


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Return (points, weights) exact for polynomials of the given degree.

    Points have shape (nq, dim), weights sum to the reference simplex
    measure (1/dim!).
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    npts = degree // 2 + 1
    if dim == 1:
        x, w = _gauss_jacobi(npts, 0)
        return x.reshape(-1, 1), w
    if dim == 2:
        # x = a(1-b), y = b with Jacobian (1-b)
        a, wa = _gauss_jacobi(npts, 0)
        b, wb = _gauss_jacobi(npts, 1)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([A * (1 - B), B], axis=-1).reshape(-1, 2)
        wts = np.outer(wa, wb).ravel()
        return pts, wts
    if dim == 3:
        # x = a(1-b)(1-c), y = b(1-c), z = c with Jacobian (1-b)(1-c)^2
        a, wa = _gauss_jacobi(npts, 0)
        b, wb = _gauss_jacobi(npts, 1)
        c, wc = _gauss_jacobi(npts, 2)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        pts = np.stack(
            [A * (1 - B) * (1 - C), B * (1 - C), C], axis=-1
        ).reshape(-1, 3)
        wts = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
        return pts, wts
    raise ValueError(f"unsupported dimension {dim}")

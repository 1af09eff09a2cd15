"""Manufactured exact solutions with closed-form derivatives and loads.

Displacement u and rotation r are prescribed symbolically; the stress
follows from the constitutive law sigma = A_sigma^{-1}(grad u + S* r)
and the couple stress from omega = ell^2 g with g = A_tilde^{-1} grad r.
All smooth quantities (sigma, g, their divergences, S sigma) are
differentiated with sympy and lambdified; the piecewise-linear length
field enters only through pointwise values and gradients, so degenerate
profiles are supported exactly:

    omega       = ell^2 g,            omega_tilde = ell * g,
    div omega   = ell^2 div g + 2 ell (g grad ell)   (rows),
    f_u = -div sigma,                 f_r = -div omega + S sigma.

Cases: "smooth" (trigonometric-polynomial, zero trace) and "divfree"
(curl potential, divergence-free u), in both 2D and 3D.
"""

import numpy as np
import sympy as sp


def _sym_asym_adjoint(r, dim):
    if dim == 2:
        return sp.Matrix([[0, -r], [r, 0]])
    return sp.Matrix([[0, -r[2], r[1]],
                      [r[2], 0, -r[0]],
                      [-r[1], r[0], 0]])


def _sym_asym(m, dim):
    if dim == 2:
        return m[1, 0] - m[0, 1]
    return sp.Matrix([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def _iso_inverse_sym(tau, mu, mu_c, lam, d):
    sym = (tau + tau.T) / 2
    skew = (tau - tau.T) / 2
    return 2 * mu * sym + 2 * mu_c * skew + lam * tau.trace() * sp.eye(d)


def _lambdify(expr, syms):
    """Vectorized closure points (npts, d) -> array of expr's shape."""
    if isinstance(expr, sp.Matrix):
        shape = expr.shape if expr.shape[1] > 1 else (expr.shape[0],)
        entries = list(expr)
    else:
        shape, entries = (), [expr]
    fns = [sp.lambdify(syms, e, "numpy") for e in entries]

    def closure(x):
        x = np.asarray(x, dtype=float)
        cols = [x[..., i] for i in range(len(syms))]
        vals = [np.broadcast_to(f(*cols), x.shape[:-1]) for f in fns]
        out = np.stack(vals, axis=-1)
        return out.reshape(x.shape[:-1] + shape) if shape else out[..., 0]

    return closure


def _displacement_rotation(dim, case):
    """Symbolic (u, r) for the requested case; both have zero trace on
    the boundary of the unit square/cube."""
    if dim == 3:
        x = sp.symbols("x0 x1 x2")
        bump = [(1 - xi) * xi for xi in x]
        if case == "smooth":
            u = sp.Matrix([sp.sin(sp.pi * x[i]) * bump[(i + 1) % 3]
                           * bump[(i + 2) % 3] for i in range(3)])
        elif case == "divfree":
            s2 = sp.sin(sp.pi * x[0])**2 * sp.sin(sp.pi * x[1])**2 \
                * sp.sin(sp.pi * x[2])**2
            pot = sp.Matrix([0, s2, s2])
            u = sp.Matrix([pot[2].diff(x[1]) - pot[1].diff(x[2]),
                           pot[0].diff(x[2]) - pot[2].diff(x[0]),
                           pot[1].diff(x[0]) - pot[0].diff(x[1])])
        else:
            raise ValueError(f"unknown case {case!r}")
        r = sp.Matrix([bump[i] * sp.sin(sp.pi * x[(i + 1) % 3])
                       * sp.sin(sp.pi * x[(i + 2) % 3]) for i in range(3)])
        return x, u, r
    x = sp.symbols("x0 x1")
    if case == "smooth":
        u = sp.Matrix([sp.sin(sp.pi * x[0]) * (1 - x[1]) * x[1],
                       sp.sin(sp.pi * x[1]) * (1 - x[0]) * x[0]])
    elif case == "divfree":
        psi = sp.sin(sp.pi * x[0])**2 * sp.sin(sp.pi * x[1])**2
        u = sp.Matrix([psi.diff(x[1]), -psi.diff(x[0])])
    else:
        raise ValueError(f"unknown case {case!r}")
    r = (1 - x[0]) * x[0] * sp.sin(sp.pi * x[1])
    return x, u, r


class ExactSolution:
    """Closed-form exact fields for a material and solution case.

    All methods take points of shape (npts, d). Provides the full
    derivative set needed by assembly (loads), error norms, and the
    strong-residual check.
    """

    def __init__(self, material, case="smooth"):
        dim = material.dim
        self.material = material
        self.dim = dim
        self.case = case
        x, u, r = _displacement_rotation(dim, case)

        grad_u = u.jacobian(x)
        if dim == 2:
            grad_r = sp.Matrix([[r.diff(xi) for xi in x]])  # row vector
            sr = _sym_asym_adjoint(r, 2)
        else:
            grad_r = r.jacobian(x)
            sr = _sym_asym_adjoint(list(r), 3)

        sigma = _iso_inverse_sym(grad_u + sr, material.mu,
                                 material.mu_c_sigma, material.lambda_sigma,
                                 dim)
        div_sigma = sp.Matrix([sum(sigma[i, j].diff(x[j])
                                   for j in range(dim)) for i in range(dim)])
        s_sigma = _sym_asym(sigma, dim)

        # g = A_tilde^{-1} grad r: matrix rows in 3D, a plane vector in 2D
        if dim == 3:
            g = _iso_inverse_sym(grad_r, material.mu, material.mu_c_omega,
                                 material.lambda_omega, 3)
            div_g = sp.Matrix([sum(g[i, j].diff(x[j]) for j in range(3))
                               for i in range(3)])
        else:
            g = grad_r.T / material.omega_tilde_scalar
            div_g = sum(g[j].diff(x[j]) for j in range(2))

        self.u = _lambdify(u, x)
        self.r = _lambdify(r, x)
        self.grad_u = _lambdify(grad_u, x)
        self.grad_r = _lambdify(grad_r.T if dim == 2 else grad_r, x)
        self.sigma = _lambdify(sigma, x)
        self.div_sigma = _lambdify(div_sigma, x)
        self._s_sigma = _lambdify(s_sigma, x)
        self._g = _lambdify(g, x)
        self._div_g = _lambdify(div_g, x)

    # -- couple stress and loads ---------------------------------------
    def omega(self, x):
        """Unscaled couple stress ell^2 g."""
        ell = self.material.ell(x)
        g = self._g(x)
        return (ell ** 2)[..., None] * g if self.dim == 2 \
            else (ell ** 2)[..., None, None] * g

    def omega_tilde(self, x):
        """Scaled couple stress ell * g (the WC unknown)."""
        ell = self.material.ell(x)
        g = self._g(x)
        return ell[..., None] * g if self.dim == 2 \
            else ell[..., None, None] * g

    def div_omega(self, x):
        """Row-wise div of omega = div(ell^2 g), equal to div(ell w~)."""
        ell = self.material.ell(x)
        grad_ell = self.material.ell.gradient(x)
        g = self._g(x)
        div_g = self._div_g(x)
        if self.dim == 2:
            return ell ** 2 * div_g + 2 * ell * np.einsum(
                "...d,...d->...", g, grad_ell)
        return (ell ** 2)[..., None] * div_g + 2 * ell[..., None] * np.einsum(
            "...id,...d->...i", g, grad_ell)

    def f_u(self, x):
        return -self.div_sigma(x)

    def f_r(self, x):
        return -self.div_omega(x) + self._s_sigma(x)

"""Pointwise Cosserat operator algebra and isotropic material laws.

Conventions. Fields are batched numpy arrays with the point axis first:
matrices have shape (..., d, d), vectors (..., d). In 2D the rotation r
is a scalar and the couple stress omega is a 2-vector (the single
surviving matrix row); in 3D both stress and couple stress are 3x3
matrices with rows conjugate to the row-wise divergence.

The asymmetry operator S maps a matrix to the vector (3D) or scalar
(2D) measuring its skew part; S* is its pointwise adjoint. U is the
coordinate cross-product lift, and Phi the block automorphism
(a, b) -> (a, Ua + b) used to factor the coupling operator through two
divergence operators.
"""

import numpy as np


# ---------------------------------------------------------------------------
# asymmetry operator and adjoint
# ---------------------------------------------------------------------------

def asym(sigma):
    """S sigma: (..., 3, 3) -> (..., 3) or (..., 2, 2) -> (...)."""
    sigma = np.asarray(sigma)
    d = sigma.shape[-1]
    if d == 2:
        return sigma[..., 1, 0] - sigma[..., 0, 1]
    return np.stack([sigma[..., 2, 1] - sigma[..., 1, 2],
                     sigma[..., 0, 2] - sigma[..., 2, 0],
                     sigma[..., 1, 0] - sigma[..., 0, 1]], axis=-1)


def asym_adjoint(r, dim):
    """S* r: the skew matrix dual to asym, so asym(sigma).r = sigma:S*r.

    2D: scalar r -> [[0, -r], [r, 0]]; 3D: vector r -> the cross-product
    matrix of r.
    """
    r = np.asarray(r)
    if dim == 2:
        out = np.zeros(r.shape + (2, 2))
        out[..., 0, 1] = -r
        out[..., 1, 0] = r
        return out
    out = np.zeros(r.shape[:-1] + (3, 3))
    out[..., 1, 2] = -r[..., 0]
    out[..., 2, 1] = r[..., 0]
    out[..., 2, 0] = -r[..., 1]
    out[..., 0, 2] = r[..., 1]
    out[..., 0, 1] = -r[..., 2]
    out[..., 1, 0] = r[..., 2]
    return out


# ---------------------------------------------------------------------------
# coordinate lift U and the automorphism Phi
# ---------------------------------------------------------------------------

def lift_U(x, field):
    """Cross-product lift (3D): vectors v -> x cross v; matrices act on
    the first (row) index, i.e. column j -> x cross column_j."""
    x = np.asarray(x)
    field = np.asarray(field)
    if field.shape[-1] != 3 or x.shape[-1] != 3:
        raise ValueError("lift_U is defined in three dimensions")
    if field.ndim == x.ndim:                      # vector field
        return np.cross(x, field)
    cols = np.swapaxes(field, -1, -2)             # (..., j, i)
    lifted = np.cross(x[..., None, :], cols)
    return np.swapaxes(lifted, -1, -2)


def apply_Phi(x, pair):
    """Phi(a, b) = (a, U a + b), for vector or matrix pairs."""
    a, b = pair
    return a, lift_U(x, a) + b


def apply_Phi_inv(x, pair):
    """Phi^{-1}(a, b) = (a, b - U a)."""
    a, b = pair
    return a, b - lift_U(x, a)


# ---------------------------------------------------------------------------
# characteristic length field
# ---------------------------------------------------------------------------

class LengthField:
    """Characteristic micropolar length ell(x), 0 <= ell <= 1.

    Two forms: a spatial constant, or the piecewise-linear composite
    profile ell(x) = min(1, max(0, max_i(3 x_i - 1))), which vanishes on
    the corner region max_i(x_i) <= 1/3 (pure elasticity) and saturates
    at 1 for max_i(x_i) >= 2/3. Both are affine on every cell of a
    structured mesh whose planes resolve the kinks (n divisible by 3
    for the composite form).
    """

    def __init__(self, constant=None, composite=False):
        if composite == (constant is not None):
            raise ValueError("specify exactly one of constant=, composite=")
        if constant is not None and not 0.0 <= constant <= 1.0:
            raise ValueError("constant length must lie in [0, 1]")
        self.constant = constant
        self.composite = composite
        self.c_ell = 3.0 if composite else 0.0

    @property
    def is_degenerate(self):
        """True if ell vanishes somewhere (rules out the SC family)."""
        return self.composite or self.constant == 0.0

    def __call__(self, x):
        x = np.asarray(x)
        if self.constant is not None:
            return np.full(x.shape[:-1], self.constant)
        return np.clip(3.0 * x.max(axis=-1) - 1.0, 0.0, 1.0)

    def gradient(self, x):
        """Pointwise gradient (defined a.e.; arbitrary on kink sets)."""
        x = np.asarray(x)
        out = np.zeros_like(x, dtype=float)
        if self.constant is not None:
            return out
        m = 3.0 * x.max(axis=-1) - 1.0
        active = (m > 0.0) & (m < 1.0)
        imax = x.argmax(axis=-1)
        np.put_along_axis(out, imax[..., None], 3.0, axis=-1)
        return out * active[..., None]

    def cell_values(self, mesh):
        """Vertex values per cell, shape (n_cells, d+1)."""
        return self(mesh.vertices[mesh.cells])

    def cell_max(self, mesh):
        """Per-cell maximum (exact vertex max for affine-per-cell ell)."""
        return self.cell_values(mesh).max(axis=1)

    def cell_gradients(self, mesh):
        """Constant per-cell gradient from vertex values, shape (nc, d).

        Exact whenever ell is affine on each cell, with no dependence on
        the pointwise argmax convention at kinks.
        """
        vals = self.cell_values(mesh)
        jac, _, _ = mesh.affine_maps()
        dif = vals[:, 1:] - vals[:, :1]
        return np.linalg.solve(np.swapaxes(jac, 1, 2), dif[..., None])[..., 0]


# ---------------------------------------------------------------------------
# isotropic material model
# ---------------------------------------------------------------------------

def _iso_forward(tau, mu, mu_c, lam, d):
    """a*tau + b*tau^T + c*tr(tau) I contraction of the isotropic law."""
    a = 0.25 / mu + 0.25 / mu_c
    b = 0.25 / mu - 0.25 / mu_c
    c = -(0.5 / mu) * lam / (2.0 * mu + d * lam)
    tr = np.trace(tau, axis1=-2, axis2=-1)
    return (a * tau + b * np.swapaxes(tau, -1, -2)
            + c * tr[..., None, None] * np.eye(d))


def _iso_inverse(tau, mu, mu_c, lam, d):
    """2 mu sym(tau) + 2 mu_c skew(tau) + lam tr(tau) I."""
    taut = np.swapaxes(tau, -1, -2)
    tr = np.trace(tau, axis1=-2, axis2=-1)
    return (mu * (tau + taut) + mu_c * (tau - taut)
            + lam * tr[..., None, None] * np.eye(d))


class MaterialModel:
    """Isotropic Cosserat material: elastic law A_sigma and couple-stress
    law A_omega = ell^{-2} A_omega_tilde.

    dim fixes the trace dimension of the matrix laws (2 or 3). In 2D the
    couple stress is a vector and the tilde law reduces to the scalar
    1/(4 mu) + 1/(4 mu_c_omega).
    """

    def __init__(self, mu, lambda_sigma, mu_c_sigma, lambda_omega,
                 mu_c_omega, ell, dim):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if min(mu, mu_c_sigma) <= 0 or 2 * mu + dim * lambda_sigma <= 0:
            raise ValueError("elastic tensor bounds violated")
        if min(mu, mu_c_omega) <= 0 or 2 * mu + dim * lambda_omega <= 0:
            raise ValueError("couple-stress tensor bounds violated")
        if not isinstance(ell, LengthField):
            ell = LengthField(constant=ell)
        self.mu = mu
        self.lambda_sigma = lambda_sigma
        self.mu_c_sigma = mu_c_sigma
        self.lambda_omega = lambda_omega
        self.mu_c_omega = mu_c_omega
        self.ell = ell
        self.dim = dim

    # -- elastic law ---------------------------------------------------
    def apply_A_sigma(self, tau):
        return _iso_forward(tau, self.mu, self.mu_c_sigma,
                            self.lambda_sigma, self.dim)

    def apply_A_sigma_inv(self, tau):
        return _iso_inverse(tau, self.mu, self.mu_c_sigma,
                            self.lambda_sigma, self.dim)

    def sigma_eigenvalue_bounds(self):
        """(min, max) eigenvalue of A_sigma: the spectrum consists of
        1/(2mu+d lam) (trace), 1/(2mu) (sym traceless), 1/(2mu_c) (skew)."""
        eigs = (1.0 / (2 * self.mu + self.dim * self.lambda_sigma),
                0.5 / self.mu, 0.5 / self.mu_c_sigma)
        return min(eigs), max(eigs)

    # -- couple-stress law ----------------------------------------------
    @property
    def omega_tilde_scalar(self):
        """The 2D scalar tilde law coefficient."""
        return 0.25 / self.mu + 0.25 / self.mu_c_omega

    def apply_A_omega_tilde(self, rho):
        if self.dim == 2:
            return self.omega_tilde_scalar * np.asarray(rho)
        return _iso_forward(rho, self.mu, self.mu_c_omega,
                            self.lambda_omega, 3)

    def apply_A_omega_tilde_inv(self, rho):
        if self.dim == 2:
            return np.asarray(rho) / self.omega_tilde_scalar
        return _iso_inverse(rho, self.mu, self.mu_c_omega,
                            self.lambda_omega, 3)

    def apply_A_omega(self, rho, x):
        """Full couple-stress law ell(x)^{-2} A_tilde rho; requires
        ell(x) > 0 at every evaluation point."""
        ell = self.ell(x)
        if np.any(ell <= 0.0):
            raise ValueError("A_omega evaluated where ell = 0 (degenerate)")
        scale = ell ** -2
        rho = self.apply_A_omega_tilde(rho)
        if self.dim == 2:
            return scale[..., None] * rho
        return scale[..., None, None] * rho


# ---------------------------------------------------------------------------
# strong-form residual
# ---------------------------------------------------------------------------

def strong_residual(material, fields, x):
    """Residuals of the four strong equations at points x.

    fields must provide callables u, r, grad_u, grad_r, sigma, omega,
    div_sigma, div_omega (physical fields with row-wise divergences).
    Returns (r_a, r_b, r_c, r_d):
        r_a = A_sigma sigma - grad u - S* r        (elastic law)
        r_b = A_omega omega - grad r               (couple-stress law)
        r_c = -div sigma                           (= f_u when balanced)
        r_d = -div omega + S sigma                 (= f_r when balanced)
    """
    x = np.asarray(x)
    sigma = fields.sigma(x)
    omega = fields.omega(x)
    r_a = (material.apply_A_sigma(sigma) - fields.grad_u(x)
           - asym_adjoint(fields.r(x), material.dim))
    r_b = material.apply_A_omega(omega, x) - fields.grad_r(x)
    r_c = -fields.div_sigma(x)
    r_d = -fields.div_omega(x) + asym(sigma)
    return r_a, r_b, r_c, r_d

"""Reference polynomial spaces and degree-of-freedom layouts.

Provides monomial bases for P_k, spanning sets for the vector-valued
RT_k and BDM_k spaces on simplices, and the interior moment spaces
used by their degrees of freedom (P_{k-1}^d for RT, first-kind Nedelec
N1_{k-1} = P_{k-2}^d + S_{k-1} for BDM). The RT index convention is
that the lowest-order space is RT_0.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np


@lru_cache(maxsize=None)
def monomial_exponents(dim, degree, homogeneous=False):
    """Exponent tuples of the monomial basis of P_degree (or H_degree)."""
    exps = []
    for alpha in product(range(degree + 1), repeat=dim):
        total = sum(alpha)
        if (total == degree) if homogeneous else (total <= degree):
            exps.append(alpha)
    exps.sort(key=lambda a: (sum(a), a))
    return tuple(exps)


def eval_monomials(exps, points):
    """Evaluate monomials at points; returns (npts, nmono)."""
    points = np.asarray(points, dtype=float)
    out = np.ones(points.shape[:-1] + (len(exps),))
    for m, alpha in enumerate(exps):
        for i, a in enumerate(alpha):
            if a:
                out[..., m] *= points[..., i] ** a
    return out


def eval_monomial_grads(exps, points):
    """Gradients of monomials; returns (npts, nmono, dim)."""
    points = np.asarray(points, dtype=float)
    dim = points.shape[-1]
    out = np.zeros(points.shape[:-1] + (len(exps), dim))
    for m, alpha in enumerate(exps):
        for j in range(dim):
            if alpha[j] == 0:
                continue
            g = float(alpha[j]) * np.ones(points.shape[:-1])
            for i, a in enumerate(alpha):
                p = a - 1 if i == j else a
                if p:
                    g = g * points[..., i] ** p
            out[..., m, j] = g
    return out


@lru_cache(maxsize=None)
def _s_space_coeffs(dim, degree):
    """Basis of S_degree = {p in H_degree^d : p . x = 0} as coefficient
    vectors over (component, homogeneous monomial)."""
    hexps = monomial_exponents(dim, degree, homogeneous=True)
    texps = monomial_exponents(dim, degree + 1, homogeneous=True)
    tindex = {a: i for i, a in enumerate(texps)}
    nin = dim * len(hexps)
    A = np.zeros((len(texps), nin))
    for c in range(dim):
        for m, alpha in enumerate(hexps):
            beta = list(alpha)
            beta[c] += 1
            A[tindex[tuple(beta)], c * len(hexps) + m] = 1.0
    _, s, vt = np.linalg.svd(A)
    rank = int((s > 1e-10 * s[0]).sum())
    return hexps, vt[rank:].T.copy()  # (nin, n_null)


def eval_s_space(dim, degree, points):
    """Evaluate the S_degree basis; returns (npts, nbasis, dim)."""
    hexps, coeffs = _s_space_coeffs(dim, degree)
    vals = eval_monomials(hexps, points)  # (npts, nh)
    nh = len(hexps)
    comp = coeffs.reshape(dim, nh, -1)
    return np.einsum("pm,cmb->pbc", vals, comp)


def eval_vector_polys(exps, dim, points):
    """P-monomials stacked per component; returns (npts, dim*nmono, dim)."""
    vals = eval_monomials(exps, points)
    npts, nm = vals.shape
    out = np.zeros((npts, dim * nm, dim))
    for c in range(dim):
        out[:, c * nm:(c + 1) * nm, c] = vals
    return out


@dataclass(frozen=True)
class HdivElement:
    """Spanning set and DOF layout of RT_k or BDM_k on a d-simplex."""

    kind: str       # "RT" or "BDM"
    degree: int
    dim: int

    def __post_init__(self):
        if self.kind not in ("RT", "BDM"):
            raise ValueError(f"unknown H(div) kind {self.kind!r}")
        if self.kind == "BDM" and self.degree < 1:
            raise ValueError("BDM requires degree >= 1")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        assert self.n_span == self.expected_dim

    @property
    def facet_degree(self):
        return self.degree

    @property
    def n_facet_dofs(self):
        return len(monomial_exponents(self.dim - 1, self.facet_degree))

    @property
    def _pexps(self):
        return monomial_exponents(self.dim, self.degree)

    @property
    def _hexps(self):
        return monomial_exponents(self.dim, self.degree, homogeneous=True)

    @property
    def n_span(self):
        n = self.dim * len(self._pexps)
        if self.kind == "RT":
            n += len(self._hexps)
        return n

    @property
    def expected_dim(self):
        k, d = self.degree, self.dim
        if self.kind == "RT":
            return (k + 1) * (k + 3) if d == 2 else (k + 1) * (k + 2) * (k + 4) // 2
        return (k + 1) * (k + 2) if d == 2 else (k + 1) * (k + 2) * (k + 3) // 2

    @property
    def n_interior_dofs(self):
        return self.n_span - (self.dim + 1) * self.n_facet_dofs

    def eval_span(self, points):
        """Values and divergences of the spanning set.

        Returns (vals (npts, n_span, dim), divs (npts, n_span)). The
        set is P_k^d (component-stacked monomials), plus x*H_k for RT.
        """
        points = np.asarray(points, dtype=float)
        pexps = self._pexps
        vals = eval_vector_polys(pexps, self.dim, points)
        npts = vals.shape[0]
        divs = np.zeros((npts, vals.shape[1]))
        grads = eval_monomial_grads(pexps, points)
        nm = len(pexps)
        for c in range(self.dim):
            divs[:, c * nm:(c + 1) * nm] = grads[:, :, c]
        if self.kind == "RT":
            hexps = self._hexps
            hv = eval_monomials(hexps, points)
            rv = points[:, None, :] * hv[:, :, None]   # x * h(x)
            rdiv = hv * np.array([self.dim + sum(a) for a in hexps])
            vals = np.concatenate([vals, rv], axis=1)
            divs = np.concatenate([divs, rdiv], axis=1)
        return vals, divs

    def eval_interior_moments(self, points):
        """Interior moment functions; returns (npts, n_int, dim).

        RT_k uses P_{k-1}^d; BDM_k uses N1_{k-1} = P_{k-2}^d + S_{k-1}.
        Both spaces are translation and scaling invariant, so they may
        be evaluated in locally centered coordinates.
        """
        points = np.asarray(points, dtype=float)
        k, d = self.degree, self.dim
        parts = []
        if self.kind == "RT":
            if k >= 1:
                parts.append(eval_vector_polys(monomial_exponents(d, k - 1), d, points))
        else:
            if k >= 2:
                parts.append(eval_vector_polys(monomial_exponents(d, k - 2), d, points))
            if k >= 1:
                parts.append(eval_s_space(d, k - 1, points))
        if not parts:
            return np.zeros((points.shape[0], 0, d))
        out = np.concatenate(parts, axis=1)
        assert out.shape[1] == self.n_interior_dofs
        return out

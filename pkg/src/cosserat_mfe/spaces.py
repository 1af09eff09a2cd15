"""Finite element spaces on simplicial meshes.

H(div) bases are built per cell as the dual basis to globally defined
moment DOFs: normal-component moments on facets (normal direction and
facet parametrization fixed by the ascending global vertex order) and
interior moments. Shared facet DOFs are evaluated identically from
both incident cells, so normal-trace continuity holds by construction
and the cell-to-global DOF map needs no extra signs.

The spanning set on each cell is the contravariant Piola image of the
reference monomial set, scaled by 1/det.
"""

import numpy as np

from .elements import (HdivElement, eval_monomial_grads, eval_monomials,
                       monomial_exponents)
from .quadrature import simplex_rule


class DGSpace:
    """Discontinuous piecewise polynomials P_{-k} (one scalar field).

    Basis on each cell: reference-coordinate monomials (identity
    mapping); DOFs are cell-major.
    """

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = degree
        self.exps = monomial_exponents(mesh.dim, degree)
        self.n_loc = len(self.exps)
        self.n_dofs = mesh.n_cells * self.n_loc
        self.jac, self.offset, self.det = mesh.affine_maps()
        self.jinv = np.linalg.inv(self.jac)

    def cell_dofs(self, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        return cells[:, None] * self.n_loc + np.arange(self.n_loc)[None, :]

    def tabulate(self, ref_points, cells=None, grads=False):
        """Basis values (nq, n_loc), optionally gradients (nc, nq, n_loc, d)."""
        vals = eval_monomials(self.exps, ref_points)
        if not grads:
            return vals
        gref = eval_monomial_grads(self.exps, ref_points)
        jinv = self.jinv if cells is None else self.jinv[cells]
        g = np.einsum("qmk,ckd->cqmd", gref, jinv)
        return vals, g

    def physical_points(self, ref_points, cells=None):
        jac = self.jac if cells is None else self.jac[cells]
        off = self.offset if cells is None else self.offset[cells]
        return np.einsum("cdk,qk->cqd", jac, ref_points) + off[:, None, :]

    def local_mass(self, qdegree):
        """Reference mass matrix and per-cell scaling (dets)."""
        pts, wts = simplex_rule(self.mesh.dim, qdegree)
        v = eval_monomials(self.exps, pts)
        return np.einsum("q,qm,qn->mn", wts, v, v), self.det

    def project(self, field, qdegree=12):
        """L2 projection of a callable field(x)->(...,) onto the space."""
        pts, wts = simplex_rule(self.mesh.dim, qdegree)
        mref = np.einsum("q,qm,qn->mn", wts, eval_monomials(self.exps, pts),
                         eval_monomials(self.exps, pts))
        y = self.physical_points(pts)
        f = np.asarray(field(y.reshape(-1, self.mesh.dim))).reshape(y.shape[:2])
        rhs = np.einsum("q,cq,qm->cm", wts, f, eval_monomials(self.exps, pts))
        coeffs = np.linalg.solve(mref, rhs.T).T
        return coeffs.ravel()

    def evaluate(self, coeffs, ref_points, cells=None):
        vals = eval_monomials(self.exps, ref_points)
        c = coeffs.reshape(-1, self.n_loc)
        if cells is not None:
            c = c[cells]
        return np.einsum("cm,qm->cq", c, vals)


class HdivSpace:
    """Scalar (vector-valued) RT_k or BDM_k space in H(div)."""

    def __init__(self, mesh, kind, degree, qdegree=None):
        self.mesh = mesh
        self.element = HdivElement(kind, degree, mesh.dim)
        self.kind = kind
        self.degree = degree
        elem = self.element
        d = mesh.dim
        self.n_fdof = elem.n_facet_dofs
        self.n_idof = elem.n_interior_dofs
        self.n_loc = elem.n_span
        self.n_dofs = mesh.n_facets * self.n_fdof + mesh.n_cells * self.n_idof
        self.qdeg = qdegree if qdegree is not None else 2 * degree + 6

        self.jac, self.offset, self.det = mesh.affine_maps()
        self.jinv = np.linalg.inv(self.jac)

        self._build_facet_geometry()
        self._build_orthonormalizers()
        self._build_dual_basis()
        self._build_dof_map()

    @staticmethod
    def _whiten(vals, weights):
        """Span-preserving transform making the basis L2-orthonormal."""
        if vals.shape[1] == 0:
            return np.eye(0)
        if vals.ndim == 3:
            gram = np.einsum("q,qid,qjd->ij", weights, vals, vals)
        else:
            gram = np.einsum("q,qi,qj->ij", weights, vals, vals)
        return np.linalg.inv(np.linalg.cholesky(gram)).T

    def _build_orthonormalizers(self):
        d = self.mesh.dim
        pts, wts = simplex_rule(d, self.qdeg)
        vals, _ = self.element.eval_span(pts)
        self._span_T = self._whiten(vals, wts)
        self._fmom_T = self._whiten(self.fq_moments, self.fq_weight)
        self.fq_moments = self.fq_moments @ self._fmom_T
        centered = pts - np.full(d, 1.0 / (d + 1))
        self._imom_T = self._whiten(
            self.element.eval_interior_moments(centered), wts)

    # -- geometry -----------------------------------------------------
    def _build_facet_geometry(self):
        mesh = self.mesh
        d = mesh.dim
        fv = mesh.vertices[mesh.facets]
        self.f_origin = fv[:, 0]
        self.f_edges = fv[:, 1:] - fv[:, :1]           # (nf, d-1, d)
        if d == 2:
            t = fv[:, 1] - fv[:, 0]
            nrm = np.stack([t[:, 1], -t[:, 0]], axis=1)
            self.f_measure = np.linalg.norm(t, axis=1)
        else:
            nrm = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
            self.f_measure = 0.5 * np.linalg.norm(nrm, axis=1)
        self.f_normal = nrm / np.linalg.norm(nrm, axis=1)[:, None]
        # facet quadrature in facet parameters, weights normalized to
        # mean-value form (they sum to 1 after the measure rescaling)
        fp, fw = simplex_rule(d - 1, self.qdeg)
        self.fq_param = fp                              # (nqf, d-1)
        vol_ref = fw.sum()
        self.fq_weight = fw / vol_ref                   # sums to 1
        fexps = monomial_exponents(d - 1, self.element.facet_degree)
        self.fq_moments = eval_monomials(fexps, fp)     # (nqf, n_fdof)
        # physical facet quadrature points
        self.fq_points = (self.f_origin[:, None, :]
                          + np.einsum("qe,fed->fqd", fp, self.f_edges))

    # -- dual basis ---------------------------------------------------
    def _span_at_ref(self, ref_points):
        vals, divs = self.element.eval_span(ref_points)
        return (np.einsum("qnd,nm->qmd", vals, self._span_T),
                divs @ self._span_T)

    def _interior_moments_at(self, local_points):
        mom = self.element.eval_interior_moments(local_points)
        return np.einsum("qnd,nm->qmd", mom, self._imom_T)

    def _facet_rows(self, cells, slot):
        """Rows of the generalized Vandermonde for one local facet slot.

        Row m, column j: mean over the facet of (Piola span_j . n) q_m.
        """
        mesh = self.mesh
        fid = mesh.cell_facets[cells, slot]
        y = self.fq_points[fid]                                  # (nc, nqf, d)
        xhat = np.einsum("ckd,cqd->cqk", self.jinv[cells],
                         y - self.offset[cells][:, None, :])
        nc, nqf, d = y.shape
        vals, _ = self._span_at_ref(xhat.reshape(-1, d))
        vals = vals.reshape(nc, nqf, self.n_loc, d)
        # Piola normal trace: (1/det) (J m) . n = (1/det) m . (J^T n)
        jtn = np.einsum("ckd,ck->cd", self.jac[cells], self.f_normal[fid])
        ntr = np.einsum("cqjd,cd->cqj", vals, jtn) / self.det[cells][:, None, None]
        return np.einsum("q,qm,cqj->cmj", self.fq_weight, self.fq_moments, ntr)

    def _interior_rows(self, cells):
        if self.n_idof == 0:
            nc = len(cells)
            return np.zeros((nc, 0, self.n_loc))
        pts, wts = simplex_rule(self.mesh.dim, self.qdeg)
        vals, _ = self._span_at_ref(pts)                         # (nq, nspan, d)
        phys = np.einsum("cdk,qnk->cqnd", self.jac[cells], vals)
        phys /= self.det[cells][:, None, None, None]
        y = (np.einsum("cdk,qk->cqd", self.jac[cells], pts)
             + self.offset[cells][:, None, :])
        centroid = self.mesh.vertices[self.mesh.cells[cells]].mean(axis=1)[:, None, :]
        scale = np.abs(self.det[cells]) ** (1.0 / self.mesh.dim)
        local = (y - centroid) / scale[:, None, None]
        mom = self._interior_moments_at(
            local.reshape(-1, self.mesh.dim)
        ).reshape(len(cells), -1, self.n_idof, self.mesh.dim)
        vol_ref = wts.sum()
        return np.einsum("q,cqmd,cqjd->cmj", wts / vol_ref, mom, phys)

    def _build_dual_basis(self):
        cells = np.arange(self.mesh.n_cells)
        rows = [self._facet_rows(cells, s) for s in range(self.mesh.dim + 1)]
        rows.append(self._interior_rows(cells))
        G = np.concatenate(rows, axis=1)
        self.dual_coeffs = np.linalg.inv(G)      # (nc, nspan, nloc)
        cond = np.linalg.cond(G)
        if np.max(cond) > 1e10:
            raise RuntimeError(f"ill-conditioned DOF matrix (cond {cond.max():.2e})")

    def _build_dof_map(self):
        mesh = self.mesh
        nf, nfd, nid = mesh.n_facets, self.n_fdof, self.n_idof
        dmap = np.zeros((mesh.n_cells, self.n_loc), dtype=np.int64)
        col = 0
        for slot in range(mesh.dim + 1):
            fid = mesh.cell_facets[:, slot]
            for m in range(nfd):
                dmap[:, col] = fid * nfd + m
                col += 1
        base = nf * nfd
        for m in range(nid):
            dmap[:, col] = base + np.arange(mesh.n_cells) * nid + m
            col += 1
        self.dof_map = dmap

    def cell_dofs(self, cells=None):
        return self.dof_map if cells is None else self.dof_map[cells]

    # -- evaluation ---------------------------------------------------
    def tabulate(self, ref_points, cells=None):
        """Physical basis values and divergences at reference points.

        Returns (vals (nc, nq, n_loc, d), divs (nc, nq, n_loc)); the
        contravariant Piola map (1/det) J is applied to values and the
        1/det scaling to divergences.
        """
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        vals, divs = self._span_at_ref(ref_points)
        pv = np.einsum("cdk,qnk->cqnd", self.jac[cells], vals)
        pv /= self.det[cells][:, None, None, None]
        pd = divs[None] / self.det[cells][:, None, None]
        C = self.dual_coeffs[cells]
        return (np.einsum("cqnd,cnj->cqjd", pv, C),
                np.einsum("cqn,cnj->cqj", pd, C))

    def physical_points(self, ref_points, cells=None):
        jac = self.jac if cells is None else self.jac[cells]
        off = self.offset if cells is None else self.offset[cells]
        return np.einsum("cdk,qk->cqd", jac, ref_points) + off[:, None, :]

    def evaluate(self, coeffs, ref_points, cells=None, divergence=False):
        vals, divs = self.tabulate(ref_points, cells)
        dofs = self.cell_dofs(cells)
        c = coeffs[dofs]
        out = np.einsum("cqjd,cj->cqd", vals, c)
        if divergence:
            return out, np.einsum("cqj,cj->cq", divs, c)
        return out

    # -- canonical (Fortin-type) interpolation ------------------------
    def interpolate(self, field, qdegree=None):
        """Coefficients of the canonical moment interpolant of a field.

        field: callable (npts, d) -> (npts, d); must be evaluable at
        facet and cell quadrature points.
        """
        qdeg = qdegree or self.qdeg
        mesh = self.mesh
        coeffs = np.zeros(self.n_dofs)
        # facet moments, one evaluation per global facet
        fp, fw = simplex_rule(mesh.dim - 1, qdeg)
        w = fw / fw.sum()
        fexps = monomial_exponents(mesh.dim - 1, self.element.facet_degree)
        qm = eval_monomials(fexps, fp) @ self._fmom_T
        y = (self.f_origin[:, None, :]
             + np.einsum("qe,fed->fqd", fp, self.f_edges))
        fv = np.asarray(field(y.reshape(-1, mesh.dim))).reshape(y.shape)
        ntr = np.einsum("fqd,fd->fq", fv, self.f_normal)
        fm = np.einsum("q,qm,fq->fm", w, qm, ntr)
        coeffs[:mesh.n_facets * self.n_fdof] = fm.ravel()
        if self.n_idof:
            pts, wts = simplex_rule(mesh.dim, qdeg)
            y = self.physical_points(pts)
            fv = np.asarray(field(y.reshape(-1, mesh.dim))).reshape(y.shape)
            centroid = mesh.vertices[mesh.cells].mean(axis=1)[:, None, :]
            scale = np.abs(self.det) ** (1.0 / mesh.dim)
            local = (y - centroid) / scale[:, None, None]
            mom = self._interior_moments_at(
                local.reshape(-1, mesh.dim)
            ).reshape(mesh.n_cells, -1, self.n_idof, mesh.dim)
            im = np.einsum("q,cqmd,cqd->cm", wts / wts.sum(), mom, fv)
            coeffs[mesh.n_facets * self.n_fdof:] = im.ravel()
        return coeffs

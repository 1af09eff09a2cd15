"""Assembly of the discrete Cosserat saddle-point systems.

Matrix-valued unknowns are stored row-wise: the stress consists of d
copies of a scalar H(div) space (one per matrix row), and likewise the
couple stress in 3D; in 2D the couple stress is a single H(div) field.
Displacement components and rotation components are discontinuous
polynomials, one scalar DG block per component.

Global ordering: [sigma rows | omega rows | u components | r components].
The p-block (stress, couple stress) comes first, the u-block
(displacement, rotation) second. The full system reads

    [[M_A, -B^T], [B, 0]] (p, u) = (0, rhs),

where M_A is the material-weighted mass form and B implements the
coupling rows (-div sigma, u') and (S sigma - div(ell omega), r'),
with ell == 1 for the strongly coupled family (which uses the unscaled
couple stress) and the material ell for the weakly coupled family
(which uses the scaled variable).
"""

import numpy as np
import scipy.sparse as sps

from .quadrature import simplex_rule
from .spaces import DGSpace, HdivSpace

_FAMILIES = ("SC", "WC")
_KINDS = ("RT", "BDM")


def _w_degree(kind, k):
    """Polynomial degree of the H(div) space W_k."""
    return k if kind == "RT" else k + 1


class DiscreteProblem:
    """Spaces, DOF layout, and cell-chunked tabulation for one family."""

    def __init__(self, mesh, family, k, w_kind, material):
        if family not in _FAMILIES or w_kind not in _KINDS:
            raise ValueError(f"unknown family/kind: {family}-{w_kind}")
        if k < 0:
            raise ValueError("order k must be nonnegative")
        if family == "SC" and material.ell.is_degenerate:
            raise ValueError("SC family requires ell bounded away from zero")
        if material.ell.composite and mesh.n % 3 != 0:
            raise ValueError("composite ell needs a mesh resolving it "
                             "(n divisible by 3)")
        if material.dim != mesh.dim:
            raise ValueError("material/mesh dimension mismatch")
        self.mesh = mesh
        self.family = family
        self.k = k
        self.w_kind = w_kind
        self.material = material
        d = mesh.dim

        if family == "SC":
            self.sigma_space = HdivSpace(mesh, w_kind, _w_degree(w_kind, k))
            self.omega_space = HdivSpace(mesh, w_kind, _w_degree(w_kind, k + 1))
            u_deg, r_deg = k, k + 1
        else:
            self.sigma_space = HdivSpace(mesh, "BDM", k + 1)
            self.omega_space = HdivSpace(mesh, w_kind, _w_degree(w_kind, k))
            u_deg, r_deg = k, k
        self.u_space = DGSpace(mesh, u_deg)
        self.r_space = DGSpace(mesh, r_deg)

        self.n_sigma_rows = d
        self.n_omega_rows = d if d == 3 else 1
        self.n_u_comps = d
        self.n_r_comps = d if d == 3 else 1

        self.relayout()
        # coupling uses ell == 1 for SC (unscaled omega), material ell for WC
        self.coupling_ell = material.ell if family == "WC" else None

    def relayout(self):
        """Recompute DOF offsets from the current spaces (called from the
        constructor; callable again after a deliberate space swap)."""
        ns, no = self.sigma_space.n_dofs, self.omega_space.n_dofs
        self.sigma_offsets = [i * ns for i in range(self.n_sigma_rows)]
        base = self.n_sigma_rows * ns
        self.omega_offsets = [base + i * no for i in range(self.n_omega_rows)]
        self.n_p = base + self.n_omega_rows * no

        nu, nr = self.u_space.n_dofs, self.r_space.n_dofs
        self.u_offsets = [i * nu for i in range(self.n_u_comps)]
        ubase = self.n_u_comps * nu
        self.r_offsets = [ubase + i * nr for i in range(self.n_r_comps)]
        self.n_u = ubase + self.n_r_comps * nr
        self.n_dofs = self.n_p + self.n_u

        self.qdeg = max(self.sigma_space.qdeg, self.omega_space.qdeg)

    # -- generic helpers ------------------------------------------------
    def cell_chunks(self, budget=2 ** 24):
        """Cell index ranges sized so tabulations stay within memory."""
        nq = len(simplex_rule(self.mesh.dim, self.qdeg)[1])
        per_cell = nq * (self.sigma_space.n_loc + self.omega_space.n_loc) \
            * self.mesh.dim
        chunk = max(1, budget // max(per_cell, 1))
        nc = self.mesh.n_cells
        return [np.arange(a, min(a + chunk, nc))
                for a in range(0, nc, chunk)]

    def ell_data(self, cells, points_phys):
        """(ell values (nc, nq), per-cell gradient (nc, d)) of the
        coupling length field; (ones, zeros) for the SC family."""
        nc, nq = points_phys.shape[:2]
        if self.coupling_ell is None:
            return np.ones((nc, nq)), np.zeros((nc, self.mesh.dim))
        vals = self.coupling_ell(points_phys.reshape(-1, self.mesh.dim))
        grads = self.coupling_ell.cell_gradients(self.mesh)[cells]
        return vals.reshape(nc, nq), grads

    def split(self, z):
        """Slice a full solution vector into named coefficient blocks."""
        ns, no = self.sigma_space.n_dofs, self.omega_space.n_dofs
        nu, nr = self.u_space.n_dofs, self.r_space.n_dofs
        p, u = z[:self.n_p], z[self.n_p:]
        return {
            "sigma": [p[o:o + ns] for o in self.sigma_offsets],
            "omega": [p[o:o + no] for o in self.omega_offsets],
            "u": [u[o:o + nu] for o in self.u_offsets],
            "r": [u[o:o + nr] for o in self.r_offsets],
        }

    # -- discrete field evaluation (used by error norms and checks) -----
    def eval_sigma(self, blocks, ref_points, cells):
        """(values (nc, nq, d, d), divergences (nc, nq, d))."""
        vals, divs = self.sigma_space.tabulate(ref_points, cells)
        dofs = self.sigma_space.cell_dofs(cells)
        c = np.stack([b[dofs] for b in blocks["sigma"]], axis=1)  # (nc,d,nl)
        return (np.einsum("cqjd,cij->cqid", vals, c),
                np.einsum("cqj,cij->cqi", divs, c))

    def eval_omega(self, blocks, ref_points, cells):
        """2D: ((nc, nq, 2), (nc, nq)); 3D: ((nc,nq,3,3), (nc,nq,3))."""
        vals, divs = self.omega_space.tabulate(ref_points, cells)
        dofs = self.omega_space.cell_dofs(cells)
        c = np.stack([b[dofs] for b in blocks["omega"]], axis=1)
        v = np.einsum("cqjd,cij->cqid", vals, c)
        dv = np.einsum("cqj,cij->cqi", divs, c)
        if self.mesh.dim == 2:
            return v[:, :, 0], dv[:, :, 0]
        return v, dv

    def eval_u(self, blocks, ref_points, cells):
        return np.stack([self.u_space.evaluate(b, ref_points, cells)
                         for b in blocks["u"]], axis=-1)

    def eval_r(self, blocks, ref_points, cells):
        vals = [self.r_space.evaluate(b, ref_points, cells)
                for b in blocks["r"]]
        return vals[0] if self.n_r_comps == 1 else np.stack(vals, axis=-1)


class _Triplets:
    """COO accumulation with deterministic (cell-ordered) insertion."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_dofs, col_dofs, local):
        nc, nr, ncl = local.shape
        self.rows.append(np.repeat(row_dofs, ncl, axis=1).ravel())
        self.cols.append(np.tile(col_dofs, (1, nr)).ravel())
        self.vals.append(local.ravel())

    def build(self, shape):
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        return sps.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _iso_coeffs(mu, mu_c, lam, d):
    """(a, b, c) of the contraction A tau = a tau + b tau^T + c tr(tau) I."""
    return (0.25 / mu + 0.25 / mu_c, 0.25 / mu - 0.25 / mu_c,
            -(0.5 / mu) * lam / (2.0 * mu + d * lam))


def _row_mass(vals, w, a, b, c, nrows):
    """Per-cell blocks of the isotropic mass form for row-wise fields.

    vals: (nc, nq, m, d) basis values of the scalar H(div) space;
    w: (nc, nq) quadrature weights (including det and any ell scaling).
    Returns blocks[(i, j)] = (nc, m, m): test row j against trial row i.
    """
    base = np.einsum("cq,cqmd,cqnd->cnm", w, vals, vals)
    blocks = {}
    for i in range(nrows):
        for j in range(nrows):
            loc = b * np.einsum("cq,cqm,cqn->cnm", w, vals[..., j],
                                vals[..., i])
            loc += c * np.einsum("cq,cqm,cqn->cnm", w, vals[..., i],
                                 vals[..., j])
            if i == j:
                loc += a * base
            blocks[(i, j)] = loc
    return blocks


def assemble_mass(problem):
    """Material-weighted mass form M_A on the p-block (SPD)."""
    m = problem.material
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, problem.qdeg)
    dets = problem.mesh.affine_maps()[2]
    trip = _Triplets()
    a_s, b_s, c_s = _iso_coeffs(m.mu, m.mu_c_sigma, m.lambda_sigma, d)
    if d == 3:
        a_o, b_o, c_o = _iso_coeffs(m.mu, m.mu_c_omega, m.lambda_omega, 3)
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        sv, _ = problem.sigma_space.tabulate(pts, cells)
        sdofs = problem.sigma_space.cell_dofs(cells)
        blocks = _row_mass(sv, w, a_s, b_s, c_s, d)
        for (i, j), loc in blocks.items():
            trip.add(sdofs + problem.sigma_offsets[j],
                     sdofs + problem.sigma_offsets[i], loc)
        # omega block: SC weights by ell^-2 (full law), WC uses the tilde law
        ov, _ = problem.omega_space.tabulate(pts, cells)
        odofs = problem.omega_space.cell_dofs(cells)
        wo = w
        if problem.family == "SC":
            y = problem.omega_space.physical_points(pts, cells)
            ell = m.ell(y.reshape(-1, d)).reshape(w.shape)
            wo = w / ell ** 2
        if d == 3:
            oblocks = _row_mass(ov, wo, a_o, b_o, c_o, 3)
            for (i, j), loc in oblocks.items():
                trip.add(odofs + problem.omega_offsets[j],
                         odofs + problem.omega_offsets[i], loc)
        else:
            loc = m.omega_tilde_scalar * np.einsum(
                "cq,cqmd,cqnd->cnm", wo, ov, ov)
            trip.add(odofs + problem.omega_offsets[0],
                     odofs + problem.omega_offsets[0], loc)
    return trip.build((problem.n_p, problem.n_p))


def _coupling_action(problem, cells, pts):
    """Pointwise action of the coupling operator on all local p basis
    functions of the given cells.

    Returns (pdofs (nc, np_loc), u_part (nc, nq, np_loc, d),
    r_part (nc, nq, np_loc, n_r)) where u_part is -div sigma and r_part
    is S sigma - div(ell omega) (rows).
    """
    mesh = problem.mesh
    d = mesh.dim
    nc = len(cells)
    nq = len(pts)
    nsl = problem.sigma_space.n_loc
    nol = problem.omega_space.n_loc
    nrows_o = problem.n_omega_rows
    np_loc = d * nsl + nrows_o * nol
    n_r = problem.n_r_comps

    sv, sd = problem.sigma_space.tabulate(pts, cells)
    ov, od = problem.omega_space.tabulate(pts, cells)
    y = problem.sigma_space.physical_points(pts, cells)
    ell, grad_ell = problem.ell_data(cells, y)

    u_part = np.zeros((nc, nq, np_loc, d))
    r_part = np.zeros((nc, nq, np_loc, n_r))
    pdofs = np.zeros((nc, np_loc), dtype=np.int64)
    sdofs = problem.sigma_space.cell_dofs(cells)
    odofs = problem.omega_space.cell_dofs(cells)

    for i in range(d):
        sl = slice(i * nsl, (i + 1) * nsl)
        pdofs[:, sl] = sdofs + problem.sigma_offsets[i]
        u_part[:, :, sl, i] = -sd
        if d == 2:
            # S sigma = sigma_10 - sigma_01: row 0 gives -phi_1, row 1 +phi_0
            r_part[:, :, sl, 0] = sv[..., 0] if i == 1 else -sv[..., 1]
        else:
            r_part[:, :, sl, (i + 1) % 3] = sv[..., (i + 2) % 3]
            r_part[:, :, sl, (i + 2) % 3] -= sv[..., (i + 1) % 3]
    # -div(ell omega) = -(ell div omega + grad ell . omega) per row
    dval = (ell[:, :, None] * od
            + np.einsum("cd,cqmd->cqm", grad_ell, ov))
    for i in range(nrows_o):
        sl = slice(d * nsl + i * nol, d * nsl + (i + 1) * nol)
        pdofs[:, sl] = odofs + problem.omega_offsets[i]
        r_part[:, :, sl, i] = -dval
    return pdofs, u_part, r_part


def assemble_coupling(problem):
    """Coupling block B: rows (u', r') tests, columns p trials."""
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, problem.qdeg)
    dets = problem.mesh.affine_maps()[2]
    uv = problem.u_space.tabulate(pts)
    rv = problem.r_space.tabulate(pts)
    trip = _Triplets()
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        pdofs, u_part, r_part = _coupling_action(problem, cells, pts)
        udofs = problem.u_space.cell_dofs(cells)
        rdofs = problem.r_space.cell_dofs(cells)
        for i in range(problem.n_u_comps):
            loc = np.einsum("cq,qn,cqmi->cnm", w, uv,
                            u_part[..., i:i + 1])
            trip.add(udofs + problem.u_offsets[i], pdofs, loc)
        for i in range(problem.n_r_comps):
            loc = np.einsum("cq,qn,cqmi->cnm", w, rv,
                            r_part[..., i:i + 1])
            trip.add(rdofs + problem.r_offsets[i], pdofs, loc)
    return trip.build((problem.n_u, problem.n_p))


def assemble_sl_gram(problem):
    """Gram matrix of the coupling action, (S_l p, S_l p')_{L2}."""
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, problem.qdeg)
    dets = problem.mesh.affine_maps()[2]
    trip = _Triplets()
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        pdofs, u_part, r_part = _coupling_action(problem, cells, pts)
        loc = np.einsum("cq,cqmi,cqni->cnm", w, u_part, u_part)
        loc += np.einsum("cq,cqmi,cqni->cnm", w, r_part, r_part)
        trip.add(pdofs, pdofs, loc)
    return trip.build((problem.n_p, problem.n_p))


def assemble_p_l2(problem):
    """Plain (unweighted) vector L2 mass on the p-block."""
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, problem.qdeg)
    dets = problem.mesh.affine_maps()[2]
    trip = _Triplets()
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        for space, offsets in ((problem.sigma_space, problem.sigma_offsets),
                               (problem.omega_space, problem.omega_offsets)):
            vals, _ = space.tabulate(pts, cells)
            dofs = space.cell_dofs(cells)
            loc = np.einsum("cq,cqmd,cqnd->cnm", w, vals, vals)
            for off in offsets:
                trip.add(dofs + off, dofs + off, loc)
    return trip.build((problem.n_p, problem.n_p))


def assemble_hlm_norm(problem):
    """Norm matrix of H_ell M on the p-block: the L2 mass plus div-div
    for the stress rows and the ell-weighted div-div for the couple
    stress rows (plain div-div when the family carries no ell)."""
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, problem.qdeg)
    dets = problem.mesh.affine_maps()[2]
    trip = _Triplets()
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        sv, sd = problem.sigma_space.tabulate(pts, cells)
        sdofs = problem.sigma_space.cell_dofs(cells)
        loc = np.einsum("cq,cqmd,cqnd->cnm", w, sv, sv)
        loc += np.einsum("cq,cqm,cqn->cnm", w, sd, sd)
        for off in problem.sigma_offsets:
            trip.add(sdofs + off, sdofs + off, loc)
        ov, od = problem.omega_space.tabulate(pts, cells)
        odofs = problem.omega_space.cell_dofs(cells)
        y = problem.omega_space.physical_points(pts, cells)
        ell, grad_ell = problem.ell_data(cells, y)
        dval = ell[:, :, None] * od + np.einsum("cd,cqmd->cqm", grad_ell, ov)
        loc = np.einsum("cq,cqmd,cqnd->cnm", w, ov, ov)
        loc += np.einsum("cq,cqm,cqn->cnm", w, dval, dval)
        for off in problem.omega_offsets:
            trip.add(odofs + off, odofs + off, loc)
    return trip.build((problem.n_p, problem.n_p))


def assemble_u_mass(problem):
    """Block-diagonal L2 mass on the u-block (displacement + rotation)."""
    trip = _Triplets()
    for space, offsets in ((problem.u_space, problem.u_offsets),
                           (problem.r_space, problem.r_offsets)):
        mref, dets = space.local_mass(2 * space.degree + 2)
        loc = mref[None] * dets[:, None, None]
        dofs = space.cell_dofs()
        for off in offsets:
            trip.add(dofs + off, dofs + off, loc)
    return trip.build((problem.n_u, problem.n_u))


def assemble_rhs(problem, f_u, f_r, qdegree=10):
    """Load vector (f_u, u') + (f_r, r') on the u-block."""
    d = problem.mesh.dim
    pts, wts = simplex_rule(d, qdegree)
    dets = problem.mesh.affine_maps()[2]
    y = problem.u_space.physical_points(pts)
    w = wts[None, :] * dets[:, None]
    rhs = np.zeros(problem.n_u)
    fu = np.asarray(f_u(y.reshape(-1, d))).reshape(y.shape)
    uv = problem.u_space.tabulate(pts)
    udofs = problem.u_space.cell_dofs()
    for i in range(problem.n_u_comps):
        loc = np.einsum("cq,qn,cq->cn", w, uv, fu[..., i])
        np.add.at(rhs, udofs + problem.u_offsets[i], loc)
    fr = np.asarray(f_r(y.reshape(-1, d)))
    fr = fr.reshape(y.shape[:2] + (() if problem.n_r_comps == 1 else (3,)))
    rv = problem.r_space.tabulate(pts)
    rdofs = problem.r_space.cell_dofs()
    for i in range(problem.n_r_comps):
        comp = fr if problem.n_r_comps == 1 else fr[..., i]
        loc = np.einsum("cq,qn,cq->cn", w, rv, comp)
        np.add.at(rhs, rdofs + problem.r_offsets[i], loc)
    return rhs


def export_coordinate_format(matrix, path):
    """Write a sparse matrix as plain 'row col value' text lines."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")

"""Error norms, convergence rates, inf-sup constants, and the weighted
projection-ratio bound for piecewise polynomials.

Norm conventions per family (reflected in the CSV columns):
  * stress: L2 and H(div) errors of sigma;
  * couple stress: SC measures the unscaled omega in L2 and H(div);
    WC measures the scaled omega~ in L2 and in the ell-weighted
    H(div ell) norm (div of ell omega~);
  * displacement/rotation: L2 errors plus errors against the

    elementwise L2 projection of the exact fields ("projected" errors);
  * composite: the sum of the component norms in which first-order
    (h^{k+1}) convergence is guaranteed;
  * improved: the family-specific higher-order norm (SC-RT: couple
    stress + rotation + projected displacement; SC-BDM: stress L2 +
    couple stress H(div) + rotation + projected displacement;
    WC: projected displacement only).
"""

import numpy as np
import scipy.linalg

from .assembly import (assemble_coupling, assemble_hlm_norm, assemble_u_mass)
from .quadrature import simplex_rule


def error_norms(problem, z, exact, qdegree=12):
    """All error-norm pieces for a solved problem; returns a dict."""
    mesh = problem.mesh
    d = mesh.dim
    blocks = problem.split(np.asarray(z))
    pts, wts = simplex_rule(d, qdegree)
    dets = mesh.affine_maps()[2]
    acc = {k: 0.0 for k in ("sigma_l2", "sigma_div", "omega_l2", "omega_div",
                            "u_l2", "r_l2")}
    wc = problem.family == "WC"
    for cells in problem.cell_chunks():
        w = wts[None, :] * dets[cells][:, None]
        y = problem.sigma_space.physical_points(pts, cells)
        yf = y.reshape(-1, d)

        sh, sdh = problem.eval_sigma(blocks, pts, cells)
        acc["sigma_l2"] += np.sum(w * np.sum(
            (sh - exact.sigma(yf).reshape(sh.shape)) ** 2, axis=(2, 3)))
        acc["sigma_div"] += np.sum(w * np.sum(
            (sdh - exact.div_sigma(yf).reshape(sdh.shape)) ** 2, axis=2))

        oh, odh = problem.eval_omega(blocks, pts, cells)
        oe = (exact.omega_tilde(yf) if wc else exact.omega(yf)).reshape(oh.shape)
        axes = tuple(range(2, oh.ndim))
        acc["omega_l2"] += np.sum(w * np.sum((oh - oe) ** 2, axis=axes))
        # divergence error: WC uses div(ell omega~), SC the plain div
        dive = exact.div_omega(yf).reshape(odh.shape)
        if wc:
            ell, grad_ell = problem.ell_data(cells, y)
            if d == 2:
                divh = ell * odh + np.einsum("cd,cqd->cq", grad_ell, oh)
            else:
                divh = ell[..., None] * odh + np.einsum(
                    "cd,cqid->cqi", grad_ell, oh)
        else:
            divh = odh
        dax = tuple(range(2, odh.ndim))
        acc["omega_div"] += np.sum(w * (np.sum((divh - dive) ** 2, axis=dax)
                                        if dax else (divh - dive) ** 2))

        uh = problem.eval_u(blocks, pts, cells)
        acc["u_l2"] += np.sum(w * np.sum(
            (uh - exact.u(yf).reshape(uh.shape)) ** 2, axis=2))
        rh = problem.eval_r(blocks, pts, cells)
        re = exact.r(yf).reshape(rh.shape)
        rax = tuple(range(2, rh.ndim))
        acc["r_l2"] += np.sum(w * (np.sum((rh - re) ** 2, axis=rax)
                                   if rax else (rh - re) ** 2))

    e = {k: float(np.sqrt(v)) for k, v in acc.items()}
    out = {
        "err_sigma_l2": e["sigma_l2"],
        "err_sigma_hdiv": float(np.hypot(e["sigma_l2"], e["sigma_div"])),
        "err_omega_l2": e["omega_l2"],
        "err_omega_hdivl": float(np.hypot(e["omega_l2"], e["omega_div"])),
        "err_u_l2": e["u_l2"],
        "err_r_l2": e["r_l2"],
        "err_u_proj": _projected_error(problem.u_space, blocks["u"],
                                       exact.u, problem.n_u_comps, qdegree),
        "err_r_proj": _projected_error(problem.r_space, blocks["r"],
                                       exact.r, problem.n_r_comps, qdegree),
    }
    out["err_composite"] = (out["err_sigma_hdiv"] + out["err_omega_hdivl"]
                            + out["err_u_l2"] + out["err_r_l2"])
    if wc:
        out["err_improved"] = out["err_u_proj"]
        # improved norm used with the divergence-free study: WC-RT carries
        # an h^{1/2}-weighted couple-stress term, WC-BDM an unweighted L2 one
        if problem.w_kind == "RT":
            omega_term = np.sqrt(mesh.h) * out["err_omega_hdivl"]
        else:
            omega_term = out["err_omega_l2"]
        out["err_improved_incomp"] = (out["err_sigma_l2"] + omega_term
                                      + out["err_r_proj"] + out["err_u_proj"])
    elif problem.w_kind == "RT":
        out["err_improved"] = (out["err_omega_l2"] + out["err_r_l2"]
                               + out["err_u_proj"])
    else:
        out["err_improved"] = (out["err_sigma_l2"] + out["err_omega_hdivl"]
                               + out["err_r_l2"] + out["err_u_proj"])
    return out


def _projected_error(space, coeff_blocks, field, n_comps, qdegree):
    """L2 distance between the discrete field and the elementwise L2
    projection of the exact field, computed via DG coefficients."""
    mref, dets = space.local_mass(2 * space.degree + 2)
    total = 0.0
    for i in range(n_comps):
        comp = (lambda x, i=i: np.asarray(field(x))[..., i]) \
            if n_comps > 1 else field
        delta = (space.project(comp, qdegree)
                 - coeff_blocks[i]).reshape(-1, space.n_loc)
        total += np.einsum("c,cm,mn,cn->", dets, delta, mref, delta)
    return float(np.sqrt(total))


def rate_table(hs, errors):
    """Convergence rates between consecutive levels.

    hs: decreasing mesh sizes; errors: {norm: [values]}. Returns
    {norm: [rate or "exact"]}, one entry per refinement step.
    """
    hs = np.asarray(hs, dtype=float)
    if len(hs) < 2 or np.any(np.diff(hs) >= 0):
        raise ValueError("need at least two strictly decreasing levels")
    out = {}
    for name, vals in errors.items():
        vals = np.asarray(vals, dtype=float)
        rates = []
        for i in range(1, len(vals)):
            if vals[i - 1] == 0.0 or vals[i] == 0.0:
                rates.append("exact")
            else:
                rates.append(float(np.log(vals[i - 1] / vals[i])
                                   / np.log(hs[i - 1] / hs[i])))
        out[name] = rates
    return out


def infsup_constant(problem, max_dofs=9000):
    """Discrete inf-sup constant of the coupling form.

    beta_h^2 is the smallest eigenvalue of (B N_p^{-1} B^T) y = t M_u y
    with N_p the H_ell M norm matrix on the p-block and M_u the L2 mass
    on the u-block. Dense, test-scale only.
    """
    if problem.n_dofs > max_dofs:
        raise ValueError(f"problem too large for dense inf-sup "
                         f"({problem.n_dofs} > {max_dofs} DOFs)")
    B = assemble_coupling(problem).toarray()
    N = assemble_hlm_norm(problem).toarray()
    Mu = assemble_u_mass(problem).toarray()
    G = B @ np.linalg.solve(N, B.T)
    eigs = scipy.linalg.eigh(G, Mu, eigvals_only=True)
    return float(np.sqrt(max(eigs[0], 0.0)))


def lemma47_ratio(mesh, ell_field, k):
    """sup over piecewise-P_k u of ||ell_h u|| / ||sqrt(ell ell_h) u||,
    with ell_h the per-cell max of ell; cells where ell_h = 0 count as
    ratio 1 (both norms vanish there)."""
    from .spaces import DGSpace
    space = DGSpace(mesh, k)
    pts, wts = simplex_rule(mesh.dim, 2 * k + 4)
    vals = space.tabulate(pts)
    w0 = np.einsum("q,qm,qn->mn", wts, vals, vals)
    y = space.physical_points(pts)
    ell = ell_field(y.reshape(-1, mesh.dim)).reshape(y.shape[:2])
    ell_h = ell_field.cell_max(mesh)
    worst = 1.0
    for c in np.nonzero(ell_h > 0.0)[0]:
        w1 = np.einsum("q,q,qm,qn->mn", wts, ell[c], vals, vals)
        lam = scipy.linalg.eigh(ell_h[c] * w0, w1, eigvals_only=True)[-1]
        worst = max(worst, float(np.sqrt(lam)))
    return worst

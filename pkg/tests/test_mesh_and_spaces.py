"""Mesh invariants and finite element space correctness."""

import numpy as np
import pytest

from cosserat_mfe.mesh import structured_simplicial
from cosserat_mfe.quadrature import simplex_rule
from cosserat_mfe.spaces import DGSpace, HdivSpace

ALL_ELEMENTS = [(d, kind, deg)
                for d in (2, 3)
                for kind, degs in (("RT", (0, 1, 2)), ("BDM", (1, 2, 3)))
                for deg in degs]


def _space_dim(kind, degree, d):
    """Expected dimension of the local H(div) space."""
    from math import comb
    p_full = comb(degree + d, d)
    if kind == "BDM":
        return d * p_full
    # RT_k = (P_k)^d + x * homogeneous P_k
    return d * p_full + comb(degree + d - 1, d - 1)


# ---------------------------------------------------------------------------
# quadrature and mesh


@pytest.mark.parametrize("dim", [2, 3])
def test_quadrature_integrates_monomials(dim):
    import math
    for degree in (1, 3, 6, 9):
        pts, wts = simplex_rule(dim, degree)
        assert abs(wts.sum() - 1.0 / math.factorial(dim)) < 1e-14
        # exact integral of x0^degree over the unit simplex
        exact = math.factorial(degree) / math.factorial(degree + dim)
        assert abs(np.sum(wts * pts[:, 0] ** degree) - exact) < 1e-13


@pytest.mark.parametrize("dim,n", [(2, 3), (2, 4), (3, 2), (3, 3)])
def test_structured_mesh_invariants(dim, n):
    mesh = structured_simplicial(dim, n)
    assert abs(mesh.cell_volumes().sum() - 1.0) < 1e-12
    assert mesh.n_cells == (2 if dim == 2 else 6) * n ** dim
    assert abs(mesh.h - np.sqrt(dim) / n) < 1e-14
    normals = mesh.facet_normals()
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    # every boundary facet lies in a coordinate hyperplane of the unit box
    bdry = np.nonzero(mesh.boundary_facet)[0]
    verts = mesh.vertices[mesh.facets[bdry]]
    on_box = np.zeros(len(bdry), dtype=bool)
    for ax in range(dim):
        for val in (0.0, 1.0):
            on_box |= np.all(np.abs(verts[:, :, ax] - val) < 1e-12, axis=1)
    assert on_box.all()


def test_mesh_export_text(tmp_path):
    mesh = structured_simplicial(2, 2)
    path = tmp_path / "mesh.txt"
    mesh.export_text(path)
    lines = path.read_text().strip().splitlines()
    dim, n_verts, n_cells = (int(t) for t in lines[0].split())
    assert (dim, n_verts, n_cells) == (2, 9, 8)
    assert len(lines) == 1 + n_verts + n_cells


# ---------------------------------------------------------------------------
# H(div) spaces


@pytest.mark.parametrize("dim,kind,degree", ALL_ELEMENTS)
def test_local_space_dimension(dim, kind, degree):
    mesh = structured_simplicial(dim, 1)
    space = HdivSpace(mesh, kind, degree)
    assert space.n_loc == _space_dim(kind, degree, dim)


@pytest.mark.parametrize("dim,kind,degree", ALL_ELEMENTS)
def test_normal_trace_continuity(dim, kind, degree):
    """Normal components agree across interior facets for random coeffs."""
    mesh = structured_simplicial(dim, 2)
    space = HdivSpace(mesh, kind, degree)
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(space.n_dofs)
    # sample each interior facet from both sides via facet quadrature points
    fp, _ = simplex_rule(dim - 1, 5)
    worst = 0.0
    interior = np.nonzero(~mesh.boundary_facet)[0]
    # build, per facet, the owning cells and their local facet index
    owners = {f: [] for f in interior}
    for c in range(mesh.n_cells):
        for lf, f in enumerate(mesh.cell_facets[c]):
            if f in owners:
                owners[f].append((c, lf))
    normals = mesh.facet_normals()
    jac, jinv, _ = mesh.affine_maps()
    x0 = mesh.vertices[mesh.cells[:, 0]]
    for f in interior[:40]:
        fverts = mesh.vertices[mesh.facets[f]]
        pts_phys = (fverts[0][None]
                    + fp @ (fverts[1:] - fverts[0][None]))
        traces = []
        for c, _lf in owners[f]:
            ref = (pts_phys - x0[c]) @ jinv[c].T
            vals = space.evaluate(coeffs, ref, np.array([c]))
            traces.append(vals[0] @ normals[f])
        worst = max(worst, float(np.max(np.abs(traces[0] - traces[1]))))
    assert worst < 1e-10


@pytest.mark.parametrize("dim,kind,degree", ALL_ELEMENTS)
def test_interpolation_reproduces_member_fields(dim, kind, degree):
    """Canonical interpolation is a projection: applying it to a field
    already in the space returns the same coefficients."""
    mesh = structured_simplicial(dim, 2)
    space = HdivSpace(mesh, kind, degree)
    rng = np.random.default_rng(11)
    if kind == "RT" and degree == 0:
        # RT_0 contains only fields of the form b + c x
        A = rng.standard_normal() * np.eye(dim)
    else:
        A = rng.standard_normal((dim, dim))
    b = rng.standard_normal(dim)
    coeffs = space.interpolate(lambda x: x @ A.T + b)
    pts, _ = simplex_rule(dim, 4)
    vals = space.evaluate(coeffs, pts)
    y = space.physical_points(pts).reshape(-1, dim)
    assert np.max(np.abs(vals.reshape(-1, dim) - (y @ A.T + b))) < 1e-11


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("kind", ["RT", "BDM"])
@pytest.mark.parametrize("k", [0, 1])
def test_commuting_diagram(dim, kind, k):
    """div(interpolate(f)) equals the DG projection of div f."""
    mesh = structured_simplicial(dim, 1)
    degree = k if kind == "RT" else k + 1
    space = HdivSpace(mesh, kind, degree)
    dg = DGSpace(mesh, degree if kind == "RT" else degree - 1)
    rng = np.random.default_rng(13)
    A = rng.standard_normal((dim, dim))
    B3 = rng.standard_normal((dim, dim))

    def field(x):
        return (x ** 3) @ A.T + (x ** 2) @ B3.T

    def div_field(x):
        return 3.0 * (x ** 2) @ np.diag(A) + 2.0 * x @ np.diag(B3)

    ci = space.interpolate(field)
    pd = dg.project(div_field)
    pts, wts = simplex_rule(dim, 8)
    _, divs = space.evaluate(ci, pts, divergence=True)
    proj = dg.evaluate(pd, pts)
    dets = mesh.affine_maps()[2]
    err = np.sqrt(np.sum(wts[None] * dets[:, None] * (divs - proj) ** 2))
    assert err < 1e-11


def test_dg_projection_orthogonality():
    """The projection residual is L2-orthogonal to the DG space."""
    mesh = structured_simplicial(2, 3)
    dg = DGSpace(mesh, 1)

    def field(x):
        return np.sin(3 * x[:, 0]) * x[:, 1]

    coeffs = dg.project(field)
    pts, wts = simplex_rule(2, 10)
    vals = dg.tabulate(pts)
    y = dg.physical_points(pts)
    resid = field(y.reshape(-1, 2)).reshape(y.shape[:2]) \
        - dg.evaluate(coeffs, pts)
    dets = mesh.affine_maps()[2]
    inner = np.einsum("c,q,cq,qm->cm", dets, wts, resid, vals)
    assert np.max(np.abs(inner)) < 1e-14


def test_dg_projection_exact_for_members():
    mesh = structured_simplicial(2, 2)
    dg = DGSpace(mesh, 2)

    def field(x):
        return 1.0 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] * x[:, 1]

    coeffs = dg.project(field)
    pts, _ = simplex_rule(2, 6)
    y = dg.physical_points(pts)
    err = dg.evaluate(coeffs, pts) - field(y.reshape(-1, 2)).reshape(y.shape[:2])
    assert np.max(np.abs(err)) < 1e-12

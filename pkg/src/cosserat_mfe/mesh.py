"""Structured simplicial meshes of the unit square and cube.

Cells are positively oriented simplices. Facets carry a global
orientation fixed by the ascending order of their global vertex
indices; each cell stores a sign recording whether its outward normal
on a facet agrees with the global one. This makes H(div) degree-of-
freedom matching sign-exact without per-evaluation negotiation.
"""

from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import factorial, sqrt

import numpy as np


@dataclass(frozen=True)
class Mesh:
    dim: int
    vertices: np.ndarray        # (n_vertices, dim)
    cells: np.ndarray           # (n_cells, dim+1) vertex indices
    facets: np.ndarray          # (n_facets, dim) sorted vertex indices
    cell_facets: np.ndarray     # (n_cells, dim+1) facet indices
    cell_facet_signs: np.ndarray  # (n_cells, dim+1) +-1
    boundary_facet: np.ndarray  # (n_facets,) bool
    region_id: np.ndarray       # (n_cells,) int labels
    n: int = 0                  # cells per axis for structured meshes

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def n_facets(self):
        return self.facets.shape[0]

    @property
    def h(self):
        """Maximum cell diameter (sqrt(dim)/n for structured meshes)."""
        return sqrt(self.dim) / self.n if self.n else self._diameter()

    def _diameter(self):
        coords = self.vertices[self.cells]
        d = 0.0
        for i in range(self.dim + 1):
            for j in range(i + 1, self.dim + 1):
                d = max(d, np.linalg.norm(coords[:, i] - coords[:, j], axis=1).max())
        return d

    def affine_map(self, cell):
        """Jacobian, offset and determinant of the reference-to-cell map.

        The reference simplex is conv{0, e_1, ..., e_d}; det equals
        dim! * volume(cell) and is positive by construction.
        """
        v = self.vertices[self.cells[cell]]
        jac = (v[1:] - v[0]).T
        det = float(np.linalg.det(jac))
        return jac, v[0].copy(), det

    def affine_maps(self):
        """Batched (jacobians, offsets, dets) over all cells."""
        v = self.vertices[self.cells]
        jac = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
        det = np.linalg.det(jac)
        return jac, v[:, 0].copy(), det

    def cell_volumes(self):
        return self.affine_maps()[2] / factorial(self.dim)

    def facet_measures(self):
        v = self.vertices[self.facets]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def facet_normals(self):
        """Unit normals in the global orientation (ascending vertex order)."""
        v = self.vertices[self.facets]
        if self.dim == 2:
            t = v[:, 1] - v[:, 0]
            nrm = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            nrm = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return nrm / np.linalg.norm(nrm, axis=1)[:, None]

    def export_text(self, path):
        """Plain-text dump (vertex list + cell list) for debugging."""
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {len(self.vertices)} {self.n_cells}\n")
            for v in self.vertices:
                fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
            for c in self.cells:
                fh.write(" ".join(str(i) for i in c) + "\n")


def _local_facets(cells, dim):
    """Local facet k of a cell is the one opposite local vertex k."""
    idx = [[j for j in range(dim + 1) if j != k] for k in range(dim + 1)]
    return [cells[:, i] for i in idx]


def _build_connectivity(vertices, cells, dim):
    n_cells = cells.shape[0]
    facet_lookup = {}
    facets = []
    cell_facets = np.zeros((n_cells, dim + 1), dtype=np.int64)
    incidence = []
    locals_ = _local_facets(cells, dim)
    for k in range(dim + 1):
        fk = np.sort(locals_[k], axis=1)
        for c in range(n_cells):
            key = tuple(fk[c])
            fid = facet_lookup.get(key)
            if fid is None:
                fid = len(facets)
                facet_lookup[key] = fid
                facets.append(key)
                incidence.append([])
            cell_facets[c, k] = fid
            incidence[fid].append(c)
    facets = np.array(facets, dtype=np.int64)
    counts = np.array([len(i) for i in incidence])
    if not np.all((counts == 1) | (counts == 2)):
        raise ValueError("broken facet incidence")
    boundary = counts == 1

    # orientation signs: +1 iff cell outward normal matches global normal
    signs = np.zeros((n_cells, dim + 1), dtype=np.int64)
    fv = vertices[facets]
    if dim == 2:
        t = fv[:, 1] - fv[:, 0]
        gnormal = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        gnormal = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
    centroids = vertices[cells].mean(axis=1)
    fcent = fv.mean(axis=1)
    for k in range(dim + 1):
        fid = cell_facets[:, k]
        outward = fcent[fid] - centroids  # points out of the cell at facet k
        dot = np.einsum("ij,ij->i", gnormal[fid], outward)
        signs[:, k] = np.where(dot > 0, 1, -1)
    return facets, cell_facets, signs, boundary


def _orient_positive(vertices, cells):
    v = vertices[cells]
    jac = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
    neg = np.linalg.det(jac) < 0
    cells = cells.copy()
    cells[neg, -2], cells[neg, -1] = cells[neg, -1].copy(), cells[neg, -2].copy()
    return cells


def structured_simplicial(dim, n):
    """Uniform simplicial mesh of the unit d-cube with n cells per axis.

    Each grid box is split into 2 triangles (dim=2) or 6 tetrahedra via
    the Kuhn subdivision (dim=3). Vertex and cell ordering are
    deterministic.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    axis = np.linspace(0.0, 1.0, n + 1)
    if dim == 2:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

        def vid(i, j):
            return i * (n + 1) + j

        cells = []
        for i in range(n):
            for j in range(n):
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                cells.append((a, b, c))
                cells.append((a, c, d))
        cells = np.array(cells, dtype=np.int64)
    else:
        X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
        vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

        def vid(i, j, k):
            return (i * (n + 1) + j) * (n + 1) + k

        # Kuhn subdivision: one tet per axis permutation
        perms = sorted(permutations(range(3)))
        cells = []
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    base = np.array([i, j, k])
                    for p in perms:
                        corners = [base.copy()]
                        cur = base.copy()
                        for ax in p:
                            cur = cur.copy()
                            cur[ax] += 1
                            corners.append(cur)
                        cells.append([vid(*c) for c in corners])
        cells = np.array(cells, dtype=np.int64)
    cells = _orient_positive(vertices, cells)
    facets, cell_facets, signs, boundary = _build_connectivity(vertices, cells, dim)
    region = np.zeros(cells.shape[0], dtype=np.int64)
    return Mesh(dim, vertices, cells, facets, cell_facets, signs, boundary,
                region, n=n)

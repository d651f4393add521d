"""Degrees of freedom of the nonconforming virtual element space.

Local DOF order on a cell: for each local edge (in the cell's vertex order)
the ``k`` scaled edge moments of orders ``0..k-1``, then the ``k(k-1)/2``
scaled cell moments against the degree ``k-2`` scaled monomials.

Edge moments are taken against ``s**j`` with
``s = (x - x_e) . t_e / h_e`` and ``t_e`` pointing from the lower to the
higher global vertex id, so both neighbours of an interior edge agree on the
sign of odd moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import ScaledMonomialBasis, edge_monomials, n_poly
from .mesh import CellGeometry, PolyMesh, cell_geometry
from .quadrature import cell_rule, gauss_legendre


def local_dof_count(n_edges: int, k: int) -> int:
    if k < 1:
        raise ValueError(f"order k must be >= 1, got {k}")
    if n_edges < 3:
        raise ValueError("a polygon has at least 3 edges")
    return n_edges * k + (k - 1) * k // 2


def n_cell_dofs(k: int) -> int:
    return (k - 1) * k // 2


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering: all edge DOFs (edge-major) then all cell DOFs."""

    k: int
    n_edges: int
    n_cells: int
    cell_dofs: tuple
    boundary_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.n_edges * self.k + self.n_cells * n_cell_dofs(self.k)

    def edge_dofs(self, e: int) -> np.ndarray:
        return e * self.k + np.arange(self.k)

    def interior_cell_dofs(self, c: int) -> np.ndarray:
        nc = n_cell_dofs(self.k)
        return self.n_edges * self.k + c * nc + np.arange(nc)


def build_dof_map(mesh: PolyMesh, k: int) -> DofMap:
    if k < 1:
        raise ValueError(f"order k must be >= 1, got {k}")
    nc = n_cell_dofs(k)
    ne = mesh.n_edges
    cells = []
    for c, edges in enumerate(mesh.cell_edges):
        ids = (edges[:, None] * k + np.arange(k)).ravel()
        ids = np.concatenate([ids, ne * k + c * nc + np.arange(nc)])
        ids.flags.writeable = False
        cells.append(ids)
    bnd = (mesh.boundary_edges[:, None] * k + np.arange(k)).ravel()
    bnd.flags.writeable = False
    return DofMap(k, ne, mesh.n_cells, tuple(cells), bnd)


# ---------------------------------------------------------------------------
# moments

def edge_points(geom: CellGeometry, i: int, degree: int):
    """Gauss points on local edge ``i``: (points, edge parameters s, weights)."""
    t, w = gauss_legendre(degree)
    s = t - 0.5
    h = geom.edge_lengths[i]
    pts = geom.edge_midpoints[i] + (s * h)[:, None] * geom.edge_tangents[i]
    return pts, s, w * h


def edge_moments(func, a_mid, tangent, length, k: int, degree: int):
    """(1/|e|) int_e f s^j ds for j < k, ``func`` vectorized over (n, 2) points."""
    t, w = gauss_legendre(degree)
    s = t - 0.5
    pts = a_mid + (s * length)[:, None] * tangent
    vals = np.asarray(func(pts), dtype=float)
    return (w * vals) @ edge_monomials(s, k - 1)


def cell_basis(geom: CellGeometry, degree: int) -> ScaledMonomialBasis:
    return ScaledMonomialBasis(geom.centroid, geom.diameter, degree)


def dofs_of_function(geom: CellGeometry, k: int, func, degree: int) -> np.ndarray:
    """Local DOF vector of a point function, moments integrated exactly to ``degree``."""
    out = []
    for i in range(geom.n_edges):
        out.append(edge_moments(func, geom.edge_midpoints[i], geom.edge_tangents[i],
                                geom.edge_lengths[i], k, degree + k - 1))
    if k >= 2:
        rule = cell_rule(geom.vertices, geom.centroid, degree + k - 2)
        m = cell_basis(geom, k - 2).eval(rule.points)
        vals = np.asarray(func(rule.points), dtype=float)
        out.append((rule.weights * vals) @ m / geom.area)
    return np.concatenate(out)


def dofs_of_polynomial(geom: CellGeometry, k: int, coeffs) -> np.ndarray:
    """Local DOFs of the polynomial with scaled-monomial coefficients ``coeffs``.

    The coefficients refer to the cell's own basis and may have any complete
    degree; moments use quadrature of degree ``deg(p) + k``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    deg = 0
    while n_poly(deg) < len(coeffs):
        deg += 1
    full = np.zeros(n_poly(deg))
    full[: len(coeffs)] = coeffs
    basis = cell_basis(geom, deg)
    return dofs_of_function(geom, k, lambda p: basis.eval(p) @ full, deg + 1)


def dof_matrix(geom: CellGeometry, k: int, degree: int | None = None) -> np.ndarray:
    """D[i, j] = dof_i(m_j) for the scaled monomials of ``degree`` (default k)."""
    degree = k if degree is None else degree
    basis = cell_basis(geom, degree)
    cols = []
    for i in range(geom.n_edges):
        pts, s, w = edge_points(geom, i, degree + k - 1)
        m = basis.eval(pts)
        cols.append((edge_monomials(s, k - 1) * (w / geom.edge_lengths[i])[:, None]).T @ m)
    if k >= 2:
        rule = cell_rule(geom.vertices, geom.centroid, degree + k - 2)
        m = basis.eval(rule.points)
        mk2 = cell_basis(geom, k - 2).eval(rule.points)
        cols.append((mk2 * rule.weights[:, None]).T @ m / geom.area)
    return np.vstack(cols)


# ---------------------------------------------------------------------------
# global interpolation and boundary data

def _edge_data(mesh: PolyMesh, e: int):
    v0, v1 = mesh.edges[e, 0], mesh.edges[e, 1]
    lo, hi = (v0, v1) if v0 < v1 else (v1, v0)
    a, b = mesh.vertices[lo], mesh.vertices[hi]
    length = float(np.hypot(*(b - a)))
    return 0.5 * (a + b), (b - a) / length, length


def interpolate_dofs(mesh: PolyMesh, k: int, func, dofmap: DofMap | None = None,
                     degree: int | None = None) -> np.ndarray:
    """Global DOF vector whose every DOF is the matching moment of ``func``."""
    dofmap = dofmap or build_dof_map(mesh, k)
    degree = 2 * k + 6 if degree is None else degree
    out = np.empty(dofmap.n_dofs)
    for e in range(mesh.n_edges):
        mid, t, h = _edge_data(mesh, e)
        out[dofmap.edge_dofs(e)] = edge_moments(func, mid, t, h, k, degree)
    if k >= 2:
        for c in range(mesh.n_cells):
            geom = cell_geometry(mesh, c)
            rule = cell_rule(geom.vertices, geom.centroid, degree)
            m = cell_basis(geom, k - 2).eval(rule.points)
            vals = np.asarray(func(rule.points), dtype=float)
            out[dofmap.interior_cell_dofs(c)] = (rule.weights * vals) @ m / geom.area
    return out


def dirichlet_values(mesh: PolyMesh, k: int, u_b, dofmap: DofMap | None = None,
                     degree: int | None = None):
    """Boundary DOF ids and the edge moments of ``u_b`` on them."""
    dofmap = dofmap or build_dof_map(mesh, k)
    degree = 2 * k + 6 if degree is None else degree
    ids = []
    vals = []
    for e in mesh.boundary_edges:
        mid, t, h = _edge_data(mesh, int(e))
        ids.append(dofmap.edge_dofs(int(e)))
        vals.append(edge_moments(u_b, mid, t, h, k, degree))
    if not ids:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(ids), np.concatenate(vals)

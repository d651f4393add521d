"""Polynomial projections of virtual functions, computed from DOFs only.

All maps act on local DOF vectors and return coefficient vectors in the
cell's scaled monomial basis (center x_T, scale h_T).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import diff_matrix, edge_monomials, laplacian_matrix, n_poly
from .mesh import CellGeometry
from .quadrature import QuadRule, cell_rule, gauss_legendre
from .space import cell_basis, dof_matrix, n_cell_dofs

log = logging.getLogger(__name__)

GRAM_COND_LIMIT = 1e12


class ProjectorError(RuntimeError):
    def __init__(self, message, cell_id=None):
        self.cell_id = cell_id
        super().__init__(f"cell {cell_id}: {message}" if cell_id is not None else message)


def pivoted_solve(A, B):
    """Solve A X = B through a column-pivoted QR factorization."""
    Q, R, piv = sla.qr(A, pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= 1e-14 * diag.max():
        raise np.linalg.LinAlgError("singular matrix")
    Y = sla.solve_triangular(R, Q.T @ B)
    X = np.empty_like(Y)
    X[piv] = Y
    return X


def _gram_solve(H, B, what, cell_id):
    if H.size == 0:
        return np.zeros((0, B.shape[1]))
    cond = np.linalg.cond(H)
    if cond > GRAM_COND_LIMIT:
        warnings.warn(f"cell {cell_id}: {what} Gram matrix condition {cond:.3g}",
                      RuntimeWarning, stacklevel=3)
    try:
        return pivoted_solve(H, B)
    except np.linalg.LinAlgError as exc:
        raise ProjectorError(f"singular {what} system", cell_id) from exc


def edge_restriction(geom: CellGeometry, i: int, degree: int):
    """Map cell coefficients of P^degree to the edge monomials s^j on edge i."""
    n = degree + 1
    t, _ = gauss_legendre(2 * degree)
    s = t - 0.5
    pts = geom.edge_midpoints[i] + (s * geom.edge_lengths[i])[:, None] * geom.edge_tangents[i]
    V = edge_monomials(s, degree)
    M = cell_basis(geom, degree).eval(pts)
    assert len(s) == n
    return np.linalg.solve(V, M)


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Projection matrices of one cell.

    ``P_nabla``, ``P_l2``: degree-k coefficients from DOFs.
    ``P_gx``, ``P_gy``: degree-(k-1) coefficients of the L2 projection of the
    gradient components.  ``L_poly``: degree-max(k-2, 0) coefficients of the
    Laplacian of the elliptic projection.  ``D``: DOFs of the degree-k
    monomials.  ``H_k``, ``H_km1``: scaled monomial mass matrices.
    """

    k: int
    geom: CellGeometry
    D: np.ndarray
    P_nabla: np.ndarray
    P_l2: np.ndarray
    P_gx: np.ndarray
    P_gy: np.ndarray
    L_poly: np.ndarray
    H_k: np.ndarray
    H_km1: np.ndarray
    G: np.ndarray
    rule: QuadRule

    @property
    def n_dofs(self) -> int:
        return self.D.shape[0]

    def stabilizer_remainder(self) -> np.ndarray:
        """S = I - D P_l2: DOFs of (I - Pi_k) v."""
        return np.eye(self.n_dofs) - self.D @ self.P_l2

    def dof_scaling(self) -> np.ndarray:
        """1 / max_j |D[i, j]|: normalizes each DOF to its largest monomial
        response, so higher edge moments (which scale like 1/12, 1/80, ...)
        are not under-weighted in the stabilizers."""
        return 1.0 / np.abs(self.D).max(axis=1)

    def stability_norm(self) -> float:
        """Operator norm of Pi^nabla from row-normalized DOFs to the
        area-averaged L2 norm; O(1) on shape-regular cells."""
        X = self.P_nabla / self.dof_scaling()[None, :]
        L = np.linalg.cholesky(self.H_k / self.geom.area)
        return float(np.linalg.norm(L.T @ X, 2))

    def stabilizer_kernel(self) -> np.ndarray:
        """Symmetric PSD matrix (R S)^T (R S) shared by all stabilizers."""
        RS = self.dof_scaling()[:, None] * self.stabilizer_remainder()
        K = RS.T @ RS
        return 0.5 * (K + K.T)


def _cell_dof_offset(geom, k):
    return geom.n_edges * k


def build_pi_nabla(geom: CellGeometry, k: int, D=None, H_km1=None):
    """Elliptic projection onto P^k, fixed by the cell average (k >= 2) or the
    mean of the order-0 edge moments (k = 1).  Returns (P_nabla, G)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    h = geom.diameter
    nk = n_poly(k)
    ndof = geom.n_edges * k + n_cell_dofs(k)
    D = dof_matrix(geom, k) if D is None else D
    if H_km1 is None:
        H_km1 = mass_matrix(geom, k - 1)
    Dx = diff_matrix(k, 0, h)
    Dy = diff_matrix(k, 1, h)
    G = Dx.T @ H_km1 @ Dx + Dy.T @ H_km1 @ Dy
    B = np.zeros((nk, ndof))
    off = _cell_dof_offset(geom, k)
    if k >= 2:
        L = laplacian_matrix(k, h)
        B[:, off:off + n_cell_dofs(k)] -= geom.area * L.T
    for i in range(geom.n_edges):
        n = geom.edge_normals[i]
        dn = n[0] * Dx + n[1] * Dy
        R = edge_restriction(geom, i, k - 1)
        B[:, i * k:(i + 1) * k] += geom.edge_lengths[i] * (R @ dn).T
    Gt = G.copy()
    if k >= 2:
        Gt[0] = D[off]
        B[0] = 0.0
        B[0, off] = 1.0
    else:
        rows = np.arange(geom.n_edges) * k
        Gt[0] = D[rows].mean(axis=0)
        B[0] = 0.0
        B[0, rows] = 1.0 / geom.n_edges
    try:
        P = pivoted_solve(Gt, B)
    except np.linalg.LinAlgError as exc:
        raise ProjectorError("singular elliptic projection system", geom.cell_id) from exc
    return P, G


def mass_matrix(geom: CellGeometry, degree: int, rule: QuadRule | None = None):
    if degree < 0:
        return np.zeros((0, 0))
    if rule is None:
        rule = cell_rule(geom.vertices, geom.centroid, 2 * degree)
    m = cell_basis(geom, degree).eval(rule.points)
    return (m * rule.weights[:, None]).T @ m


def build_pi_l2(geom: CellGeometry, k: int, P_nabla, H_k):
    """L2 projection onto P^k: moments up to degree k-2 are DOFs, the rest are
    moments of the elliptic projection."""
    nk = n_poly(k)
    nlow = n_poly(k - 2)
    C = H_k @ P_nabla
    off = _cell_dof_offset(geom, k)
    C[:nlow] = 0.0
    C[np.arange(nlow), off + np.arange(nlow)] = geom.area
    assert C.shape[0] == nk
    return _gram_solve(H_k, C, "degree-k mass", geom.cell_id)


def build_pi_grad(geom: CellGeometry, k: int, H_km1):
    """L2 projection of the gradient onto (P^(k-1))^2, by integration by parts:
    int grad(v) q = -int v grad(q) + int_dT v q n."""
    h = geom.diameter
    nq = n_poly(k - 1)
    ndof = geom.n_edges * k + n_cell_dofs(k)
    off = _cell_dof_offset(geom, k)
    out = []
    for axis in (0, 1):
        E = np.zeros((nq, ndof))
        if k >= 2:
            Dq = diff_matrix(k - 1, axis, h)  # P^(k-1) -> P^(k-2)
            E[:, off:off + n_cell_dofs(k)] -= geom.area * Dq.T
        for i in range(geom.n_edges):
            R = edge_restriction(geom, i, k - 1)
            E[:, i * k:(i + 1) * k] += geom.edge_normals[i, axis] * geom.edge_lengths[i] * R.T
        out.append(_gram_solve(H_km1, E, "degree-(k-1) mass", geom.cell_id))
    return out[0], out[1]


def laplacian_poly(geom: CellGeometry, k: int, P_nabla):
    """Laplacian of the elliptic projection, as degree max(k-2, 0) coefficients."""
    if k < 2:
        return np.zeros((1, P_nabla.shape[1]))
    return laplacian_matrix(k, geom.diameter) @ P_nabla


def build_projectors(geom: CellGeometry, k: int, quad_degree: int | None = None) -> ProjectorSet:
    """All projection matrices of a cell; ``quad_degree`` sets the attached
    assembly rule (default 2k+2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    quad_degree = 2 * k + 2 if quad_degree is None else quad_degree
    rule = cell_rule(geom.vertices, geom.centroid, max(quad_degree, 2 * k))
    D = dof_matrix(geom, k)
    H_k = mass_matrix(geom, k, rule)
    H_km1 = H_k[: n_poly(k - 1), : n_poly(k - 1)]
    P_nabla, G = build_pi_nabla(geom, k, D, H_km1)
    P_l2 = build_pi_l2(geom, k, P_nabla, H_k)
    P_gx, P_gy = build_pi_grad(geom, k, H_km1)
    L_poly = laplacian_poly(geom, k, P_nabla)
    for a in (D, P_nabla, P_l2, P_gx, P_gy, L_poly, H_k, H_km1, G):
        a.flags.writeable = False
    return ProjectorSet(k, geom, D, P_nabla, P_l2, P_gx, P_gy, L_poly,
                        H_k, H_km1, G, rule)

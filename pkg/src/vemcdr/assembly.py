"""Global assembly, Dirichlet elimination and linear solvers."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import (CoefficientSet, LocalForms, StabilizationConfig, local_matrix,
                    sample_coefficients)
from .mesh import PolyMesh, cell_geometry
from .projectors import ProjectorError, ProjectorSet, build_projectors
from .space import DofMap, build_dof_map, dirichlet_values

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (best relative residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class Discretization:
    """Mesh, order, DOF map and per-cell projectors; independent of the data."""

    mesh: PolyMesh
    k: int
    dofmap: DofMap
    projectors: tuple

    @classmethod
    def build(cls, mesh: PolyMesh, k: int, threads: int = 1) -> "Discretization":
        def one(c):
            try:
                return build_projectors(cell_geometry(mesh, c), k)
            except ProjectorError:
                raise
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise ProjectorError(str(exc), c) from exc

        cells = range(mesh.n_cells)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                projs = tuple(pool.map(one, cells))
        else:
            projs = tuple(one(c) for c in cells)
        return cls(mesh, k, build_dof_map(mesh, k), projs)

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Sparse system; after :func:`apply_dirichlet` the original operator is kept
    in ``original_matrix`` / ``original_rhs`` for residual checks."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: dict = field(default_factory=dict)
    original_matrix: sp.csr_matrix | None = None
    original_rhs: np.ndarray | None = None
    deltas: np.ndarray | None = None
    disc: Discretization | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def local_forms(disc: Discretization, coeffs: CoefficientSet, config: StabilizationConfig,
                threads: int = 1) -> list[LocalForms]:
    def one(proj: ProjectorSet):
        return local_matrix(proj, coeffs, config, sample_coefficients(proj, coeffs))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            forms = list(pool.map(one, disc.projectors))
    else:
        forms = [one(p) for p in disc.projectors]
    return forms


def assemble(mesh: PolyMesh, k: int, coeffs: CoefficientSet, config: StabilizationConfig,
             disc: Discretization | None = None, threads: int = 1) -> LinearSystem:
    """Scatter-add the local forms in ascending cell order."""
    disc = disc if disc is not None else Discretization.build(mesh, k, threads)
    if disc.mesh is not mesh or disc.k != k:
        raise ValueError("discretization does not match mesh/k")
    margin = min(sample_coefficients(p, coeffs).coercivity_margin for p in disc.projectors)
    if margin < coeffs.c0 - 1e-10:
        warnings.warn(f"c - div(b)/2 reaches {margin:.3g}, below c0 = {coeffs.c0}",
                      RuntimeWarning, stacklevel=2)
    forms = local_forms(disc, coeffs, config, threads)
    rows, cols, vals = [], [], []
    N = disc.n_dofs
    F = np.zeros(N)
    for ids, lf in zip(disc.dofmap.cell_dofs, forms):
        n = len(ids)
        rows.append(np.repeat(ids, n))
        cols.append(np.tile(ids, n))
        vals.append(lf.A_loc.ravel())
        np.add.at(F, ids, lf.F_loc)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    deltas = np.array([lf.delta_T for lf in forms])
    log.debug("assembled %d dofs, %d nonzeros", N, A.nnz)
    return LinearSystem(A, F, deltas=deltas, disc=disc)


def apply_dirichlet(system: LinearSystem, ids, values) -> LinearSystem:
    """Eliminate constrained DOFs: identity rows, columns moved to the rhs."""
    ids = np.asarray(ids, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    N = system.n
    if ids.size and (ids.min() < 0 or ids.max() >= N):
        raise IndexError("constrained DOF id out of range")
    if len(ids) != len(values):
        raise ValueError("ids and values differ in length")
    A = system.matrix.tocsr()
    g = np.zeros(N)
    g[ids] = values
    mask = np.zeros(N, dtype=bool)
    mask[ids] = True
    keep = sp.diags((~mask).astype(float))
    rhs = system.rhs - A @ g
    rhs[mask] = g[mask]
    Ac = (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()
    Ac.sort_indices()
    constrained = dict(system.constrained)
    constrained.update(zip(ids.tolist(), values.tolist()))
    return replace(system, matrix=Ac, rhs=rhs, constrained=constrained,
                   original_matrix=system.original_matrix if system.original_matrix is not None else A,
                   original_rhs=system.original_rhs if system.original_rhs is not None else system.rhs)


def assemble_problem(mesh: PolyMesh, k: int, coeffs: CoefficientSet, config: StabilizationConfig,
                     disc: Discretization | None = None, threads: int = 1) -> LinearSystem:
    """Assemble and constrain the boundary edge moments to those of ``u_b``."""
    sysm = assemble(mesh, k, coeffs, config, disc, threads)
    ids, vals = dirichlet_values(mesh, k, lambda p: coeffs.u_b(p[:, 0], p[:, 1]),
                                 sysm.disc.dofmap)
    return apply_dirichlet(sysm, ids, vals)


@dataclass(frozen=True)
class SolveStats:
    method: str
    iterations: int
    residual: float
    fill: float


SOLVERS = ("direct", "bicgstab", "gmres")


def solve(system: LinearSystem, method: str = "direct", tol: float = 1e-10,
          max_iter: int | None = None):
    """Return (solution, SolveStats)."""
    if method not in SOLVERS:
        raise ValueError(f"unknown solver {method!r}")
    A = system.matrix.tocsc()
    b = system.rhs
    bnorm = np.linalg.norm(b)
    scale = bnorm if bnorm > 0 else 1.0
    if bnorm == 0:
        return np.zeros_like(b), SolveStats(method, 0, 0.0, 0.0)
    if method == "direct":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(A)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SolverError(f"sparse LU failed: {exc}") from exc
        u = lu.solve(b)
        fill = (lu.L.nnz + lu.U.nnz) / max(A.nnz, 1)
        iters = 0
    else:
        try:
            ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        except RuntimeError as exc:
            raise SolverError(f"incomplete LU failed: {exc}") from exc
        M = spla.LinearOperator(A.shape, ilu.solve)
        fill = (ilu.L.nnz + ilu.U.nnz) / max(A.nnz, 1)
        count = [0]

        def cb(*_):
            count[0] += 1

        maxiter = max_iter or 10 * A.shape[0]
        if method == "bicgstab":
            u, info = spla.bicgstab(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
        else:
            u, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=min(A.shape[0], 100),
                                 maxiter=maxiter, M=M, callback=cb, callback_type="pr_norm")
        iters = count[0]
        if info < 0:
            raise SolverError(f"{method} breakdown (info={info})")
        if info > 0:
            res = np.linalg.norm(b - A @ u) / scale
            raise NonConvergenceError(f"{method} hit the iteration cap {maxiter}", res)
    if not np.all(np.isfinite(u)):
        raise SolverError("solution contains non-finite entries")
    res = float(np.linalg.norm(b - A @ u) / scale)
    if res > 10 * tol:
        raise NonConvergenceError(f"{method} residual above 10*tol", res)
    return u, SolveStats(method, iters, res, float(fill))


def write_matrix_market(path, matrix) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), field="real", symmetry="general")

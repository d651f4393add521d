"""Error norms, manufactured-solution studies and the boundary-layer probe.

Virtual functions are only known through their projections, so every error
is measured on a polynomial surrogate: ``Pi^nabla_k u_h`` for the gradient,
``Pi_k u_h`` for values and ``Pi_{k-1} grad u_h`` for the streamline term.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import Discretization, LinearSystem, assemble_problem, solve
from .basis import n_poly
from .forms import CoefficientSet, StabilizationConfig, sample_coefficients
from .mesh import PolyMesh, QualityReport, generate_mesh, quality_report
from .quadrature import cell_rule, edge_rule
from .space import cell_basis

log = logging.getLogger(__name__)

CSV_HEADER = "level,h_max,ndof,err_L2,err_H1,err_triple,rate_L2,rate_H1,rate_triple"

K1_CONVECTION_FLAG = ("k=1 is not expected to converge for convection-dominated "
                      "problems; rates are reported for information only")


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    ux: Callable
    uy: Callable


@dataclass(frozen=True)
class ErrorReport:
    err_L2: float
    err_H1: float
    err_triple: float
    part_diffusion: float
    part_reaction: float
    part_streamline: float
    ndof: int
    h_max: float

    @property
    def parts(self):
        return (self.part_diffusion, self.part_reaction, self.part_streamline)


@dataclass(frozen=True)
class Solution:
    u_h: np.ndarray
    disc: Discretization
    system: LinearSystem
    stats: object
    coeffs: CoefficientSet
    config: StabilizationConfig

    @property
    def deltas(self):
        return self.system.deltas


def solve_problem(mesh: PolyMesh, k: int, coeffs: CoefficientSet,
                  config: StabilizationConfig | None = None, method: str = "direct",
                  tol: float = 1e-10, max_iter=None, disc: Discretization | None = None,
                  threads: int = 1) -> Solution:
    config = config or StabilizationConfig()
    disc = disc or Discretization.build(mesh, k, threads)
    system = assemble_problem(mesh, k, coeffs, config, disc, threads)
    u_h, stats = solve(system, method, tol, max_iter)
    return Solution(u_h, disc, system, stats, coeffs, config)


def _zero(x, y):
    return np.zeros(np.shape(x))


ZERO_SOLUTION = ExactSolution(_zero, _zero, _zero)


def compute_errors(disc: Discretization, u_h, exact: ExactSolution | None,
                   coeffs: CoefficientSet, deltas, quad_degree: int | None = None) -> ErrorReport:
    """Broken L2, H1-seminorm and mesh-dependent norm errors of ``u_h``."""
    if exact is None or not all(callable(getattr(exact, a, None)) for a in ("u", "ux", "uy")):
        raise ValueError("exact solution with u, ux and uy is required")
    k = disc.k
    qd = 2 * k + 4 if quad_degree is None else quad_degree
    eps, c0 = coeffs.epsilon, coeffs.c0
    l2, h1, st = [], [], []
    for proj, ids, dT in zip(disc.projectors, disc.dofmap.cell_dofs, deltas):
        g = proj.geom
        rule = cell_rule(g.vertices, g.centroid, qd)
        x, y = rule.points[:, 0], rule.points[:, 1]
        w = rule.weights
        v = u_h[ids]
        basis = cell_basis(g, k)
        pn = proj.P_nabla @ v
        grad = np.einsum("qjd,j->qd", basis.eval_grad(rule.points), pn)
        ex_u, ex_x, ex_y = exact.u(x, y), exact.ux(x, y), exact.uy(x, y)
        h1.append(float(np.dot(w, (ex_x - grad[:, 0]) ** 2 + (ex_y - grad[:, 1]) ** 2)))
        val = basis.eval(rule.points) @ (proj.P_l2 @ v)
        l2.append(float(np.dot(w, (ex_u - val) ** 2)))
        if dT > 0:
            m1 = basis.eval(rule.points)[:, : n_poly(k - 1)]
            gx, gy = m1 @ (proj.P_gx @ v), m1 @ (proj.P_gy @ v)
            bx = np.broadcast_to(coeffs.bx(x, y), x.shape)
            by = np.broadcast_to(coeffs.by(x, y), x.shape)
            st.append(dT * float(np.dot(w, (bx * (ex_x - gx) + by * (ex_y - gy)) ** 2)))
    H1sq, L2sq = math.fsum(h1), math.fsum(l2)
    pd, pr, ps = eps * H1sq, c0 * L2sq, math.fsum(st)
    return ErrorReport(math.sqrt(L2sq), math.sqrt(H1sq), math.sqrt(pd + pr + ps),
                       pd, pr, ps, disc.n_dofs, disc.mesh.h_max())


def triple_norm_matrix(disc: Discretization, coeffs: CoefficientSet, deltas) -> sp.csr_matrix:
    """Global Gram matrix N with v^T N v = |||v|||^2 on the projected surrogates."""
    k = disc.k
    rows, cols, vals = [], [], []
    for proj, ids, dT in zip(disc.projectors, disc.dofmap.cell_dofs, deltas):
        w = proj.rule.weights
        Nloc = coeffs.epsilon * proj.P_nabla.T @ proj.G @ proj.P_nabla
        Nloc = Nloc + coeffs.c0 * proj.P_l2.T @ proj.H_k @ proj.P_l2
        if dT > 0:
            s = sample_coefficients(proj, coeffs)
            m1 = cell_basis(proj.geom, k - 1).eval(proj.rule.points)
            Gb = s.bx[:, None] * (m1 @ proj.P_gx) + s.by[:, None] * (m1 @ proj.P_gy)
            Nloc = Nloc + dT * (Gb * w[:, None]).T @ Gb
        n = len(ids)
        rows.append(np.repeat(ids, n))
        cols.append(np.tile(ids, n))
        vals.append(Nloc.ravel())
    N = disc.n_dofs
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N)).tocsr()


# ---------------------------------------------------------------------------
# convergence studies

@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    h_max: float
    ndof: int
    err_L2: float
    err_H1: float
    err_triple: float
    rate_L2: float | None = None
    rate_H1: float | None = None
    rate_triple: float | None = None


@dataclass(frozen=True)
class StudyConfig:
    coeffs: CoefficientSet
    exact: ExactSolution
    k: int = 2
    mesh_kind: str = "quad"
    n0: int = 4
    levels: int = 4
    perturb: float = 0.0
    seed: int = 0
    stab: StabilizationConfig = field(default_factory=StabilizationConfig)
    solver: str = "direct"
    tol: float = 1e-10
    max_iter: int | None = None
    threads: int = 1

    def __post_init__(self):
        if not 1 <= self.k <= 4:
            raise ValueError("k must lie in [1, 4]")
        if not 1 <= self.levels <= 8:
            raise ValueError("levels must lie in [1, 8]")


@dataclass
class StudyResult:
    rows: list
    quality: list
    flags: list
    deltas: list

    def csv(self) -> str:
        return rows_to_csv(self.rows)


class StudyError(RuntimeError):
    def __init__(self, level, cause):
        self.level = level
        super().__init__(f"level {level}: {cause}")


def rates(errors, hs):
    out = [None]
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 > 0 and e1 > 0 and hs[i - 1] != hs[i]:
            out.append(math.log(e0 / e1) / math.log(hs[i - 1] / hs[i]))
        else:
            out.append(float("nan"))
    return out


def mesh_peclet(mesh_or_disc, coeffs: CoefficientSet) -> float:
    disc = mesh_or_disc
    pe = 0.0
    for proj in disc.projectors:
        s = sample_coefficients(proj, coeffs)
        pe = max(pe, s.b_max * proj.geom.diameter / (2.0 * coeffs.epsilon))
    return pe


def convergence_study(cfg: StudyConfig) -> StudyResult:
    """Solve on ``levels`` meshes with ``n0 * 2**level`` cells per direction."""
    reports, quality, deltas = [], [], []
    flags = []
    convection_dominated = False
    for lev in range(cfg.levels):
        n = cfg.n0 * 2 ** lev
        try:
            mesh = generate_mesh(cfg.mesh_kind, n, n, cfg.perturb, cfg.seed)
            quality.append(quality_report(mesh))
            sol = solve_problem(mesh, cfg.k, cfg.coeffs, cfg.stab, cfg.solver, cfg.tol,
                                cfg.max_iter, threads=cfg.threads)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            raise StudyError(lev + 1, exc) from exc
        if mesh_peclet(sol.disc, cfg.coeffs) > 1.0:
            convection_dominated = True
        deltas.append(sol.deltas)
        reports.append(compute_errors(sol.disc, sol.u_h, cfg.exact, cfg.coeffs, sol.deltas))
        log.info("level %d: h=%.4g ndof=%d L2=%.3e H1=%.3e triple=%.3e", lev + 1,
                 reports[-1].h_max, reports[-1].ndof, reports[-1].err_L2,
                 reports[-1].err_H1, reports[-1].err_triple)
    if cfg.k == 1 and convection_dominated:
        flags.append(K1_CONVECTION_FLAG)
        log.warning(K1_CONVECTION_FLAG)
    return StudyResult(build_rows(reports), quality, flags, deltas)


def build_rows(reports) -> list[ConvergenceRow]:
    hs = [r.h_max for r in reports]
    rl2 = rates([r.err_L2 for r in reports], hs)
    rh1 = rates([r.err_H1 for r in reports], hs)
    rtr = rates([r.err_triple for r in reports], hs)
    return [ConvergenceRow(i + 1, r.h_max, r.ndof, r.err_L2, r.err_H1, r.err_triple,
                           rl2[i], rh1[i], rtr[i]) for i, r in enumerate(reports)]


def _fmt(x):
    return "" if x is None else f"{x:.17g}"


def rows_to_csv(rows) -> str:
    out = io.StringIO(newline="")
    out.write(CSV_HEADER + "\n")
    for r in rows:
        out.write(",".join([str(r.level), _fmt(r.h_max), str(r.ndof), _fmt(r.err_L2),
                            _fmt(r.err_H1), _fmt(r.err_triple), _fmt(r.rate_L2),
                            _fmt(r.rate_H1), _fmt(r.rate_triple)]) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# oscillation probe

def max_principle_bound(disc: Discretization, coeffs: CoefficientSet) -> float:
    """max(|u_b| on the boundary, |f| / min c) when c > 0, else max |u_b|."""
    mesh = disc.mesh
    ub = 0.0
    for e in mesh.boundary_edges:
        v0, v1 = mesh.edges[e, :2]
        r = edge_rule(mesh.vertices[v0], mesh.vertices[v1], 2 * disc.k + 4)
        ub = max(ub, float(np.abs(coeffs.u_b(r.points[:, 0], r.points[:, 1])).max()))
    cmin, fmax = math.inf, 0.0
    for proj in disc.projectors:
        s = sample_coefficients(proj, coeffs)
        cmin = min(cmin, float(s.c.min()))
        fmax = max(fmax, float(np.abs(s.f).max()))
    if cmin > 0:
        return max(ub, fmax / cmin)
    return ub


def oscillation_probe(disc: Discretization, u_h, region, coeffs: CoefficientSet,
                      bound: float | None = None) -> float:
    """max |Pi^nabla u_h| over rule points in ``region = (x0, x1, y0, y1)`` minus
    the maximum-principle bound; positive values are overshoot."""
    x0, x1, y0, y1 = region
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty probe region")
    bound = max_principle_bound(disc, coeffs) if bound is None else bound
    peak = -math.inf
    for proj, ids in zip(disc.projectors, disc.dofmap.cell_dofs):
        pts = proj.rule.points
        inside = ((pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1))
        if not inside.any():
            continue
        vals = cell_basis(proj.geom, disc.k).eval(pts[inside]) @ (proj.P_nabla @ u_h[ids])
        peak = max(peak, float(np.abs(vals).max()))
    if peak == -math.inf:
        raise ValueError("probe region contains no quadrature points")
    return peak - bound

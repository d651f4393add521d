"""Command-line entry point: ``vemcdr {solve,convergence,project,mesh}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .assembly import SOLVERS, Discretization, SolverError
from .basis import exponents
from .config import ConfigError, MeshSpec, RunConfig, load_config
from .expr import EvalError
from .forms import DELTA_MODES, local_matrix, sample_coefficients
from .harness import (StudyConfig, StudyError, compute_errors, convergence_study,
                      solve_problem)
from .mesh import MESH_KINDS, MeshError, quality_report, read_mesh, write_mesh
from .projectors import ProjectorError

log = logging.getLogger("vemcdr")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="run configuration file")
    p.add_argument("--out", type=Path, help="output path")
    p.add_argument("--k", type=int, help="polynomial order (1-4)")
    p.add_argument("--threads", type=int, help="worker threads for per-cell work")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--tol", type=float)
    p.add_argument("--delta-mode", choices=DELTA_MODES)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vemcdr", description="Nonconforming VEM solver for "
                     "convection-diffusion-reaction problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve once and write DOFs and cell polynomials")
    _common(p)

    p = sub.add_parser("convergence", help="run a refinement study and write CSV")
    _common(p)

    p = sub.add_parser("project", help="dump per-cell projector and form matrices")
    _common(p)
    p.add_argument("--cell", type=int, action="append", help="cell id (repeatable)")

    p = sub.add_parser("mesh", help="generate, inspect or convert meshes")
    p.add_argument("--kind", choices=MESH_KINDS, default="quad")
    p.add_argument("--nx", type=int, default=4)
    p.add_argument("--ny", type=int, default=4)
    p.add_argument("--perturb", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", type=Path, help="read this mesh instead")
    p.add_argument("--out", type=Path, help="write the mesh here")
    return parser


def _config(args) -> RunConfig:
    if args.config is None:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    if args.k is not None:
        cfg.k = args.k
    if args.threads is not None:
        cfg.threads = args.threads
    if args.solver is not None:
        cfg.method = args.solver
    if args.tol is not None:
        cfg.tol = args.tol
    if args.delta_mode is not None:
        cfg.stab = dataclasses.replace(cfg.stab, delta_mode=args.delta_mode)
    from .config import validate
    validate(cfg)
    return cfg


def _write(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _g(x) -> str:
    return f"{x:.17g}"


def cmd_solve(args) -> int:
    cfg = _config(args)
    mesh = cfg.mesh.build()
    sol = solve_problem(mesh, cfg.k, cfg.coeffs, cfg.stab, cfg.method, cfg.tol, cfg.max_iter,
                        threads=cfg.threads)
    out = args.out or Path("vemcdr_solution")
    out.mkdir(parents=True, exist_ok=True)
    lines = ["dof,value"] + [f"{i},{_g(v)}" for i, v in enumerate(sol.u_h)]
    _write(out / "dofs.csv", "\n".join(lines) + "\n")
    lines = ["cell,center_x,center_y,scale,px,py,coefficient"]
    exps = exponents(cfg.k)
    for c, (proj, ids) in enumerate(zip(sol.disc.projectors, sol.disc.dofmap.cell_dofs)):
        g = proj.geom
        coef = proj.P_nabla @ sol.u_h[ids]
        for (px, py), a in zip(exps, coef):
            lines.append(f"{c},{_g(g.centroid[0])},{_g(g.centroid[1])},{_g(g.diameter)},"
                         f"{px},{py},{_g(a)}")
    _write(out / "cells.csv", "\n".join(lines) + "\n")
    print(f"ndof {sol.disc.n_dofs}  solver {sol.stats.method}  iterations {sol.stats.iterations}"
          f"  residual {sol.stats.residual:.3e}")
    if cfg.exact is not None:
        r = compute_errors(sol.disc, sol.u_h, cfg.exact, cfg.coeffs, sol.deltas)
        print(f"h_max {r.h_max:.6g}  err_L2 {r.err_L2:.6e}  err_H1 {r.err_H1:.6e}  "
              f"err_triple {r.err_triple:.6e}")
        print(f"triple parts: diffusion {r.part_diffusion:.6e}  reaction {r.part_reaction:.6e}"
              f"  streamline {r.part_streamline:.6e}")
    return 0


def cmd_convergence(args) -> int:
    cfg = _config(args)
    if cfg.exact is None:
        raise UsageError("convergence needs an [exact] section")
    if cfg.mesh.file is not None:
        raise UsageError("convergence needs a generated mesh family, not [mesh] file")
    study = StudyConfig(cfg.coeffs, cfg.exact, k=cfg.k, mesh_kind=cfg.mesh.kind, n0=cfg.n0,
                        levels=cfg.levels, perturb=cfg.mesh.perturb, seed=cfg.mesh.seed,
                        stab=cfg.stab, solver=cfg.method, tol=cfg.tol, max_iter=cfg.max_iter,
                        threads=cfg.threads)
    res = convergence_study(study)
    _write(args.out, res.csv())
    for i, q in enumerate(res.quality, 1):
        print(f"level {i} quality: " + ", ".join(f"{k}={v:.4g}" if isinstance(v, float)
                                                  else f"{k}={v}" for k, v in q.as_dict().items()),
              file=sys.stderr)
    for flag in res.flags:
        print(f"note: {flag}", file=sys.stderr)
    return 0


def _block(name, M) -> list[str]:
    M = np.atleast_2d(M)
    return [f"# {name} {M.shape[0]}x{M.shape[1]}"] + [",".join(_g(v) for v in row) for row in M]


def cmd_project(args) -> int:
    cfg = _config(args)
    mesh = cfg.mesh.build()
    cells = args.cell if args.cell else range(mesh.n_cells)
    for c in cells:
        if not 0 <= c < mesh.n_cells:
            raise UsageError(f"cell {c} out of range (mesh has {mesh.n_cells} cells)")
    disc = Discretization.build(mesh, cfg.k, cfg.threads)
    lines = []
    for c in cells:
        proj = disc.projectors[c]
        lf = local_matrix(proj, cfg.coeffs, cfg.stab, sample_coefficients(proj, cfg.coeffs))
        lines.append(f"# cell {c} k {cfg.k} delta_T {_g(lf.delta_T)}")
        for name in ("D", "P_nabla", "P_l2", "P_gx", "P_gy", "L_poly"):
            lines += _block(name, getattr(proj, name))
        for name, M in lf.parts.items():
            lines += _block(name, M)
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_mesh(args) -> int:
    if args.infile is not None:
        if not args.infile.is_file():
            raise UsageError(f"mesh file not found: {args.infile}")
        mesh = read_mesh(args.infile.read_bytes())
    else:
        mesh = MeshSpec(args.kind, args.nx, args.ny, args.perturb, args.seed).build()
    q = quality_report(mesh)
    print(f"vertices {mesh.n_vertices}  cells {mesh.n_cells}  edges {mesh.n_edges}  "
          f"boundary edges {len(mesh.boundary_edges)}  area {mesh.total_area():.15g}")
    print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                    for k, v in q.as_dict().items()))
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_bytes(write_mesh(mesh))
    return 0


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "project": cmd_project,
            "mesh": cmd_mesh}


def _setup_logging():
    level = os.environ.get("VEMCDR_LOG", "warning").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"VEMCDR_LOG must be one of {', '.join(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"vemcdr: error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, ProjectorError, StudyError, EvalError, MeshError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"vemcdr: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"vemcdr: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())

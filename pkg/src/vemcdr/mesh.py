"""Polygonal meshes of the unit square: construction, generators, I/O and geometry.

Cells are stored as counter-clockwise vertex cycles.  Edges are stored in the
orientation in which their first (lowest-id) cell traverses them, so that the
first cell lies to the left of the directed edge; ``cell_right`` is ``-1`` on
the boundary.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Malformed ``vempoly`` text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """Immutable polygonal mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : tuple of int arrays, one CCW vertex cycle per cell
    edges : (ne, 4) int array of ``(v0, v1, cell_left, cell_right)``
    boundary_edges : sorted int array of edge ids with ``cell_right == -1``
    cell_edges : tuple of int arrays; ``cell_edges[c][i]`` joins local
        vertices ``i`` and ``i + 1`` of cell ``c``
    """

    vertices: np.ndarray
    cells: tuple
    edges: np.ndarray
    boundary_edges: np.ndarray
    cell_edges: tuple

    @classmethod
    def from_cells(cls, vertices, cells: Sequence[Sequence[int]]) -> "PolyMesh":
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        nv = len(vertices)
        cell_arrays = []
        edge_index: dict[tuple[int, int], int] = {}
        edges: list[list[int]] = []
        cell_edges = []
        for c, cyc in enumerate(cells):
            cyc = np.asarray(cyc, dtype=np.int64)
            if len(cyc) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            if cyc.min() < 0 or cyc.max() >= nv:
                raise MeshError(f"cell {c} references a vertex out of range")
            if len(set(cyc.tolist())) != len(cyc):
                raise MeshError(f"cell {c} repeats a vertex")
            if signed_area(vertices[cyc]) <= 0.0:
                raise MeshError(f"cell {c} is not counter-clockwise (area <= 0)")
            ce = np.empty(len(cyc), dtype=np.int64)
            for i in range(len(cyc)):
                a, b = int(cyc[i]), int(cyc[(i + 1) % len(cyc)])
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append([a, b, c, -1])
                else:
                    rec = edges[e]
                    if rec[3] != -1:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    if rec[0] != b or rec[1] != a:
                        raise MeshError(
                            f"edge {key} traversed in the same direction by cells "
                            f"{rec[2]} and {c}")
                    rec[3] = c
                ce[i] = e
            cell_arrays.append(_frozen(cyc))
            cell_edges.append(_frozen(ce))
        edges_arr = np.array(edges, dtype=np.int64).reshape(-1, 4)
        boundary = np.flatnonzero(edges_arr[:, 3] == -1)
        return cls(_frozen(vertices), tuple(cell_arrays), _frozen(edges_arr),
                   _frozen(boundary), tuple(cell_edges))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def is_boundary_edge(self, e: int) -> bool:
        return self.edges[e, 3] == -1

    def total_area(self) -> float:
        return float(sum(signed_area(self.vertices[c]) for c in self.cells))

    def h_max(self) -> float:
        return max(cell_geometry(self, c).diameter for c in range(self.n_cells))


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Geometric data of one cell.

    Edge arrays are indexed by local edge ``i`` (vertex ``i`` to ``i + 1``).
    ``edge_tangents`` point from the lower to the higher global vertex id;
    edge moments are parameterized along them.
    """

    cell_id: int
    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    edge_ids: np.ndarray
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    edge_normals: np.ndarray
    edge_tangents: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)


class GeometryError(MeshError):
    pass


def polygon_geometry(pts, cell_id=-1, edge_ids=None, vertex_ids=None) -> CellGeometry:
    """Geometry of a CCW polygon given by its vertex coordinates.

    ``vertex_ids`` fixes the moment orientation of each edge (lower id to
    higher id); without it edges are oriented along the CCW traversal.
    """
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    nxt = np.roll(pts, -1, axis=0)
    cross = pts[:, 0] * nxt[:, 1] - nxt[:, 0] * pts[:, 1]
    area = 0.5 * float(cross.sum())
    if not area > 0.0:
        raise GeometryError(f"cell {cell_id} has non-positive area {area}")
    centroid = np.array([np.sum((pts[:, 0] + nxt[:, 0]) * cross),
                         np.sum((pts[:, 1] + nxt[:, 1]) * cross)]) / (6.0 * area)
    diff = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
    d = nxt - pts
    lengths = np.hypot(d[:, 0], d[:, 1])
    if np.any(lengths <= 0.0):
        raise GeometryError(f"cell {cell_id} has a zero-length edge")
    t = d / lengths[:, None]
    normals = np.column_stack([t[:, 1], -t[:, 0]])
    tangents = t.copy()
    if vertex_ids is not None:
        vid = np.asarray(vertex_ids)
        flip = vid > np.roll(vid, -1)
        tangents[flip] *= -1.0
    if edge_ids is None:
        edge_ids = np.arange(n)
    return CellGeometry(
        cell_id=cell_id, vertices=_frozen(pts), area=area, centroid=_frozen(centroid),
        diameter=diameter, edge_ids=_frozen(np.asarray(edge_ids)),
        edge_lengths=_frozen(lengths), edge_midpoints=_frozen(0.5 * (pts + nxt)),
        edge_normals=_frozen(normals), edge_tangents=_frozen(tangents))


def cell_geometry(mesh: PolyMesh, cell_id: int) -> CellGeometry:
    if not 0 <= cell_id < mesh.n_cells:
        raise IndexError(f"cell id {cell_id} out of range")
    cyc = mesh.cells[cell_id]
    return polygon_geometry(mesh.vertices[cyc], cell_id=cell_id,
                            edge_ids=mesh.cell_edges[cell_id], vertex_ids=cyc)


# ---------------------------------------------------------------------------
# quality

@dataclass(frozen=True)
class QualityReport:
    rho_Z1: float
    star_shaped_ok: tuple
    h_max: float
    rho_Z2: float

    def as_dict(self):
        return {"rho_Z1": self.rho_Z1, "rho_Z2": self.rho_Z2, "h_max": self.h_max,
                "star_shaped_cells": int(sum(self.star_shaped_ok)),
                "n_cells": len(self.star_shaped_ok)}


def quality_report(mesh: PolyMesh) -> QualityReport:
    """Empirical shape-regularity constants.

    ``rho_Z1`` is the smallest edge-length to diameter ratio.  A cell passes
    the star-shape check when the disk of radius ``r`` around its centroid
    lies in every inner edge half-plane, ``r`` being the smallest
    centroid-to-edge-line distance; ``rho_Z2`` is the smallest ``r / h_T``.
    """
    rho1 = np.inf
    rho2 = np.inf
    ok = []
    hmax = 0.0
    for c in range(mesh.n_cells):
        g = cell_geometry(mesh, c)
        hmax = max(hmax, g.diameter)
        rho1 = min(rho1, g.edge_lengths.min() / g.diameter)
        dist = np.einsum("ij,ij->i", g.edge_midpoints - g.centroid, g.edge_normals)
        r = float(dist.min())
        ok.append(bool(r > 0.0))
        rho2 = min(rho2, r / g.diameter)
    return QualityReport(float(rho1), tuple(ok), float(hmax), float(rho2))


# ---------------------------------------------------------------------------
# generators

MESH_KINDS = ("tri", "quad", "quad_perturbed", "hex_dominant")


def generate_mesh(kind: str, nx: int, ny: int, perturb: float = 0.0, seed: int = 0) -> PolyMesh:
    """Mesh of the unit square.

    ``quad_perturbed`` moves each interior vertex by a random vector of length
    at most ``perturb * min(1/nx, 1/ny)``, drawn from a generator seeded with
    ``seed``.  ``hex_dominant`` offsets alternate rows of a brick pattern and
    bends the row interfaces, giving convex hexagons in the interior and
    pentagons and quadrilaterals along the boundary.
    """
    if kind not in MESH_KINDS:
        raise ValueError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")
    if int(nx) < 1 or int(ny) < 1:
        raise ValueError("nx and ny must be >= 1")
    if not 0.0 <= perturb < 0.5:
        raise ValueError(f"perturb must lie in [0, 0.5), got {perturb}")
    nx, ny = int(nx), int(ny)
    if kind == "hex_dominant":
        return _hex_dominant(nx, ny)
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    if kind == "quad_perturbed" and perturb > 0.0:
        rng = np.random.default_rng(seed)
        amp = perturb * min(1.0 / nx, 1.0 / ny)
        radius = amp * rng.random(len(verts))
        angle = 2.0 * np.pi * rng.random(len(verts))
        interior = ((X.ravel() > 0) & (X.ravel() < 1) & (Y.ravel() > 0) & (Y.ravel() < 1))
        verts[interior, 0] += (radius * np.cos(angle))[interior]
        verts[interior, 1] += (radius * np.sin(angle))[interior]
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if kind == "tri":
                cells.append([a, b, c])
                cells.append([a, c, d])
            else:
                cells.append([a, b, c, d])
    return PolyMesh.from_cells(verts, cells)


def _hex_dominant(nx, ny):
    hy = 1.0 / ny
    shift = 0.2 * hy

    def breaks(row):
        # in units of hx/2
        if row % 2 == 0:
            return list(range(0, 2 * nx + 1, 2))
        return [0] + list(range(1, 2 * nx, 2)) + [2 * nx]

    verts = []
    line_ids = []
    for line in range(ny + 1):
        below = set(breaks(line - 1)) if line > 0 else set()
        above = set(breaks(line)) if line < ny else set()
        ids = {}
        for q in sorted(below | above):
            y = line * hy
            if 0 < line < ny and 0 < q < 2 * nx:
                y += shift if q in above and q not in below else -shift
            ids[q] = len(verts)
            verts.append((q / (2.0 * nx), y))
        line_ids.append(ids)
    cells = []
    for row in range(ny):
        bk = breaks(row)
        lo, hi = line_ids[row], line_ids[row + 1]
        for a, b in zip(bk[:-1], bk[1:]):
            bottom = [lo[q] for q in sorted(lo) if a <= q <= b]
            top = [hi[q] for q in sorted(hi, reverse=True) if a <= q <= b]
            cells.append(bottom + top)
    return PolyMesh.from_cells(np.array(verts, dtype=float), cells)


# ---------------------------------------------------------------------------
# vempoly I/O

def write_mesh(mesh: PolyMesh) -> bytes:
    out = io.StringIO()
    out.write("vempoly 1\n")
    out.write(f"vertices {mesh.n_vertices}\n")
    for x, y in mesh.vertices:
        out.write(f"{x:.17g} {y:.17g}\n")
    out.write(f"cells {mesh.n_cells}\n")
    for cyc in mesh.cells:
        out.write(" ".join([str(len(cyc))] + [str(int(v)) for v in cyc]) + "\n")
    return out.getvalue().encode("utf-8")


def read_mesh(data) -> PolyMesh:
    """Parse ``vempoly`` text (bytes or str); errors carry the 1-based line."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [(n, ln.strip()) for n, ln in enumerate(data.splitlines(), start=1)]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of input, expected {what}") from None

    n, ln = take("header")
    if ln.split() != ["vempoly", "1"]:
        raise MeshFormatError(f"bad header {ln!r}, expected 'vempoly 1'", n)
    nv = _count(take("vertex count"), "vertices")
    verts = np.empty((nv, 2))
    for i in range(nv):
        n, ln = take("vertex")
        parts = ln.split()
        if len(parts) != 2:
            raise MeshFormatError("vertex line needs exactly two coordinates", n)
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {ln!r}", n) from None
        if not np.all(np.isfinite(verts[i])):
            raise MeshFormatError("non-finite coordinate", n)
    nc = _count(take("cell count"), "cells")
    cells = []
    for _ in range(nc):
        n, ln = take("cell")
        try:
            parts = [int(p) for p in ln.split()]
        except ValueError:
            raise MeshFormatError(f"bad integer in {ln!r}", n) from None
        if not parts or parts[0] < 3 or len(parts) != parts[0] + 1:
            raise MeshFormatError("cell line must be 'n i0 ... i(n-1)' with n >= 3", n)
        cyc = parts[1:]
        bad = [v for v in cyc if not 0 <= v < nv]
        if bad:
            raise MeshFormatError(f"vertex index {bad[0]} out of range [0, {nv})", n)
        if signed_area(verts[cyc]) <= 0.0:
            raise MeshFormatError("cell is not counter-clockwise", n)
        cells.append(cyc)
    rest = next(it, None)
    if rest is not None:
        raise MeshFormatError("trailing content after cells", rest[0])
    return PolyMesh.from_cells(verts, cells)


def _count(item, keyword):
    n, ln = item
    parts = ln.split()
    if len(parts) != 2 or parts[0] != keyword:
        raise MeshFormatError(f"expected '{keyword} N', got {ln!r}", n)
    try:
        val = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"bad count {parts[1]!r}", n) from None
    if val < 0:
        raise MeshFormatError("negative count", n)
    return val

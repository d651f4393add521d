"""Local bilinear forms and load vectors of the stabilized scheme.

Row index = test function, column index = trial function:
``A_loc[i, j] = A_h^T(phi_j, phi_i)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .basis import n_poly
from .projectors import ProjectorSet, pivoted_solve
from .space import cell_basis

log = logging.getLogger(__name__)

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

DELTA_MODES = ("paper", "supg_classic", "off")
LOAD_MODES = ("pk", "pk-2")


def constant_field(value: float) -> Field:
    value = float(value)

    def f(x, y):
        return np.full(np.shape(x), value)

    f.constant = value
    return f


def as_field(value) -> Field:
    if callable(value):
        return value
    return constant_field(value)


@dataclass(frozen=True)
class CoefficientSet:
    """Problem data.  Fields are vectorized callables ``f(x, y)``; plain
    numbers are promoted to constant fields."""

    epsilon: float
    bx: Field = 0.0
    by: Field = 0.0
    c: Field = 0.0
    f: Field = 0.0
    u_b: Field = 0.0
    c0: float = 1.0
    div_b: Field | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.c0 > 0:
            raise ValueError(f"c0 must be > 0, got {self.c0}")
        for name in ("bx", "by", "c", "f", "u_b"):
            object.__setattr__(self, name, as_field(getattr(self, name)))
        if self.div_b is not None:
            object.__setattr__(self, "div_b", as_field(self.div_b))

    def with_(self, **kw) -> "CoefficientSet":
        return replace(self, **kw)

    def divergence(self, x, y, step):
        """Analytic div b if supplied, else central differences with ``step``."""
        if self.div_b is not None:
            return np.asarray(self.div_b(x, y), dtype=float) * np.ones(np.shape(x))
        if _is_constant(self.bx) and _is_constant(self.by):
            return np.zeros(np.shape(x))
        dbx = (self.bx(x + step, y) - self.bx(x - step, y)) / (2 * step)
        dby = (self.by(x, y + step) - self.by(x, y - step)) / (2 * step)
        return dbx + dby


def _is_constant(f):
    return hasattr(f, "constant")


@dataclass(frozen=True)
class StabilizationConfig:
    """Constants of the control-parameter bound and stabilizer multipliers.

    ``alpha_star``, ``gamma_star``, ``s_star`` and ``Gamma_star`` stand in
    for the (unknown) stability constants of the discrete forms.
    """

    mu1: float = 1.0
    mu2: float = 1.0
    c_I: float = 1.0
    stab_scale_a: float = 1.0
    stab_scale_c: float = 1.0
    stab_scale_sym: float = 1.0
    stab_scale_supg: float = 1.0
    alpha_star: float = 1.0
    gamma_star: float = 1.0
    s_star: float = 1.0
    Gamma_star: float = 1.0
    delta_mode: str = "paper"
    load_mode: str = "pk"

    def __post_init__(self):
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"delta_mode must be one of {DELTA_MODES}")
        if self.load_mode not in LOAD_MODES:
            raise ValueError(f"load_mode must be one of {LOAD_MODES}")
        for name in ("mu1", "mu2", "c_I", "stab_scale_a", "stab_scale_c", "stab_scale_sym",
                     "stab_scale_supg", "alpha_star", "gamma_star", "s_star", "Gamma_star"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class CellSamples:
    """Coefficient values at the assembly quadrature points of a cell."""

    bx: np.ndarray
    by: np.ndarray
    c: np.ndarray
    div_b: np.ndarray
    f: np.ndarray

    @property
    def b_max(self) -> float:
        return float(np.sqrt(self.bx ** 2 + self.by ** 2).max())

    @property
    def c_max(self) -> float:
        return float(np.abs(self.c).max())

    @property
    def coercivity_margin(self) -> float:
        """Smallest sampled value of c - div(b)/2."""
        return float((self.c - 0.5 * self.div_b).min())


def sample_coefficients(proj: ProjectorSet, coeffs: CoefficientSet) -> CellSamples:
    x, y = proj.rule.points[:, 0], proj.rule.points[:, 1]
    shape = np.shape(x)

    def ev(fn):
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), shape).copy()

    step = 1e-6 * proj.geom.diameter
    s = CellSamples(ev(coeffs.bx), ev(coeffs.by), ev(coeffs.c),
                    np.broadcast_to(coeffs.divergence(x, y, step), shape).copy(), ev(coeffs.f))
    return s


def delta_branches(h, epsilon, b_max, c_max, c0, config: StabilizationConfig):
    """The three upper bounds on the control parameter (inf when inactive)."""
    smin = min(config.s_star, config.gamma_star)
    first = c0 * smin / (4.0 * c_max ** 2) if c_max > 0 else math.inf
    second = h ** 2 * config.alpha_star / (2.0 * epsilon * config.mu1 ** 2)
    if b_max > 0:
        third = (min(1.0, 1.0 / config.c_I) * c0 * smin * h ** 2
                 / (4.0 * b_max ** 2 * config.mu2 ** 2))
    else:
        third = math.inf
    return first, second, third


def delta_value(h, epsilon, b_max, c_max, c0, config: StabilizationConfig) -> float:
    if config.delta_mode == "off":
        return 0.0
    if config.delta_mode == "supg_classic":
        d = h ** 2 / (4.0 * epsilon)
        if b_max > 0:
            d = min(d, h / (2.0 * b_max))
    else:
        d = min(delta_branches(h, epsilon, b_max, c_max, c0, config))
    return min(d, h ** 2 / epsilon)


def compute_delta(proj: ProjectorSet, coeffs: CoefficientSet, config: StabilizationConfig,
                  samples: CellSamples | None = None) -> float:
    s = samples if samples is not None else sample_coefficients(proj, coeffs)
    return delta_value(proj.geom.diameter, coeffs.epsilon, s.b_max, s.c_max, coeffs.c0, config)


@dataclass(frozen=True, eq=False)
class LocalForms:
    A_loc: np.ndarray
    F_loc: np.ndarray
    delta_T: float
    parts: dict = field(default_factory=dict)
    stabilizers: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PointValues:
    """Projected basis functions at the rule points: Pi_k phi_j, b . Pi grad phi_j,
    Laplacian of Pi^nabla phi_j and the gradient components."""

    Pv: np.ndarray
    Gx: np.ndarray
    Gy: np.ndarray
    Lv: np.ndarray


def point_values(proj: ProjectorSet, points=None) -> PointValues:
    pts = proj.rule.points if points is None else points
    k = proj.k
    Mk = cell_basis(proj.geom, k).eval(pts)
    Mk1 = Mk[:, : n_poly(k - 1)]
    Mk2 = Mk[:, : n_poly(max(k - 2, 0))]
    return PointValues(Mk @ proj.P_l2, Mk1 @ proj.P_gx, Mk1 @ proj.P_gy, Mk2 @ proj.L_poly)


def local_matrix(proj: ProjectorSet, coeffs: CoefficientSet, config: StabilizationConfig,
                 samples: CellSamples | None = None, delta: float | None = None) -> LocalForms:
    """Local matrix and load vector; ``delta`` overrides the computed delta_T."""
    if proj is None:
        raise ValueError("projectors must be built before the local forms")
    s = samples if samples is not None else sample_coefficients(proj, coeffs)
    dT = compute_delta(proj, coeffs, config, s) if delta is None else float(delta)
    w = proj.rule.weights
    pv = point_values(proj)
    eps = coeffs.epsilon
    area = proj.geom.area
    StS = proj.stabilizer_kernel()

    Gb = s.bx[:, None] * pv.Gx + s.by[:, None] * pv.Gy
    Pv = pv.Pv

    s_a = config.stab_scale_a * eps * StS
    a = eps * (proj.P_gx.T @ proj.H_km1 @ proj.P_gx + proj.P_gy.T @ proj.H_km1 @ proj.P_gy) + s_a

    div_mean = float(np.dot(w, s.div_b)) / area
    s_sym = config.stab_scale_sym * 0.5 * div_mean * area * StS
    b_sym = 0.5 * (Pv * (w * s.div_b)[:, None]).T @ Pv + s_sym

    M1 = (Pv * w[:, None]).T @ Gb
    b_skew = 0.5 * (M1 - M1.T)

    s_c = config.stab_scale_c * s.c_max * area * StS
    c = (Pv * (w * s.c)[:, None]).T @ Pv + s_c

    s_b = config.stab_scale_supg * dT * s.b_max ** 2 * StS
    resid = -eps * pv.Lv + s.c[:, None] * Pv
    b_stab = dT * (Gb * w[:, None]).T @ resid + dT * (Gb * w[:, None]).T @ Gb + s_b

    A = a - b_sym + b_skew + c + b_stab
    F = _local_rhs(proj, s, dT, Gb, config.load_mode)
    parts = {"a": a, "b_sym": b_sym, "b_skew": b_skew, "c": c, "b_stab": b_stab}
    stabs = {"s_a": s_a, "s_sym": s_sym, "s_c": s_c, "s_stab": s_b}
    return LocalForms(A, F, dT, parts, stabs)


def load_projection(proj: ProjectorSet, f_values, degree: int | None = None) -> np.ndarray:
    """Coefficients of the L2 projection of f onto P^degree (default max(k-2, 0))."""
    deg = max(proj.k - 2, 0) if degree is None else degree
    nq = n_poly(deg)
    m = cell_basis(proj.geom, deg).eval(proj.rule.points)
    rhs = (proj.rule.weights * f_values) @ m
    return pivoted_solve(proj.H_k[:nq, :nq], rhs[:, None])[:, 0]


def _local_rhs(proj, s, dT, Gb, load_mode="pk"):
    """int f_h v + delta_T int f_h (b . Pi grad v).

    ``pk``: f_h = P_k f paired with Pi_k v.  ``pk-2``: f_h = P_{k-2} f paired
    with the cell moments of v (k >= 2) or with Pi^nabla v (k = 1).
    """
    k = proj.k
    w = proj.rule.weights
    if load_mode == "pk":
        fh = load_projection(proj, s.f, k)
        Mk = cell_basis(proj.geom, k).eval(proj.rule.points)
        fh_pts = Mk @ fh
        F = (w * fh_pts) @ (Mk @ proj.P_l2)
    else:
        fh = load_projection(proj, s.f)
        F = np.zeros(proj.n_dofs)
        off = proj.geom.n_edges * k
        if k >= 2:
            F[off:off + len(fh)] += proj.geom.area * fh
        else:
            F += fh[0] * (proj.H_k[0] @ proj.P_nabla)
        fh_pts = cell_basis(proj.geom, max(k - 2, 0)).eval(proj.rule.points) @ fh
    F += dT * (Gb * (w * fh_pts)[:, None]).sum(axis=0)
    return F


def local_rhs(proj: ProjectorSet, coeffs: CoefficientSet, config: StabilizationConfig,
              samples: CellSamples | None = None, delta: float | None = None) -> np.ndarray:
    s = samples if samples is not None else sample_coefficients(proj, coeffs)
    dT = compute_delta(proj, coeffs, config, s) if delta is None else float(delta)
    pv = point_values(proj)
    Gb = s.bx[:, None] * pv.Gx + s.by[:, None] * pv.Gy
    return _local_rhs(proj, s, dT, Gb, config.load_mode)

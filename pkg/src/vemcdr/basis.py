"""Scaled monomials ((x - x_c)/h)^a ((y - y_c)/h)^b in graded-lex order."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def n_poly(degree: int) -> int:
    """Dimension of P^degree in two variables (0 for negative degree)."""
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def exponents(degree: int) -> tuple[tuple[int, int], ...]:
    """Graded-lex exponents: (0,0),(1,0),(0,1),(2,0),(1,1),(0,2),..."""
    return tuple((d - j, j) for d in range(degree + 1) for j in range(d + 1))


def index_of(a: int, b: int) -> int:
    d = a + b
    return n_poly(d - 1) + b


class ScaledMonomialBasis:
    """Scaled monomial basis of P^degree on a cell.

    Evaluation methods take points of shape ``(n, 2)`` and return arrays whose
    last axis runs over the basis.
    """

    def __init__(self, center, scale: float, degree: int):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = int(degree)
        self.exponents = exponents(max(self.degree, 0)) if self.degree >= 0 else ()

    def __len__(self):
        return n_poly(self.degree)

    def _powers(self, points):
        xi = (np.atleast_2d(points) - self.center) / self.scale
        d = max(self.degree, 0)
        px = xi[:, 0:1] ** np.arange(d + 1)
        py = xi[:, 1:2] ** np.arange(d + 1)
        return px, py

    def eval(self, points):
        if self.degree < 0:
            return np.zeros((len(np.atleast_2d(points)), 0))
        px, py = self._powers(points)
        a = np.array([e[0] for e in self.exponents])
        b = np.array([e[1] for e in self.exponents])
        return px[:, a] * py[:, b]

    def eval_grad(self, points):
        """Gradients, shape ``(n, nb, 2)``."""
        pts = np.atleast_2d(points)
        if self.degree < 0:
            return np.zeros((len(pts), 0, 2))
        px, py = self._powers(pts)
        out = np.zeros((len(pts), len(self), 2))
        for j, (a, b) in enumerate(self.exponents):
            if a:
                out[:, j, 0] = a * px[:, a - 1] * py[:, b] / self.scale
            if b:
                out[:, j, 1] = b * px[:, a] * py[:, b - 1] / self.scale
        return out

    def eval_laplacian(self, points):
        pts = np.atleast_2d(points)
        if self.degree < 0:
            return np.zeros((len(pts), 0))
        px, py = self._powers(pts)
        out = np.zeros((len(pts), len(self)))
        h2 = self.scale ** 2
        for j, (a, b) in enumerate(self.exponents):
            if a >= 2:
                out[:, j] += a * (a - 1) * px[:, a - 2] * py[:, b] / h2
            if b >= 2:
                out[:, j] += b * (b - 1) * px[:, a] * py[:, b - 2] / h2
        return out

    def eval_coeffs(self, coeffs, points):
        """Values of the polynomial with the given coefficient vector(s)."""
        return self.eval(points) @ np.asarray(coeffs)[: len(self)]


@lru_cache(maxsize=None)
def _unit_diff(degree: int, axis: int):
    m = np.zeros((n_poly(degree - 1), n_poly(degree)))
    for j, (a, b) in enumerate(exponents(degree)):
        if axis == 0 and a:
            m[index_of(a - 1, b), j] = a
        elif axis == 1 and b:
            m[index_of(a, b - 1), j] = b
    m.flags.writeable = False
    return m


def diff_matrix(degree: int, axis: int, scale: float = 1.0):
    """Coefficient map of d/dx (axis 0) or d/dy (axis 1): P^degree -> P^(degree-1)."""
    return _unit_diff(degree, axis) / scale


def laplacian_matrix(degree: int, scale: float = 1.0):
    """Coefficient map of the Laplacian: P^degree -> P^(degree-2)."""
    dx1 = diff_matrix(degree, 0, scale)
    dy1 = diff_matrix(degree, 1, scale)
    return diff_matrix(degree - 1, 0, scale) @ dx1 + diff_matrix(degree - 1, 1, scale) @ dy1


def differentiate(coeffs, axis: int, scale: float = 1.0):
    """Exact derivative of a coefficient vector; the degree drops by one."""
    coeffs = np.asarray(coeffs, dtype=float)
    degree = degree_of_length(len(coeffs))
    return diff_matrix(degree, axis, scale) @ coeffs


def laplacian(coeffs, scale: float = 1.0):
    coeffs = np.asarray(coeffs, dtype=float)
    degree = degree_of_length(len(coeffs))
    return laplacian_matrix(degree, scale) @ coeffs


def degree_of_length(n: int) -> int:
    d = 0
    while n_poly(d) < n:
        d += 1
    if n_poly(d) != n:
        raise ValueError(f"{n} is not the dimension of a full polynomial space")
    return d


def multiply_by_vectorfield_at_points(basis, coeffs_x, coeffs_y, bx, by, points):
    """Samples of b . (p_x, p_y) at points, with b given by its values there."""
    return bx * basis.eval_coeffs(coeffs_x, points) + by * basis.eval_coeffs(coeffs_y, points)


def edge_monomials(s, degree: int):
    """1D scaled monomials s^j, j = 0..degree, for edge parameters s."""
    s = np.asarray(s, dtype=float)
    if degree < 0:
        return np.zeros(s.shape + (0,))
    return s[..., None] ** np.arange(degree + 1)

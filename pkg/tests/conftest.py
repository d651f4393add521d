import math

import numpy as np
import pytest

from vemcdr.basis import n_poly
from vemcdr.mesh import polygon_geometry


def hexagon(side=1.0, center=(0.0, 0.0)):
    t = np.arange(6) * np.pi / 3
    return np.column_stack([center[0] + side * np.cos(t), center[1] + side * np.sin(t)])


TEST_POLYGONS = {
    "square": np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    "right_triangle": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "perturbed_quad": np.array([[0.02, -0.03], [0.97, 0.04], [1.05, 0.93], [-0.04, 1.01]]),
    "hexagon": hexagon(),
    "small_pentagon": 1e-2 * np.array([[0.0, 0.0], [1.0, 0.0], [1.3, 0.7], [0.5, 1.2],
                                       [-0.2, 0.6]]),
}


def make_geometry(name):
    pts = TEST_POLYGONS[name]
    n = len(pts)
    return polygon_geometry(pts, 0, np.arange(n), np.arange(n))


@pytest.fixture(params=sorted(TEST_POLYGONS))
def geom(request):
    return make_geometry(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_poly(rng, degree):
    return rng.uniform(-1.0, 1.0, n_poly(degree))


def polygon_monomial_integral(pts, a, b):
    """Exact int_P x^a y^b by Green's theorem, edge by edge in exact polynomial
    arithmetic: int_P x^a y^b = (1/(a+1)) oint x^(a+1) y^b dy."""
    P = np.polynomial.Polynomial
    total = 0.0
    n = len(pts)
    for i in range(n):
        (x0, y0), (x1, y1) = pts[i], pts[(i + 1) % n]
        x = P([x0, x1 - x0])
        y = P([y0, y1 - y0])
        integrand = x ** (a + 1) * y ** b * (y1 - y0)
        anti = integrand.integ()
        total += anti(1.0) - anti(0.0)
    return total / (a + 1)


_MOMENTS = {}


def _cached_moment(key, pts, a, b):
    if (key, a, b) not in _MOMENTS:
        _MOMENTS[key, a, b] = polygon_monomial_integral(pts, a, b)
    return _MOMENTS[key, a, b]


def polygon_poly_integral(pts, center, scale, coeffs):
    """Exact integral of a scaled-monomial expansion over a polygon (via the
    binomial expansion of ((x - xc)/h)^a ((y - yc)/h)^b)."""
    from vemcdr.basis import exponents
    key = np.asarray(pts, dtype=float).tobytes()
    deg = 0
    while n_poly(deg) < len(coeffs):
        deg += 1
    total = 0.0
    for c, (a, b) in zip(coeffs, exponents(deg)):
        if c == 0.0:
            continue
        s = 0.0
        for i in range(a + 1):
            for j in range(b + 1):
                s += (math.comb(a, i) * math.comb(b, j) * (-center[0]) ** (a - i)
                      * (-center[1]) ** (b - j) * _cached_moment(key, pts, i, j))
        total += c * s / scale ** (a + b)
    return total


def poly_mul(a, b):
    """Product of two scaled-monomial expansions sharing centre and scale."""
    from vemcdr.basis import degree_of_length, exponents, index_of
    da, db = degree_of_length(len(a)), degree_of_length(len(b))
    out = np.zeros(n_poly(da + db))
    for i, (a1, b1) in enumerate(exponents(da)):
        for j, (a2, b2) in enumerate(exponents(db)):
            out[index_of(a1 + a2, b1 + b2)] += a[i] * b[j]
    return out


def poly_add(*polys):
    n = max(len(p) for p in polys)
    out = np.zeros(n)
    for p in polys:
        out[: len(p)] += p
    return out


def continuous_local_form(g, p, q, eps, b, c, delta):
    """Exact A^T(p, q) (p trial, q test) for constant coefficients and
    divergence-free b, together with the sum of the absolute term sizes.

    A^T = eps (grad p, grad q) + 1/2 [(b.grad p, q) - (b.grad q, p)] + c (p, q)
          + delta (-eps lap p + c p + b.grad p, b.grad q)
    """
    from vemcdr.basis import differentiate, laplacian
    h, xc = g.diameter, g.centroid

    def integral(poly):
        return polygon_poly_integral(g.vertices, xc, h, poly)

    px, py = differentiate(p, 0, h), differentiate(p, 1, h)
    qx, qy = differentiate(q, 0, h), differentiate(q, 1, h)
    bp = poly_add(b[0] * px, b[1] * py)
    bq = poly_add(b[0] * qx, b[1] * qy)
    lap = laplacian(p, h) if len(p) > 3 else np.zeros(1)
    resid = poly_add(-eps * lap, c * p, bp)
    terms = [
        eps * integral(poly_add(poly_mul(px, qx), poly_mul(py, qy))),
        0.5 * integral(poly_mul(bp, q)),
        -0.5 * integral(poly_mul(bq, p)),
        c * integral(poly_mul(p, q)),
        delta * integral(poly_mul(resid, bq)),
    ]
    return math.fsum(terms), math.fsum(abs(t) for t in terms)


# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])

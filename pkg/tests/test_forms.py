import math

import numpy as np
import pytest

from vemcdr.basis import n_poly
from vemcdr.forms import (CoefficientSet, StabilizationConfig, compute_delta, delta_branches,
                          delta_value, load_projection, local_matrix, local_rhs,
                          sample_coefficients)
from vemcdr.projectors import build_projectors
from vemcdr.space import cell_basis, dofs_of_polynomial

from conftest import (continuous_local_form, make_geometry, poly_mul, polygon_poly_integral,
                      random_poly)

DEFAULT = StabilizationConfig()


# control parameter

def test_delta_branch_oracle_unit_square():
    h = math.sqrt(2.0)
    eps, bmax, cmax = 1e-6, math.sqrt(5.0), 1.0
    first = 1.0 * 1.0 / (4 * cmax ** 2)
    second = h ** 2 * 1.0 / (2 * eps * 1.0)
    third = 1.0 * 1.0 * 1.0 * h ** 2 / (4 * bmax ** 2 * 1.0)
    got = delta_branches(h, eps, bmax, cmax, 1.0, DEFAULT)
    assert got == pytest.approx((first, second, third), rel=1e-14)
    assert delta_value(h, eps, bmax, cmax, 1.0, DEFAULT) == pytest.approx(0.1, rel=1e-14)


def test_delta_from_cell_samples():
    P = build_projectors(make_geometry("square"), 2)
    coeffs = CoefficientSet(1e-6, bx=2.0, by=1.0, c=1.0)
    assert compute_delta(P, coeffs, DEFAULT) == pytest.approx(0.1, rel=1e-12)


@pytest.mark.parametrize("eps", [1e-3, 1.0, 10.0])
def test_delta_without_convection(eps):
    h = math.sqrt(2.0)
    assert delta_value(h, eps, 0.0, 1.0, 1.0, DEFAULT) == pytest.approx(
        min(0.25, h ** 2 / (2 * eps)), rel=1e-14)


def test_delta_vanishes_for_large_diffusion():
    vals = [delta_value(0.1, eps, 1.0, 1.0, 1.0, DEFAULT) for eps in (1, 1e2, 1e4, 1e6)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-8


def test_delta_all_branches_inactive_is_capped():
    # b = 0 and c = 0: only the diffusion branch is finite, and eps * delta <= h^2 holds
    for eps in (1e-9, 1e-3, 1.0):
        d = delta_value(0.5, eps, 0.0, 0.0, 1.0, DEFAULT)
        assert math.isfinite(d)
        assert eps * d <= 0.25 * (1 + 1e-15)


def test_delta_modes():
    off = StabilizationConfig(delta_mode="off")
    classic = StabilizationConfig(delta_mode="supg_classic")
    assert delta_value(0.1, 1e-6, 1.0, 1.0, 1.0, off) == 0.0
    assert delta_value(0.1, 1e-6, 2.0, 1.0, 1.0, classic) == pytest.approx(0.1 / 4)
    assert delta_value(0.1, 1.0, 2.0, 1.0, 1.0, classic) == pytest.approx(0.01 / 4)


def test_config_validation():
    with pytest.raises(ValueError):
        StabilizationConfig(delta_mode="sometimes")
    with pytest.raises(ValueError):
        StabilizationConfig(mu1=0.0)
    with pytest.raises(ValueError):
        StabilizationConfig(load_mode="p0")
    with pytest.raises(ValueError):
        CoefficientSet(0.0)
    with pytest.raises(ValueError):
        CoefficientSet(1.0, c0=-1.0)


def test_divergence_finite_differences():
    coeffs = CoefficientSet(1.0, bx=lambda x, y: x ** 2, by=lambda x, y: 3 * y)
    x, y = np.array([0.2, 0.7]), np.array([0.1, 0.4])
    assert np.allclose(coeffs.divergence(x, y, 1e-6), 2 * x + 3, atol=1e-8)
    exact = coeffs.with_(div_b=lambda x, y: 2 * x + 3)
    assert np.allclose(exact.divergence(x, y, 1e-6), 2 * x + 3, rtol=0, atol=0)


# local matrix

@pytest.fixture(scope="module")
def varied():
    return CoefficientSet(1e-3, bx=lambda x, y: 1 + x, by=lambda x, y: -0.5 + y * x,
                          c=lambda x, y: 2 + np.sin(x), f=lambda x, y: x * y)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_parts_sum_and_skew(geom, k, varied):
    P = build_projectors(geom, k)
    lf = local_matrix(P, varied, DEFAULT)
    p = lf.parts
    total = p["a"] - p["b_sym"] + p["b_skew"] + p["c"] + p["b_stab"]
    assert np.array_equal(total, lf.A_loc)
    assert np.abs(p["b_skew"] + p["b_skew"].T).max() <= 1e-13
    assert set(lf.stabilizers) == {"s_a", "s_sym", "s_c", "s_stab"}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_stabilizers_symmetric_and_vanish(geom, k, varied, rng):
    P = build_projectors(geom, k)
    lf = local_matrix(P, varied, DEFAULT)
    for name, S in lf.stabilizers.items():
        assert np.abs(S - S.T).max() <= 1e-13 * max(1.0, np.abs(S).max()), name
    assert lf.stabilizers["s_sym"].any()
    S = P.stabilizer_remainder()
    for _ in range(10):
        d = dofs_of_polynomial(geom, k, random_poly(rng, k))
        assert np.abs(S @ d).max() <= 1e-11
        for name, St in lf.stabilizers.items():
            assert np.abs(St @ d).max() <= 1e-11 * max(1.0, np.abs(St).max()), name


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pure_diffusion_structure(geom, k):
    P = build_projectors(geom, k)
    A = local_matrix(P, CoefficientSet(1.0), DEFAULT, delta=0.0).A_loc
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    r = 1.0 / np.sqrt(np.diag(A))
    ev = np.linalg.eigvalsh(r[:, None] * A * r[None, :])
    assert ev.min() > -1e-10
    assert int(np.sum(ev < 1e-9 * ev.max())) == 1
    ones = dofs_of_polynomial(geom, k, [1.0])
    assert np.abs(A @ ones).max() <= 1e-12 * np.abs(A).max()


@pytest.mark.parametrize("k", [1, 2, 3])
def test_sampled_stability_bounds(geom, k, varied, rng):
    P = build_projectors(geom, k)
    lf = local_matrix(P, varied, DEFAULT)
    grad = varied.epsilon * (P.P_gx.T @ P.H_km1 @ P.P_gx + P.P_gy.T @ P.H_km1 @ P.P_gy)
    for _ in range(100):
        v = rng.standard_normal(P.n_dofs)
        a = v @ lf.parts["a"] @ v
        assert a > 0
        assert a == pytest.approx(v @ grad @ v + v @ lf.stabilizers["s_a"] @ v, rel=1e-12)
        assert v @ lf.parts["c"] @ v >= 0
        assert v @ lf.stabilizers["s_stab"] @ v >= 0


@pytest.mark.parametrize("k", [2, 3])
def test_polynomial_consistency(geom, k, rng):
    eps, b, c, delta = 0.3, (1.5, -0.7), 2.0, 0.05
    P = build_projectors(geom, k)
    coeffs = CoefficientSet(eps, bx=b[0], by=b[1], c=c)
    A = local_matrix(P, coeffs, DEFAULT, delta=delta).A_loc
    for _ in range(5):
        p, q = random_poly(rng, k), random_poly(rng, k)
        dp, dq = dofs_of_polynomial(geom, k, p), dofs_of_polynomial(geom, k, q)
        exact, size = continuous_local_form(geom, p, q, eps, b, c, delta)
        assert abs(dq @ A @ dp - exact) <= 1e-9 * size


def test_missing_projectors():
    with pytest.raises(ValueError):
        local_matrix(None, CoefficientSet(1.0), DEFAULT)


def test_coercivity_margin():
    P = build_projectors(make_geometry("square"), 2)
    s = sample_coefficients(P, CoefficientSet(1.0, bx=lambda x, y: 4 * x, c=1.0))
    assert s.coercivity_margin == pytest.approx(-1.0)


# load vector

@pytest.mark.parametrize("mode", ["pk", "pk-2"])
def test_rhs_zero_source(geom, mode):
    P = build_projectors(geom, 2)
    cfg = StabilizationConfig(load_mode=mode)
    F = local_rhs(P, CoefficientSet(1e-3, bx=1.0, by=2.0, f=0.0), cfg)
    assert np.array_equal(F, np.zeros(P.n_dofs))


@pytest.mark.parametrize("mode", ["pk", "pk-2"])
def test_rhs_unit_source_pairs_with_cell_moment(geom, mode):
    P = build_projectors(geom, 2)
    cfg = StabilizationConfig(load_mode=mode)
    F = local_rhs(P, CoefficientSet(1.0, f=1.0), cfg)
    off = geom.n_edges * 2
    assert F[off] == pytest.approx(geom.area, rel=1e-12)
    assert np.abs(F[:off]).max() <= 1e-12 * geom.area


def test_rhs_linear_source_unit_square():
    g = make_geometry("square")
    k, delta, b = 2, 0.2, (1.0, 0.5)
    P = build_projectors(g, k)
    coeffs = CoefficientSet(1.0, bx=b[0], by=b[1], f=lambda x, y: x + y)
    F = local_rhs(P, coeffs, DEFAULT, delta=delta)
    # x + y in the cell's scaled monomials
    h, xc = g.diameter, g.centroid
    f = np.array([xc[0] + xc[1], h, h])
    ref = np.zeros(P.n_dofs)
    for i in range(P.n_dofs):
        pi = P.P_l2[:, i]
        gx, gy = P.P_gx[:, i], P.P_gy[:, i]
        # int f Pi_k phi_i + delta int f (b . Pi_{k-1} grad phi_i)
        ref[i] = _int(g, poly_mul(f, pi)) + delta * _int(g, poly_mul(f, b[0] * gx + b[1] * gy))
    assert np.allclose(F, ref, rtol=0, atol=1e-12)


def test_load_projection_reproduces_polynomials(geom, rng):
    P = build_projectors(geom, 3)
    p = random_poly(rng, 3)
    fv = cell_basis(geom, 3).eval(P.rule.points) @ p
    assert np.allclose(load_projection(P, fv, 3), p, atol=1e-10)
    low = load_projection(P, fv)
    assert len(low) == n_poly(1)


def test_pk2_load_k1_uses_mean():
    g = make_geometry("square")
    P = build_projectors(g, 1)
    F = local_rhs(P, CoefficientSet(1.0, f=2.0), StabilizationConfig(load_mode="pk-2"))
    # f_h = 2 paired with Pi^nabla phi_i; the four edge averages sum to 4 times the mean
    assert np.allclose(F, 2.0 * (P.H_k[0] @ P.P_nabla), atol=1e-14)
    assert F.sum() == pytest.approx(2.0)


def _int(g, poly):
    return polygon_poly_integral(g.vertices, g.centroid, g.diameter, poly)

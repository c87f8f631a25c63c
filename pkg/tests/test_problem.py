import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochkin.problem import (
    BUILTINS, builtin_problem, coefficient_distance, holder_ratio, kirchhoff, perturb,
)

rng = np.random.default_rng(11)
UP = rng.uniform(-3, 3, 4000)
VP = rng.uniform(-3, 3, 4000)
XP = rng.uniform(0, 1, 4000)


def test_unknown_name():
    with pytest.raises(ValueError):
        builtin_problem("kdv")


def test_linear_advection_example():
    p = builtin_problem("linear_advection", c=1.0, sigma0=0.0)
    u, x = np.linspace(-2, 2, 9)[:, None], np.linspace(0, 1, 5)[None, :]
    assert np.all(p.flux_u(u, x) == 1.0)
    assert np.all(p.div_flux(u, x) == 0.0)
    assert np.all(p.diffusion(u) == 0.0)


def test_porous_medium_example():
    p = builtin_problem("porous_medium", m=2.0)
    u = np.linspace(-2, 2, 41)
    assert np.allclose(p.B(u), np.sign(u) * u ** 2, atol=1e-14)
    assert np.allclose(p.alpha(u), np.sqrt(2 * np.abs(u)), atol=1e-14)
    B, Bh = kirchhoff(p, 1.0)
    assert B == pytest.approx(1.0, abs=1e-14)
    assert Bh == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-14)


def test_het_burgers_translation_invariant_reduction():
    p = builtin_problem("het_burgers", eps_c=0.0)
    assert p.homogeneous
    assert np.all(p.div_flux(UP, XP) == 0.0)
    q = builtin_problem("het_burgers", eps_c=0.5)
    assert not q.homogeneous
    # D_x F matches a finite difference of F in x
    h = 1e-6
    fd = (q.flux(UP, XP + h) - q.flux(UP, XP - h)) / (2 * h)
    assert np.allclose(fd, q.div_flux(UP, XP), atol=1e-6)


def test_kirchhoff_examples_and_quadrature_fallback():
    p = builtin_problem("viscous_burgers", nu=1.0)
    assert kirchhoff(p, 0.0) == (0.0, 0.0)
    assert kirchhoff(p, 2.0) == pytest.approx((2.0, 2.0), abs=1e-14)
    # the adaptive-quadrature path agrees with the closed forms
    pm = builtin_problem("porous_medium", m=3.0)
    q = pm.replace(kirchhoff_B=None, kirchhoff_half=None)
    for u in (-1.3, 0.0, 0.4, 2.0):
        assert np.allclose(kirchhoff(q, u), kirchhoff(pm, u), atol=1e-10)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_invariants(name):
    p = builtin_problem(name, sigma0=0.3)
    a = p.diffusion(UP)
    assert np.all(a >= 0)
    assert np.allclose(p.alpha(UP) ** 2, a, atol=1e-10)
    assert holder_ratio(p.sigma, p.lambda_sigma, UP, VP) <= 0.3 + 1e-12
    # |F_u(u,x)-F_u(v,x)| <= C(|u|^{p-1}+|v|^{p-1}+1)|u-v|^kappa_F1
    lhs = np.abs(p.flux_u(UP, XP) - p.flux_u(VP, XP))
    g = p.growth_p - 1
    rhs = p.holder_constant * (np.abs(UP) ** g + np.abs(VP) ** g + 1) * np.abs(UP - VP) ** p.kappa_F1
    assert np.all(lhs <= rhs + 1e-12)
    # D_x F_u is bounded by its declared sup on the probe box
    assert np.all(np.abs(p.flux_ux(UP, XP)) <= p.div_flux_u_sup + 1e-12)


def test_distance_identical_specs():
    p = builtin_problem("het_burgers", sigma0=0.2)
    d = coefficient_distance(p, p)
    assert (d.d_flux_u, d.d_div_flux, d.d_sqrt_diff, d.d_sigma) == (0, 0, 0, 0)
    with pytest.raises(ValueError):
        coefficient_distance(p, p, n_probe=10)


def test_distance_viscosity_bound():
    eps = 0.01
    for name in ("porous_medium", "het_burgers"):
        p = builtin_problem(name)
        a = p.diffusion
        q = p.replace(diffusion=lambda u: a(u) + eps)
        d = coefficient_distance(p, q).d_sqrt_diff
        assert d <= math.sqrt(eps) + 1e-15
        # oracle: dense sampling of sqrt(a+eps)-sqrt(a)
        us = np.linspace(-3, 3, 512)
        assert d == pytest.approx(np.max(np.sqrt(a(us) + eps) - np.sqrt(a(us))), abs=1e-15)
    # a == 0 everywhere: the bound is attained
    p = builtin_problem("het_burgers")
    assert coefficient_distance(p, perturb(p, "diffusion", 0.1)).d_sqrt_diff == pytest.approx(0.1, abs=1e-15)


def test_distance_sigma_shift():
    p = builtin_problem("porous_medium", sigma0=0.5)
    d = coefficient_distance(p, perturb(p, "sigma", 0.03))
    assert d.d_sigma == pytest.approx(0.03, abs=1e-15)
    assert d.d_flux_u == d.d_div_flux == d.d_sqrt_diff == 0.0


def test_perturb_axes():
    p = builtin_problem("het_burgers", eps_c=0.0)
    assert coefficient_distance(p, perturb(p, "flux_u", 0.2)).d_flux_u == pytest.approx(0.2)
    d = coefficient_distance(p, perturb(p, "div_flux", 0.2))
    assert d.d_div_flux == pytest.approx(0.2) and d.d_flux_u == 0.0
    assert not perturb(p, "div_flux", 0.2).homogeneous
    with pytest.raises(ValueError):
        perturb(p, "nope", 0.1)


def test_composite():
    p = builtin_problem("het_burgers")
    d = coefficient_distance(p, perturb(p, "sigma", 0.04))
    assert d.composite(0.5) == pytest.approx(0.2)


specs = [builtin_problem("het_burgers", sigma0=0.2),
         builtin_problem("het_burgers", eps_c=0.2, sigma0=0.5, noise="sqrt"),
         builtin_problem("porous_medium", m=2.0, sigma0=0.1),
         builtin_problem("porous_medium", m=3.0, sigma0=0.1, noise="constant"),
         builtin_problem("viscous_burgers", nu=0.3),
         builtin_problem("linear_advection", c=-0.5, sigma0=0.4)]


def _vec(d):
    return np.array([d.d_flux_u, d.d_div_flux, d.d_sqrt_diff, d.d_sigma])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(specs), st.sampled_from(specs), st.sampled_from(specs))
def test_distance_symmetric_and_triangle(p, q, r):
    dpq = _vec(coefficient_distance(p, q, n_probe=64))
    assert np.array_equal(dpq, _vec(coefficient_distance(q, p, n_probe=64)))
    dqr = _vec(coefficient_distance(q, r, n_probe=64))
    dpr = _vec(coefficient_distance(p, r, n_probe=64))
    assert np.all(dpr <= dpq + dqr + 1e-12)
    assert np.all(np.isfinite(dpq)) and np.all(dpq >= 0)


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(specs), st.floats(-3, 3), st.floats(-3, 3))
def test_kirchhoff_monotone(p, u, v):
    lo, hi = min(u, v), max(u, v)
    Blo, Hlo = kirchhoff(p, lo)
    Bhi, Hhi = kirchhoff(p, hi)
    assert Blo <= Bhi + 1e-14 and Hlo <= Hhi + 1e-14

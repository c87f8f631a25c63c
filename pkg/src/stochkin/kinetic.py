r"""Kinetic machinery: the eta_rho family, kinetic functions H(xi - u), the
doubling identity, and discrete estimators of the defect measures.

The weak-form residual evaluates, along a discrete trajectory and for a test
function phi(xi, x), every term of the time-integrated kinetic equation

    \iint H(xi - u(t)) phi  =  \iint H(xi - u_0) phi
        + \int_0^t \iint H(xi - u) F_u(xi, x) phi_x
        - \int_0^t \iint H(xi - u) D_x F(xi, x) phi_xi
        + \int_0^t \iint H(xi - u) (a(xi) + eps) phi_xx
        - 1/2 \int_0^t \int sigma(u)^2 phi_xi(u, x)
        + n(phi_xi) + m(phi_xi)
        - \int_0^t \int sigma(u) phi(u, x) dW

and returns what is left over for ``-m(phi_xi)``, i.e. the kinetic defect
tested against ``-phi_xi``.  For phi nonincreasing in xi this should be
nonnegative up to the scheme error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import _bump
from .fv import Trajectory
from .noise import NoisePath, coarsen, refine_to
from .torus import TorusField, positive_part_l1


# -- eta_rho ------------------------------------------------------------------

@dataclass(frozen=True)
class EtaFamily:
    """Convex regularization eta_rho of r -> (r)_+.

    eta''_rho is the normalized bump scaled to [-rho, rho], eta'_rho its
    running integral and eta_rho the integral of that; eta_rho(r) = (r)_+
    exactly for |r| >= rho.
    """

    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    def eta(self, r):
        r = np.asarray(r, dtype=float)
        return self.rho * _bump.cdf2(r / self.rho)

    def eta_prime(self, r):
        return _bump.cdf(np.asarray(r, dtype=float) / self.rho)

    def eta_double_prime(self, r):
        return _bump.bump(np.asarray(r, dtype=float) / self.rho) / self.rho

    def eta_double_prime_scalar(self, r: float) -> float:
        return _bump.bump_scalar(r / self.rho) / self.rho

    @property
    def eta_at_zero(self) -> float:
        return self.rho * _bump.CDF2_AT_ZERO


def build_eta(rho: float) -> EtaFamily:
    return EtaFamily(float(rho))


def doubling_identity_check(u: float, v: float, eta: EtaFamily, xi_box):
    """Compare  iint H(xi-u) (1 - H(zeta-v)) eta''(zeta - xi) dzeta dxi  with eta(v - u).

    The double integral is done by nested adaptive Gauss-Kronrod quadrature
    in (xi, r = zeta - xi) coordinates, where eta'' lives on the band
    |r| <= rho.  Returns ``(lhs, rhs)``.
    """
    rho = eta.rho
    lo, hi = float(xi_box[0]), float(xi_box[1])
    if lo > min(u, v) - 2 * rho or hi < max(u, v) + 2 * rho:
        raise ValueError("xi_box must contain [min(u,v) - 2 rho, max(u,v) + 2 rho]")
    f = eta.eta_double_prime_scalar

    def inner(xi):
        # zeta ranges over [lo, min(v, hi)]; as r = zeta - xi this meets the band [-rho, rho]
        r_lo = max(-rho, lo - xi)
        r_hi = min(rho, v - xi)
        if r_hi <= r_lo:
            return 0.0
        return integrate.quad(f, r_lo, r_hi, epsabs=1e-13, epsrel=1e-12, limit=100)[0]

    # H(xi - u) restricts to xi > u; the inner integral vanishes once xi >= v + rho
    a, b = max(u, lo), min(v + rho, hi)
    if b <= a:
        lhs = 0.0
    else:
        # the inner integral is identically 1 left of v - rho
        full = max(0.0, min(v - rho, b) - a)
        a2 = max(a, v - rho)
        lhs = full
        if b > a2:
            lhs += integrate.quad(inner, a2, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    rhs = float(eta.eta(v - u))
    return lhs, rhs


# -- kinetic functions ----------------------------------------------------------

def heaviside(r):
    """H(r) with H(0) = 1/2."""
    r = np.asarray(r, dtype=float)
    return np.where(r > 0, 1.0, np.where(r < 0, 0.0, 0.5))


@dataclass(frozen=True, eq=False)
class KineticSample:
    """chi[i, j] = H(xi_j - u_i) on an increasing xi grid."""

    xi_grid: np.ndarray
    chi: np.ndarray


def kinetic_sample(f: TorusField, xi_grid) -> KineticSample:
    xi = np.asarray(xi_grid, dtype=float)
    if np.any(np.diff(xi) <= 0):
        raise ValueError("xi_grid must be strictly increasing")
    return KineticSample(xi, heaviside(xi[None, :] - f.values[:, None]))


def positive_part_identity(u: TorusField, v: TorusField, xi_box):
    """``(kinetic_integral, direct)`` for int H(xi - u)(1 - H(xi - v)) dxi dx vs int (v - u)_+.

    The xi integral is exact for cell-constant fields: the integrand is
    piecewise constant between the breakpoints {xi_box, u_i, v_i}, so it is
    evaluated at the midpoint of each piece and weighted by its length.
    """
    lo, hi = float(xi_box[0]), float(xi_box[1])
    uv = np.concatenate([u.values, v.values])
    if lo > uv.min() or hi < uv.max():
        raise ValueError("xi_box must cover the ranges of both fields")
    n = u.n_cells
    pts = np.sort(np.column_stack([np.full(n, lo), np.full(n, hi), u.values, v.values]), axis=1)
    mids = 0.5 * (pts[:, 1:] + pts[:, :-1])
    lengths = np.diff(pts, axis=1)
    integrand = heaviside(mids - u.values[:, None]) * (1.0 - heaviside(mids - v.values[:, None]))
    kinetic = float(u.dx * np.sum(np.sum(integrand * lengths, axis=1)))
    return kinetic, positive_part_l1(u, v)


# -- test functions -------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Smooth phi(xi, x) with derivatives, vanishing for xi >= ``xi_max``."""

    __test__ = False  # not a pytest class

    phi: Callable
    phi_xi: Callable
    phi_x: Callable
    phi_xx: Callable
    xi_max: float
    name: str = "phi"


def _weight(amp: float):
    tp = 2 * math.pi
    return (lambda x: 1.0 + amp * np.cos(tp * x),
            lambda x: -amp * tp * np.sin(tp * x),
            lambda x: -amp * tp * tp * np.cos(tp * x))


def step_test(center: float = 0.0, width: float = 1.0, amp: float = 0.0) -> TestFunction:
    """phi = s(xi) w(x): s falls smoothly from 1 to 0 on [center-width, center+width];
    w(x) = 1 + amp cos(2 pi x) >= 0 for |amp| <= 1.  phi_xi <= 0."""
    if abs(amp) > 1:
        raise ValueError("|amp| must be <= 1 to keep phi >= 0")
    w, wx, wxx = _weight(amp)

    def s(xi):
        return 1.0 - _bump.cdf((np.asarray(xi) - center) / width)

    def ds(xi):
        return -_bump.bump((np.asarray(xi) - center) / width) / width

    return TestFunction(phi=lambda xi, x: s(xi) * w(x), phi_xi=lambda xi, x: ds(xi) * w(x),
                        phi_x=lambda xi, x: s(xi) * wx(x), phi_xx=lambda xi, x: s(xi) * wxx(x),
                        xi_max=center + width, name=f"step(c={center:g},w={width:g},amp={amp:g})")


def ramp_test(xi_max: float, rho: float = 0.25, amp: float = 0.0) -> TestFunction:
    """phi = eta_rho(xi_max - rho - xi) w(x): a smoothed (xi_top - xi)_+ ramp; phi_xi <= 0."""
    eta = EtaFamily(rho)
    top = xi_max - rho
    w, wx, wxx = _weight(amp)
    return TestFunction(
        phi=lambda xi, x: eta.eta(top - np.asarray(xi)) * w(x),
        phi_xi=lambda xi, x: -eta.eta_prime(top - np.asarray(xi)) * w(x),
        phi_x=lambda xi, x: eta.eta(top - np.asarray(xi)) * wx(x),
        phi_xx=lambda xi, x: eta.eta(top - np.asarray(xi)) * wxx(x),
        xi_max=xi_max, name=f"ramp(top={xi_max:g},rho={rho:g},amp={amp:g})")


def constant_test(value: float = 1.0) -> Callable:
    """phi == value as a plain evaluator, for total masses."""
    return lambda xi, x: np.full(np.broadcast(np.asarray(xi), np.asarray(x)).shape, float(value))


# -- defect measures --------------------------------------------------------------

@dataclass(frozen=True)
class DefectEstimate:
    n_mass: float
    p_mass: float
    m_residual: float
    terms: dict = field(default_factory=dict, compare=False)


def _left_states(traj: Trajectory) -> np.ndarray:
    # left-endpoint (Ito) sampling: every saved state except the last
    return traj.states[:-1]


def _eval_test(test, xi, x):
    fn = test.phi if isinstance(test, TestFunction) else test
    return np.asarray(fn(xi, x), dtype=float)


def centered_derivative(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) * (n / 2.0)


def parabolic_defect(traj: Trajectory, test) -> float:
    """n(phi) = int int |d/dx B_half(u)|^2 phi(u, x) dx dt with centered differences."""
    spec = traj.problem
    if not spec.has_diffusion:
        return 0.0
    U = _left_states(traj)
    x = (np.arange(traj.n_cells) + 0.5) / traj.n_cells
    g = centered_derivative(spec.B_half(U)) ** 2
    return float(traj.output_dt / traj.n_cells * np.sum(g * _eval_test(test, U, x[None, :])))


def ito_correction(traj: Trajectory, test) -> float:
    """p(phi) = 1/2 int int sigma(u)^2 phi(u, x) dx dt."""
    U = _left_states(traj)
    x = (np.arange(traj.n_cells) + 0.5) / traj.n_cells
    s2 = traj.problem.sigma(U) ** 2
    return float(0.5 * traj.output_dt / traj.n_cells * np.sum(s2 * _eval_test(test, U, x[None, :])))


# -- weak-form residual -----------------------------------------------------------

_GL_N = 48
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)


def _upper_integral(g, u, x, top):
    """int_{u}^{top} g(xi, x) dxi per entry of ``u`` (zero where u >= top)."""
    a = np.minimum(u, top)
    half = 0.5 * (top - a)
    xi = (a + half)[..., None] + half[..., None] * _GL_X
    vals = g(xi, x[..., None])
    return half * (vals @ _GL_W)


def _summed_upper_integral(g, U, x, top, max_nodes=2_000_000):
    """Sum over all rows of ``U`` (time x cells) of int_u^top g, chunked in time."""
    rows = max(1, max_nodes // (U.shape[-1] * _GL_N))
    total = 0.0
    for k in range(0, U.shape[0], rows):
        blk = U[k:k + rows]
        total += float(np.sum(_upper_integral(g, blk, np.broadcast_to(x, blk.shape), top)))
    return total


def weak_form_residual(traj: Trajectory, path: NoisePath, phi: TestFunction,
                       return_terms: bool = False):
    """Residual attributed to -m(phi_xi) along ``traj`` (see module docstring).

    ``traj`` must store every solver step and ``path`` must be the path that
    drove it (it is refined or subsampled to the trajectory's step).
    """
    if not isinstance(phi, TestFunction) or not np.isfinite(phi.xi_max):
        raise ValueError("weak_form_residual needs a TestFunction with finite xi support")
    probe_x = np.linspace(0, 1, 17)
    if np.max(np.abs(phi.phi(np.full(17, phi.xi_max + 1e-9), probe_x))) > 1e-12:
        raise ValueError(f"test function {phi.name} is not supported below xi_max={phi.xi_max}")
    if traj.save_every != 1:
        raise ValueError("weak_form_residual needs every solver step (save_every=1)")
    n_steps = len(traj) - 1
    if path.n_steps < n_steps:
        path = refine_to(path, n_steps)
    if path.n_steps != n_steps:
        path = coarsen(path, n_steps)
    if not np.isclose(path.t_final, traj.times[-1], rtol=1e-12, atol=0.0):
        raise ValueError("path horizon does not match the trajectory")

    spec, cfg = traj.problem, traj.config
    n = traj.n_cells
    dx, dt = 1.0 / n, traj.dt
    x = (np.arange(n) + 0.5) * dx
    top = phi.xi_max
    U = traj.states
    UL = U[:-1]
    X = np.broadcast_to(x, UL.shape)

    lhs = dx * (_summed_upper_integral(phi.phi, U[-1:], x, top)
                - _summed_upper_integral(phi.phi, U[:1], x, top))

    flux_term = dt * dx * _summed_upper_integral(
        lambda xi, xx: spec.flux_u(xi, xx) * phi.phi_x(xi, xx), UL, x, top)
    if spec.homogeneous:
        div_term = 0.0
    else:
        div_term = -dt * dx * _summed_upper_integral(
            lambda xi, xx: spec.div_flux(xi, xx) * phi.phi_xi(xi, xx), UL, x, top)
    eps = cfg.epsilon

    def diff_integrand(xi, xx):
        a = spec.diffusion(xi) if spec.has_diffusion else 0.0
        return (a + eps) * phi.phi_xx(xi, xx)

    diff_term = dt * dx * _summed_upper_integral(diff_integrand, UL, x, top)
    phi_xi_u = phi.phi_xi(UL, X)
    ito_term = -0.5 * dt * dx * np.sum(spec.sigma(UL) ** 2 * phi_xi_u)
    if spec.has_diffusion:
        n_term = dt * dx * np.sum(centered_derivative(spec.B_half(UL)) ** 2 * phi_xi_u)
    else:
        n_term = 0.0
    dW = path.increments
    noise_term = -dx * np.sum(np.sum(spec.sigma(UL) * phi.phi(UL, X), axis=1) * dW)

    m_phi_xi = lhs - (flux_term + div_term + diff_term + ito_term + n_term + noise_term)
    residual = float(-m_phi_xi)
    if not return_terms:
        return residual
    terms = {"lhs": lhs, "flux": flux_term, "div_flux": div_term, "diffusion": diff_term,
             "ito": ito_term, "parabolic": n_term, "noise": noise_term}
    return residual, {k: float(v) for k, v in terms.items()}


def defect_estimate(traj: Trajectory, path: Optional[NoisePath], phi: TestFunction) -> DefectEstimate:
    """Total parabolic/Ito masses (phi = 1) and the kinetic residual against ``phi``."""
    one = constant_test(1.0)
    res, terms = weak_form_residual(traj, path, phi, return_terms=True)
    return DefectEstimate(n_mass=parabolic_defect(traj, one), p_mass=ito_correction(traj, one),
                          m_residual=res, terms=terms)


def viscous_dissipation(traj: Trajectory, phi: TestFunction) -> float:
    """eps int int |u_x|^2 (-phi_xi(u, x)): the kinetic measure of an eps-viscous solution."""
    eps = traj.config.epsilon
    UL = _left_states(traj)
    x = (np.arange(traj.n_cells) + 0.5) / traj.n_cells
    ux2 = centered_derivative(UL) ** 2
    return float(eps * traj.output_dt / traj.n_cells * np.sum(ux2 * -phi.phi_xi(UL, x[None, :])))


# -- identity suite ---------------------------------------------------------------

@dataclass(frozen=True)
class IdentityCheck:
    check_id: str
    max_abs_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_error <= self.tolerance)


def identity_suite(seed: int = 0, n_cases: int = 1000, rhos=(0.01, 0.1, 0.5, 2.0)):
    """Randomized checks of the eta family, the doubling identity and the
    positive-part identity.  Returns a list of :class:`IdentityCheck`."""
    rng = np.random.default_rng(seed)
    out = []

    err = 0.0
    for _ in range(n_cases):
        u, v = rng.uniform(-2.0, 2.0, 2)
        rho = float(rng.uniform(0.01, 0.5))
        lhs, rhs = doubling_identity_check(u, v, build_eta(rho),
                                           (min(u, v) - 3 * rho, max(u, v) + 3 * rho))
        err = max(err, abs(lhs - rhs))
    out.append(IdentityCheck("doubling_identity", err, 1e-6))

    err = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(3, 65))
        u = TorusField(rng.uniform(-2.0, 2.0, n))
        v = TorusField(rng.uniform(-2.0, 2.0, n))
        kin, direct = positive_part_identity(u, v, (-2.5, 2.5))
        err = max(err, abs(kin - direct))
    out.append(IdentityCheck("positive_part_identity", err, 1e-8))

    outside = symmetry = convex = band = mass = 0.0
    for rho in rhos:
        eta = build_eta(rho)
        r = rho * np.concatenate([rng.uniform(1.0, 5.0, n_cases), -rng.uniform(1.0, 5.0, n_cases),
                                  [1.0, -1.0]])
        outside = max(outside, float(np.max(np.abs(eta.eta(r) - np.maximum(r, 0.0)))))
        s = rho * rng.uniform(-1.5, 1.5, n_cases)
        symmetry = max(symmetry, float(np.max(np.abs(1.0 - eta.eta_prime(s) - eta.eta_prime(-s)))))
        convex = max(convex, float(-np.min(eta.eta_double_prime(s))), 0.0)
        gap = eta.eta(s) - np.maximum(s, 0.0)
        band = max(band, float(max(-np.min(gap), np.max(gap) - eta.eta_at_zero, 0.0)))
        total = integrate.quad(eta.eta_double_prime_scalar, -rho, rho, epsabs=1e-14, epsrel=1e-13,
                               limit=200)[0]
        mass = max(mass, abs(total - 1.0))
    out.append(IdentityCheck("eta_outside_band", outside, 1e-10))
    out.append(IdentityCheck("eta_symmetry", symmetry, 1e-12))
    out.append(IdentityCheck("eta_convexity", convex, 0.0))
    out.append(IdentityCheck("eta_gap_range", band, 1e-12))
    out.append(IdentityCheck("eta_mass", mass, 1e-10))
    return out

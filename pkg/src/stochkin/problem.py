"""Coefficient data (flux, degenerate diffusion, noise) for the 1-D torus problem

    du + d/dx F(u, x) dt = d^2/dx^2 B(u) dt + sigma(u) dW,   B' = a >= 0.

A :class:`ProblemSpec` bundles vectorized evaluators together with the
Hoelder exponents the estimates need as inputs.  Builtins declare their
exponents explicitly; nothing is inferred.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

Array = np.ndarray
DEFAULT_U_BOX = (-3.0, 3.0)


def _zero(u, x=None):
    u = np.asarray(u, dtype=float)
    if x is None:
        return np.zeros_like(u)
    return np.zeros(np.broadcast(u, np.asarray(x)).shape)


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable coefficient quadruple with smoothness metadata.

    ``div_flux`` is the explicit x-derivative D_x F(u, x) and ``flux_ux`` its
    u-derivative D_x F_u.  ``kirchhoff_B`` / ``kirchhoff_half`` are optional
    closed forms for int_0^u a and int_0^u sqrt(a); when absent they are
    evaluated by adaptive quadrature.
    """

    name: str
    flux: Callable
    flux_u: Callable
    div_flux: Callable
    flux_ux: Callable
    diffusion: Callable
    sigma: Callable
    kappa_F1: float
    kappa_F2: float
    lambda_sigma: float
    gamma_alpha: float
    params: dict = field(default_factory=dict)
    kirchhoff_B: Optional[Callable] = None
    kirchhoff_half: Optional[Callable] = None
    # growth orders of the Hoelder bounds (|u|^{p-1} and |u|^q factors)
    growth_p: float = 1.0
    growth_q: float = 0.0
    holder_constant: float = 1.0
    u_box: tuple = DEFAULT_U_BOX
    # sup over the probe box of |D_x F_u|; filled in by the builtins
    div_flux_u_sup: float = 0.0
    degenerate: bool = True
    homogeneous: bool = True
    # False when a == 0 identically, letting the solver skip the diffusion stencil
    has_diffusion: bool = True

    def alpha(self, u):
        return np.sqrt(np.maximum(self.diffusion(u), 0.0))

    def B(self, u):
        """Kirchhoff transform int_0^u a, vectorized."""
        if self.kirchhoff_B is not None:
            return self.kirchhoff_B(np.asarray(u, dtype=float))
        return _quad_antiderivative(self.diffusion, u)

    def B_half(self, u):
        if self.kirchhoff_half is not None:
            return self.kirchhoff_half(np.asarray(u, dtype=float))
        return _quad_antiderivative(self.alpha, u)

    def max_speed(self, u_lo: float, u_hi: float, n_probe: int = 65) -> float:
        """sup |F_u| over [u_lo, u_hi] x torus, by sampling."""
        us = np.linspace(u_lo, u_hi, n_probe)[:, None]
        xs = np.linspace(0.0, 1.0, n_probe, endpoint=False)[None, :]
        return float(np.max(np.abs(self.flux_u(us, xs))))

    def max_diffusion(self, u_lo: float, u_hi: float, n_probe: int = 65) -> float:
        return float(np.max(self.diffusion(np.linspace(u_lo, u_hi, n_probe))))

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


def _quad_antiderivative(g, u):
    u = np.asarray(u, dtype=float)
    flat = u.reshape(-1)
    out = np.empty_like(flat)
    for i, ui in enumerate(flat):
        val, err = integrate.quad(lambda s: float(g(np.array(s))), 0.0, float(ui),
                                  epsabs=1e-12, epsrel=1e-12, limit=200)
        if err > 1e-10:
            raise ArithmeticError(f"Kirchhoff quadrature did not converge at u={ui} (err={err:.2e})")
        out[i] = val
    return out.reshape(u.shape)


def kirchhoff(spec: ProblemSpec, u: float):
    """Return ``(B(u), B_half(u))`` with B = int_0^u a and B_half = int_0^u sqrt(a)."""
    return float(spec.B(u)), float(spec.B_half(u))


# -- noise coefficients ------------------------------------------------------

def _noise(kind: str, sigma0: float):
    if kind == "linear":
        return (lambda u: sigma0 * np.asarray(u, dtype=float)), 1.0
    if kind == "sqrt":
        return (lambda u: sigma0 * np.sqrt(1.0 + np.asarray(u, dtype=float) ** 2)), 1.0
    if kind == "constant":
        return (lambda u: np.full(np.shape(u), float(sigma0))), 1.0
    raise ValueError(f"unknown noise kind {kind!r}; expected linear, sqrt or constant")


# -- builtins ----------------------------------------------------------------

def _het_burgers(eps_c=0.5, sigma0=0.0, noise="linear"):
    eps_c = float(eps_c)
    two_pi = 2 * math.pi

    def c(x):
        return 1.0 + eps_c * np.sin(two_pi * x)

    def dc(x):
        return eps_c * two_pi * np.cos(two_pi * x)

    sig, lam = _noise(noise, float(sigma0))
    u_max = max(abs(b) for b in DEFAULT_U_BOX)
    return ProblemSpec(
        name="het_burgers",
        flux=lambda u, x: 0.5 * c(x) * np.asarray(u) ** 2,
        flux_u=lambda u, x: c(x) * np.asarray(u),
        div_flux=lambda u, x: 0.5 * dc(x) * np.asarray(u) ** 2,
        flux_ux=lambda u, x: dc(x) * np.asarray(u),
        diffusion=_zero,
        sigma=sig,
        kappa_F1=1.0, kappa_F2=1.0, lambda_sigma=lam, gamma_alpha=1.0,
        params={"eps_c": eps_c, "sigma0": float(sigma0), "noise": noise},
        kirchhoff_B=_zero, kirchhoff_half=_zero,
        growth_p=1.0, growth_q=2.0,
        holder_constant=max(1.0 + eps_c, eps_c * two_pi ** 2 / 2),
        div_flux_u_sup=eps_c * two_pi * u_max,
        degenerate=True, homogeneous=(eps_c == 0.0), has_diffusion=False,
    )


def _viscous_burgers(nu=0.05, sigma0=0.0, noise="linear"):
    nu = float(nu)
    sig, lam = _noise(noise, float(sigma0))
    return ProblemSpec(
        name="viscous_burgers",
        flux=lambda u, x: 0.5 * np.asarray(u) ** 2 + 0.0 * np.asarray(x),
        flux_u=lambda u, x: np.asarray(u) + 0.0 * np.asarray(x),
        div_flux=_zero, flux_ux=_zero,
        diffusion=lambda u: np.full(np.shape(u), nu),
        sigma=sig,
        kappa_F1=1.0, kappa_F2=1.0, lambda_sigma=lam, gamma_alpha=1.0,
        params={"nu": nu, "sigma0": float(sigma0), "noise": noise},
        kirchhoff_B=lambda u: nu * u,
        kirchhoff_half=lambda u: math.sqrt(nu) * u,
        growth_p=1.0, growth_q=0.0, holder_constant=1.0,
        degenerate=(nu == 0.0), homogeneous=True,
    )


def _porous_medium(m=2.0, sigma0=0.0, noise="linear"):
    m = float(m)
    if m < 1.0:
        raise ValueError("porous_medium needs m >= 1")
    sig, lam = _noise(noise, float(sigma0))
    k = (m + 1.0) / 2.0
    # alpha = sqrt(m)|u|^{(m-1)/2}; Hoelder with exponent (m-1)/2 near 0, capped at 1
    gamma = min((m - 1.0) / 2.0, 1.0) if m > 1.0 else 1.0
    return ProblemSpec(
        name="porous_medium",
        flux=_zero, flux_u=_zero, div_flux=_zero, flux_ux=_zero,
        diffusion=lambda u: m * np.abs(np.asarray(u, dtype=float)) ** (m - 1.0),
        sigma=sig,
        kappa_F1=1.0, kappa_F2=1.0, lambda_sigma=lam, gamma_alpha=gamma,
        params={"m": m, "sigma0": float(sigma0), "noise": noise},
        kirchhoff_B=lambda u: np.sign(u) * np.abs(u) ** m,
        kirchhoff_half=lambda u: np.sign(u) * math.sqrt(m) * np.abs(u) ** k / k,
        growth_p=1.0, growth_q=0.0, holder_constant=1.0,
        degenerate=True, homogeneous=True,
    )


def _linear_advection(c=1.0, sigma0=0.0, noise="linear"):
    c = float(c)
    sig, lam = _noise(noise, float(sigma0))
    return ProblemSpec(
        name="linear_advection",
        flux=lambda u, x: c * np.asarray(u) + 0.0 * np.asarray(x),
        flux_u=lambda u, x: np.full(np.broadcast(np.asarray(u), np.asarray(x)).shape, c),
        div_flux=_zero, flux_ux=_zero,
        diffusion=_zero,
        sigma=sig,
        kappa_F1=1.0, kappa_F2=1.0, lambda_sigma=lam, gamma_alpha=1.0,
        params={"c": c, "sigma0": float(sigma0), "noise": noise},
        kirchhoff_B=_zero, kirchhoff_half=_zero,
        growth_p=1.0, growth_q=0.0, holder_constant=1.0,
        degenerate=True, homogeneous=True, has_diffusion=False,
    )


BUILTINS = {
    "het_burgers": _het_burgers,
    "viscous_burgers": _viscous_burgers,
    "porous_medium": _porous_medium,
    "linear_advection": _linear_advection,
}


def builtin_problem(name: str, **params) -> ProblemSpec:
    """Instantiate a builtin problem by name.

    Parameters (all optional):

    * ``het_burgers``: ``eps_c`` -- F(u, x) = (1 + eps_c sin 2 pi x) u^2 / 2.
    * ``viscous_burgers``: ``nu`` -- F = u^2/2 with constant diffusion a = nu.
    * ``porous_medium``: ``m`` -- F = 0, a(u) = m |u|^(m-1).
    * ``linear_advection``: ``c`` -- F = c u, a = 0.

    Every builtin also takes ``sigma0`` and ``noise`` in {"linear", "sqrt",
    "constant"} selecting sigma0*u, sigma0*sqrt(1+u^2) or sigma0.
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


# -- perturbations used by the continuous-dependence experiments -------------

def perturb(spec: ProblemSpec, axis: str, delta: float) -> ProblemSpec:
    """One-parameter perturbation q_delta of ``spec`` along a single axis.

    ``sigma``:     tau = sigma + delta
    ``diffusion``: a -> a + delta**2   (so sup|sqrt(a') - sqrt(a)| <= delta)
    ``flux_u``:    G = F + delta*u     (G_u - F_u = delta, D_x unchanged)
    ``div_flux``:  G = F + delta*sin(2 pi x)/(2 pi)   (D_x(G - F) = delta cos 2 pi x)
    """
    d = float(delta)
    if axis == "sigma":
        s = spec.sigma
        return spec.replace(sigma=lambda u: s(u) + d, name=f"{spec.name}+sigma({d:g})")
    if axis == "diffusion":
        a, B = spec.diffusion, spec.B
        return spec.replace(
            diffusion=lambda u: a(u) + d * d,
            kirchhoff_B=lambda u: B(u) + d * d * np.asarray(u),
            kirchhoff_half=None,
            degenerate=spec.degenerate and d == 0.0,
            has_diffusion=spec.has_diffusion or d != 0.0,
            name=f"{spec.name}+diff({d:g})",
        )
    if axis == "flux_u":
        f, fu = spec.flux, spec.flux_u
        return spec.replace(flux=lambda u, x: f(u, x) + d * np.asarray(u),
                            flux_u=lambda u, x: fu(u, x) + d,
                            name=f"{spec.name}+flux_u({d:g})")
    if axis == "div_flux":
        f, df = spec.flux, spec.div_flux
        tp = 2 * math.pi
        return spec.replace(
            flux=lambda u, x: f(u, x) + d * np.sin(tp * np.asarray(x)) / tp,
            div_flux=lambda u, x: df(u, x) + d * np.cos(tp * np.asarray(x)),
            homogeneous=spec.homogeneous and d == 0.0,
            name=f"{spec.name}+div_flux({d:g})",
        )
    raise ValueError(f"unknown perturbation axis {axis!r}")


@dataclass(frozen=True)
class CoefficientDistance:
    d_flux_u: float
    d_div_flux: float
    d_sqrt_diff: float
    d_sigma: float
    probe_box: tuple

    def composite(self, mu: float) -> float:
        """Bracket of the continuous dependence rate:
        max(d_flux_u, d_sqrt_diff) + max(d_sigma, d_div_flux)**mu."""
        return max(self.d_flux_u, self.d_sqrt_diff) + max(self.d_sigma, self.d_div_flux) ** mu


def coefficient_distance(p: ProblemSpec, q: ProblemSpec, u_box=DEFAULT_U_BOX,
                         n_probe: int = 512) -> CoefficientDistance:
    """Sup-norm distances between two coefficient sets on a dense probe grid."""
    if n_probe < 64:
        raise ValueError("n_probe must be at least 64")
    us = np.linspace(u_box[0], u_box[1], n_probe)
    xs = np.arange(n_probe) / n_probe
    U, X = us[:, None], xs[None, :]
    return CoefficientDistance(
        d_flux_u=float(np.max(np.abs(q.flux_u(U, X) - p.flux_u(U, X)))),
        d_div_flux=float(np.max(np.abs(q.div_flux(U, X) - p.div_flux(U, X)))),
        d_sqrt_diff=float(np.max(np.abs(q.alpha(us) - p.alpha(us)))),
        d_sigma=float(np.max(np.abs(q.sigma(us) - p.sigma(us)))),
        probe_box=(float(u_box[0]), float(u_box[1]), 0.0, 1.0),
    )


def holder_ratio(f, exponent: float, u, v):
    """max |f(u) - f(v)| / |u - v|^exponent over paired probes (u != v)."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    keep = u != v
    return float(np.max(np.abs(f(u[keep]) - f(v[keep])) / np.abs(u[keep] - v[keep]) ** exponent))

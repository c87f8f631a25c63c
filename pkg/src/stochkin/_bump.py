"""Normalized C-infinity bump on [-1, 1] and tabulated antiderivatives.

The bump is ``C * exp(1 / (r**2 - 1))`` for ``|r| < 1`` and zero elsewhere.
Two antiderivatives are tabulated once at import time:

``cdf(r)``    = int_{-1}^r bump(s) ds          (rises from 0 to 1)
``cdf2(r)``   = int_{-1}^r cdf(s) ds           (convex, equals r for r >= 1)

Tables live on [-1, 0] only; the right half follows from the evenness of the
bump, ``cdf(r) = 1 - cdf(-r)`` and ``cdf2(r) = r + cdf2(-r)``, which makes
those symmetries hold to the last bit.
"""

import math

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

_N_TABLE = 4096
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _raw(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 / (ri * ri - 1.0))
    return out


def _raw_scalar(r):
    if abs(r) >= 1.0:
        return 0.0
    return math.exp(1.0 / (r * r - 1.0))


_MASS, _ = integrate.quad(_raw_scalar, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
NORMALIZATION = 1.0 / _MASS


def bump(r):
    """Unit-mass even bump supported on [-1, 1] (vectorized)."""
    return NORMALIZATION * _raw(r)


def bump_scalar(r):
    return NORMALIZATION * _raw_scalar(r)


def _build_tables():
    nodes = np.linspace(-1.0, 0.0, _N_TABLE + 1)
    h = nodes[1] - nodes[0]
    # Gauss-Legendre on every subinterval; the bump is smooth inside (-1, 1).
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    s = mid[:, None] + 0.5 * h * _GL_X[None, :]
    b = bump(s)
    seg_mass = 0.5 * h * (b @ _GL_W)
    seg_moment = 0.5 * h * ((nodes[1:, None] - s) * b @ _GL_W)

    cdf = np.concatenate([[0.0], np.cumsum(seg_mass)])
    # int_{r_k}^{r_k+1} cdf = h * cdf(r_k) + int (r_k+1 - s) bump(s) ds
    cdf2 = np.concatenate([[0.0], np.cumsum(h * cdf[:-1] + seg_moment)])
    # pin the exact half-mass value forced by evenness
    cdf[-1] = 0.5
    return nodes, cdf, cdf2


_NODES, _CDF_TAB, _CDF2_TAB = _build_tables()
_CDF_SPLINE = CubicHermiteSpline(_NODES, _CDF_TAB, bump(_NODES))
_CDF2_SPLINE = CubicHermiteSpline(_NODES, _CDF2_TAB, _CDF_TAB)

#: value of cdf2 at the origin, i.e. eta_1(0) for the unit-width eta family
CDF2_AT_ZERO = float(_CDF2_TAB[-1])


def cdf(r):
    r = np.asarray(r, dtype=float)
    neg = np.minimum(r, -np.abs(r))  # = -|r|
    left = np.where(neg <= -1.0, 0.0, _CDF_SPLINE(np.clip(neg, -1.0, 0.0)))
    return np.where(r <= 0.0, left, 1.0 - left)


def cdf2(r):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    left = np.where(a >= 1.0, 0.0, _CDF2_SPLINE(np.clip(-a, -1.0, 0.0)))
    out = np.where(r <= 0.0, left, r + left)
    # outside the support the function is exactly (r)_+
    out = np.where(r >= 1.0, r, out)
    return np.where(r <= -1.0, 0.0, out)

"""Cell-averaged periodic fields on the unit torus [0, 1) and their norms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _bump

_GRID_TOL = 1e-9


@dataclass(frozen=True)
class TorusField:
    """Cell averages of u(x) on the unit torus.

    Cell ``i`` covers ``[i*dx, (i+1)*dx)`` with ``dx = 1/n_cells``; indices are
    taken modulo ``n_cells``.  The value array is copied and made read-only.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValueError("a TorusField needs at least one cell")
        if not np.all(np.isfinite(v)):
            raise ValueError("TorusField values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return 1.0 / self.values.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def __getitem__(self, i):
        return self.values[np.asarray(i) % self.n_cells]

    def __len__(self):
        return self.n_cells

    def mean(self) -> float:
        return float(np.mean(self.values))

    @classmethod
    def from_function(cls, f, n_cells: int, quad_points: int = 8) -> "TorusField":
        """Cell averages of ``f`` by Gauss-Legendre quadrature on each cell."""
        gx, gw = np.polynomial.legendre.leggauss(quad_points)
        dx = 1.0 / n_cells
        mid = (np.arange(n_cells) + 0.5) * dx
        pts = mid[:, None] + 0.5 * dx * gx[None, :]
        return cls(0.5 * (np.asarray(f(pts), dtype=float) @ gw))

    @classmethod
    def constant(cls, c: float, n_cells: int) -> "TorusField":
        return cls(np.full(n_cells, float(c)))

    @classmethod
    def indicator(cls, a: float, b: float, n_cells: int) -> "TorusField":
        """Cell averages of the indicator of [a, b) (no wrap)."""
        edges = np.arange(n_cells + 1) / n_cells
        overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
        return cls(overlap * n_cells)


def _check_same_grid(u: TorusField, v: TorusField):
    if u.n_cells != v.n_cells:
        raise ValueError(f"mismatched resolutions: {u.n_cells} vs {v.n_cells}")


def lp_norm(f: TorusField, p: float) -> float:
    if not np.isfinite(p):
        raise ValueError("p must be finite")
    if p < 1:
        raise ValueError("lp_norm requires p >= 1")
    return float((f.dx * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


def positive_part_l1(u: TorusField, v: TorusField) -> float:
    """Discrete integral of (v - u)_+ over the torus."""
    _check_same_grid(u, v)
    return float(u.dx * np.sum(np.maximum(v.values - u.values, 0.0)))


def l1_distance(u: TorusField, v: TorusField) -> float:
    _check_same_grid(u, v)
    return float(u.dx * np.sum(np.abs(v.values - u.values)))


def _grid_offset(h: float, n_cells: int) -> int:
    k = h * n_cells
    kr = round(k)
    if abs(k - kr) > _GRID_TOL * max(1.0, abs(k)):
        raise ValueError(f"shift h={h} is not a multiple of dx=1/{n_cells}")
    return int(kr)


def shift(f: TorusField, h: float) -> TorusField:
    """Return x -> f(x + h) for a grid-aligned shift ``h``."""
    k = _grid_offset(h, f.n_cells)
    return TorusField(np.roll(f.values, -k))


def nikolskii_seminorm(f: TorusField, kappa: float, h_max: float) -> float:
    """Discrete N^{kappa,1} semi-norm: max over h = dx..h_max of ||f(.+h) - f||_1 / h**kappa.

    Only grid-aligned shifts are used, and h_max is capped at 1/2.
    """
    if not 0.0 < kappa <= 1.0:
        raise ValueError("kappa must lie in (0, 1]")
    n = f.n_cells
    if h_max < f.dx * (1 - _GRID_TOL):
        raise ValueError("h_max must be at least dx")
    k_max = int(np.floor(min(h_max, 0.5) * n + _GRID_TOL))
    ks = np.arange(1, k_max + 1)
    diffs = np.array([np.sum(np.abs(np.roll(f.values, -k) - f.values)) for k in ks]) / n
    return float(np.max(diffs / (ks / n) ** kappa))


def bv_seminorm(f: TorusField) -> float:
    return float(np.sum(np.abs(np.roll(f.values, -1) - f.values)))


@dataclass(frozen=True)
class Mollifier:
    """Friedrichs mollifier J_theta(x) = J(x/theta)/theta built on the normalized bump."""

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta <= 0.5:
            raise ValueError("mollifier radius must lie in (0, 1/2]")

    def __call__(self, x):
        return _bump.bump(np.asarray(x, dtype=float) / self.theta) / self.theta

    def cell_weights(self, n_cells: int) -> np.ndarray:
        """Exact cell integrals of J_theta for offsets -m..m, renormalized to sum 1."""
        dx = 1.0 / n_cells
        m = int(np.ceil(self.theta / dx))
        j = np.arange(-m, m + 1)
        w = _bump.cdf((j + 0.5) * dx / self.theta) - _bump.cdf((j - 0.5) * dx / self.theta)
        return w / np.sum(w)


def mollify(f: TorusField, J: Mollifier) -> TorusField:
    """Periodic convolution J_theta * f on the cell grid."""
    if J.theta < 2 * f.dx * (1 - _GRID_TOL):
        raise ValueError(f"mollifier radius {J.theta} is under-resolved on dx={f.dx}")
    w = J.cell_weights(f.n_cells)
    m = (w.size - 1) // 2
    out = np.zeros(f.n_cells)
    for j, wj in zip(range(-m, m + 1), w):
        out += wj * np.roll(f.values, j)
    return TorusField(out)


def to_csv(f: TorusField, path=None) -> str:
    """Write ``index,value`` rows with a header; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for i, x in enumerate(f.values):
        w.writerow([i, repr(float(x))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def from_csv(source) -> TorusField:
    """Read a field written by :func:`to_csv` from a path or a text blob."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["index", "value"]:
        raise ValueError("field CSV must start with the header 'index,value'")
    body = [r for r in rows[1:] if r]
    idx = np.array([int(r[0]) for r in body])
    if not np.array_equal(np.sort(idx), np.arange(len(body))):
        raise ValueError("field CSV indices must cover 0..n-1 exactly once")
    vals = np.empty(len(body))
    vals[idx] = [float(r[1]) for r in body]
    return TorusField(vals)

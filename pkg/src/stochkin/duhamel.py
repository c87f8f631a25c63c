"""Spectral Picard iteration for the mild (Duhamel) form on the torus.

With a constant-coefficient heat kernel G_eps the iteration reads

    u^n(t) = G(t) u0 + int_0^t G(t-s) [ -d_x F(u^{n-1}, x) + d_xx B(u^{n-1}) ] ds
                     + int_0^t G(t-s) sigma(u^{n-1}(s)) dW(s)

i.e. the degenerate part of the diffusion is carried in the source.  Grid
values are point samples at the cell centres.  The source integral is
integrated exactly in time for a source frozen on each substep, the
stochastic integral uses the left endpoint.  Nonlinear terms are filtered
with the 2/3 rule.

This is an independent cross-check for the finite-volume solver on smooth,
short-time problems, not a production solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fv import Trajectory
from .noise import NoisePath, coarsen, refine_to
from .problem import ProblemSpec
from .torus import TorusField


class ContractionError(RuntimeError):
    """The Picard residuals stopped decreasing."""

    def __init__(self, message, ratio=None, history=()):
        super().__init__(message)
        self.ratio = ratio
        self.history = list(history)


@dataclass(frozen=True)
class DuhamelConfig:
    n_modes: int
    epsilon: float
    n_time: int
    tol: float = 1e-8
    max_iters: int = 50
    p: float = 2.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("the Duhamel oracle needs epsilon > 0")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.n_modes < 4:
            raise ValueError("need at least 4 modes")
        if self.n_time < 1 or self.n_time & (self.n_time - 1):
            raise ValueError("n_time must be a power of two")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


def _wavenumbers(n: int) -> np.ndarray:
    return np.fft.rfftfreq(n, d=1.0 / n)


def heat_symbol(n: int, nu: float, t: float) -> np.ndarray:
    """rfft symbol of the grid heat operator.

    The operator is the trapezoid-rule convolution with the periodic heat
    kernel sampled on the grid, renormalized to unit mass.  Its symbol is
    exp(-nu 4 pi^2 k^2 t) plus aliases exp(-nu 4 pi^2 (k + mN)^2 t), which are
    negligible once nu t N^2 is moderate; unlike the bare exponential it is a
    positive kernel, so its L1 operator norm is exactly 1.
    """
    if t < 0 or nu < 0:
        raise ValueError("nu and t must be non-negative")
    s = nu * t
    if s == 0.0:
        return np.ones(n // 2 + 1)
    x = np.arange(n) / n
    x = np.minimum(x, 1.0 - x)
    n_img = int(np.ceil(np.sqrt(4.0 * s * 40.0))) + 1
    images = np.arange(-n_img, n_img + 1)
    g = np.exp(-((x[:, None] + images[None, :]) ** 2) / (4.0 * s)).sum(axis=1)
    g /= g.sum()
    sym = np.fft.rfft(g).real
    sym[0] = 1.0
    return sym


def heat_kernel_weights(n: int, nu: float, t: float) -> np.ndarray:
    """Real-space convolution weights of :func:`heat_propagate` (offsets 0..n-1)."""
    return np.fft.irfft(heat_symbol(n, nu, t), n)


def heat_propagate(f: TorusField, nu: float, t: float) -> TorusField:
    """Apply the eps-heat semigroup e^{t nu d_xx} on the grid; mass is preserved."""
    n = f.n_cells
    if nu * t == 0.0:
        return f
    out = np.fft.irfft(np.fft.rfft(f.values) * heat_symbol(n, nu, t), n)
    # put back the exact mean, the zero mode is untouched by the symbol
    out += f.mean() - out.mean()
    return TorusField(out)


def _dealias(n: int) -> np.ndarray:
    k = _wavenumbers(n)
    return (k <= n / 3.0).astype(float)


def _grid_path(path: NoisePath, n_time: int) -> NoisePath:
    if path.n_steps < n_time:
        return refine_to(path, n_time)
    if path.n_steps > n_time:
        return coarsen(path, n_time)
    return path


def _sup_lp(diff: np.ndarray, p: float) -> float:
    n = diff.shape[-1]
    return float(np.max((np.sum(np.abs(diff) ** p, axis=-1) / n) ** (1.0 / p)))


def picard_solve(spec: ProblemSpec, u0: TorusField, cfg: DuhamelConfig, path: NoisePath):
    """Fixed-point iteration of the mild form.

    Returns ``(trajectory, iterations, residual_history)`` where the residual
    is sup_t ||u^n - u^{n-1}||_{L^p}.  Raises :class:`ContractionError` when
    the residuals grow for three successive iterations after the third, and
    when ``max_iters`` is exhausted.
    """
    n = cfg.n_modes
    if u0.n_cells != n:
        raise ValueError("initial data resolution must equal n_modes")
    path = _grid_path(path, cfg.n_time)
    dt = path.dt
    dW = path.increments
    times = path.times
    x = u0.centers
    k = _wavenumbers(n)
    ik = 2j * np.pi * k
    lam = cfg.epsilon * (2 * np.pi * k) ** 2
    E = np.exp(-lam * dt)
    phi1 = np.where(lam > 0, -np.expm1(-lam * dt) / np.where(lam > 0, lam, 1.0), dt)
    keep = _dealias(n)

    # the homogeneous part is the same in every iterate
    free = np.stack([heat_propagate(u0, cfg.epsilon, t).values for t in times])
    U = free.copy()
    history = []
    bad = 0
    for it in range(1, cfg.max_iters + 1):
        F_hat = np.fft.rfft(spec.flux(U[:-1], x[None, :]), axis=-1)
        S_hat = -ik * F_hat
        if spec.has_diffusion:
            S_hat = S_hat + ik ** 2 * np.fft.rfft(spec.B(U[:-1]), axis=-1)
        G_hat = np.fft.rfft(spec.sigma(U[:-1]), axis=-1)
        S_hat *= keep
        G_hat *= keep
        v = np.zeros(k.size, dtype=complex)
        V = np.zeros((times.size, n))
        for j in range(cfg.n_time):
            v = E * v + phi1 * S_hat[j] + E * G_hat[j] * dW[j]
            V[j + 1] = np.fft.irfft(v, n)
        U_new = free + V
        if not np.all(np.isfinite(U_new)):
            raise FloatingPointError(f"Picard iterate {it} is not finite")
        res = _sup_lp(U_new - U, cfg.p)
        history.append(res)
        U = U_new
        if res < cfg.tol:
            traj = Trajectory(times=times, states=U, dt=dt, save_every=1, config=cfg,
                              problem=spec, path_meta={"seed": path.seed, "n_steps": path.n_steps})
            return traj, it, history
        if it > 3 and history[-2] > 0 and res >= history[-2]:
            bad += 1
            if bad >= 3:
                ratio = res / history[-2]
                raise ContractionError(
                    f"Picard residuals are not decreasing (last ratio {ratio:.3g})",
                    ratio=ratio, history=history)
        else:
            bad = 0
    ratio = history[-1] / history[-2] if len(history) > 1 and history[-2] > 0 else None
    raise ContractionError(
        f"no convergence in {cfg.max_iters} iterations (residual {history[-1]:.3g}"
        + (f", last ratio {ratio:.3g})" if ratio is not None else ")"),
        ratio=ratio, history=history)


def residual_ratios(history) -> np.ndarray:
    h = np.asarray(history, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return h[1:] / h[:-1]

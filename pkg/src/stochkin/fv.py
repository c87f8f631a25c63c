"""Conservative finite volumes with Euler-Maruyama noise on the unit torus.

One step of size dt with Brownian increment dW reads

    u+_i = u_i - dt/dx (F_{i+1/2} - F_{i-1/2})
               + dt/dx^2 (B(u_{i+1}) - 2 B(u_i) + B(u_{i-1}))
               + eps dt/dx^2 (u_{i+1} - 2 u_i + u_{i-1})
               + sigma(u_i) dW

where the interface flux is evaluated at the interface coordinate
x_{i+1/2} = (i+1) dx, which is where the x-dependence of F enters.

The array kernel :func:`advance` works on stacks of fields (leading batch
axes) driven by one scalar increment per stack member; the public
:func:`step`, :func:`solve` and :func:`coupled_solve` wrap it for single
:class:`~stochkin.torus.TorusField` inputs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .noise import NoisePath, refine_to
from .problem import ProblemSpec
from .torus import TorusField

SCHEMES = ("local_lax_friedrichs", "engquist_osher")


class CFLError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n_cells: int
    t_final: float
    cfl: float = 0.4
    epsilon: float = 0.0
    flux_scheme: str = "local_lax_friedrichs"
    save_every: int = 1
    # CFL speeds are evaluated on [-headroom*M, headroom*M], M = max|u0|
    headroom: float = 1.5

    def __post_init__(self):
        if self.n_cells < 3:
            raise ValueError("need at least 3 cells")
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.flux_scheme not in SCHEMES:
            raise ValueError(f"flux_scheme must be one of {SCHEMES}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells


def cfl_number(dt, dx, max_speed, max_diff, epsilon):
    return dt * (max_speed / dx + 2.0 * (max_diff + epsilon) / dx ** 2)


def stable_dt(spec: ProblemSpec, cfg: SolverConfig, u_lo: float, u_hi: float) -> float:
    """Largest dt meeting the CFL invariant for states in [u_lo, u_hi]."""
    rate = (spec.max_speed(u_lo, u_hi) / cfg.dx
            + 2.0 * (spec.max_diffusion(u_lo, u_hi) + cfg.epsilon) / cfg.dx ** 2)
    return np.inf if rate == 0.0 else cfg.cfl / rate


def _sonic_point(fu, a, b, xf, iters=60):
    # bisection for F_u(s, x) = 0 on [min(a,b), max(a,b)]; only used where F_u changes sign
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    flo = fu(lo, xf)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fu(mid, xf)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def numerical_flux(spec: ProblemSpec, ul, ur, xf, scheme="local_lax_friedrichs"):
    """Interface flux F_{i+1/2}(ul, ur) at interface coordinates ``xf``.

    Returns ``(flux, speed)`` where ``speed`` is the local max |F_u| used for
    the CFL check.
    """
    fl, fr = spec.flux(ul, xf), spec.flux(ur, xf)
    sl, sr = spec.flux_u(ul, xf), spec.flux_u(ur, xf)
    speed = np.maximum(np.abs(sl), np.abs(sr))
    if scheme == "local_lax_friedrichs":
        return 0.5 * (fl + fr) - 0.5 * speed * (ur - ul), speed
    # Engquist-Osher: 1/2 (F(a) + F(b)) - 1/2 int_a^b |F_u| (signed integral).  F(., x) is assumed
    # convex or concave in u, so F_u changes sign at most once in between.
    crosses = (np.sign(sl) * np.sign(sr)) < 0
    total_var = np.abs(fr - fl)
    if np.any(crosses):
        s = _sonic_point(spec.flux_u, ul, ur, xf)
        fs = spec.flux(s, xf)
        total_var = np.where(crosses, np.abs(fs - fl) + np.abs(fr - fs), total_var)
    # the integral runs from ul to ur, so it changes sign when ur < ul
    return 0.5 * (fl + fr) - 0.5 * np.sign(ur - ul) * total_var, speed


def advance(u, dt, dW, spec: ProblemSpec, cfg: SolverConfig, check_cfl=True):
    """One step on an array of shape (..., n_cells); ``dW`` broadcasts over the leading axes."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    dx = 1.0 / n
    xf = (np.arange(n) + 1.0) * dx
    ur = np.roll(u, -1, axis=-1)
    flux, speed = numerical_flux(spec, u, ur, xf, cfg.flux_scheme)
    if check_cfl:
        max_diff = float(np.max(spec.diffusion(u))) if spec.has_diffusion else 0.0
        nu = cfl_number(dt, dx, float(np.max(speed)), max_diff, cfg.epsilon)
        if nu > 1.0 + 1e-12:
            raise CFLError(f"CFL violated: dt={dt:.3e} gives {nu:.3f} > 1")
    out = u - (dt / dx) * (flux - np.roll(flux, 1, axis=-1))
    if spec.has_diffusion:
        Bu = spec.B(u)
        out = out + (dt / dx ** 2) * (np.roll(Bu, -1, axis=-1) - 2.0 * Bu + np.roll(Bu, 1, axis=-1))
    if cfg.epsilon > 0.0:
        out = out + (cfg.epsilon * dt / dx ** 2) * (ur - 2.0 * u + np.roll(u, 1, axis=-1))
    dW = np.asarray(dW, dtype=float)
    if np.any(dW != 0.0):
        out = out + spec.sigma(u) * dW[..., None]
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite state produced by the solver step")
    return out


def step(u: TorusField, dt: float, dW: float, spec: ProblemSpec, cfg: SolverConfig) -> TorusField:
    return TorusField(advance(u.values, dt, dW, spec, cfg))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Saved states u(t_k) on a uniform output grid (every ``save_every`` steps)."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    save_every: int
    config: SolverConfig
    problem: ProblemSpec
    path_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times", "states"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.times.size

    @property
    def n_cells(self) -> int:
        return self.states.shape[1]

    def field(self, k: int) -> TorusField:
        return TorusField(self.states[k])

    @property
    def final(self) -> TorusField:
        return self.field(-1)

    @property
    def output_dt(self) -> float:
        return self.dt * self.save_every


def choose_dt(specs, u0s, cfg: SolverConfig) -> float:
    dts = []
    for spec, u0 in zip(specs, u0s):
        m = cfg.headroom * float(np.max(np.abs(u0))) + 1e-3
        dts.append(stable_dt(spec, cfg, -m, m))
    return min(dts)


def prepare_path(path: NoisePath, cfg: SolverConfig, dt_max: float) -> NoisePath:
    if not np.isclose(path.t_final, cfg.t_final, rtol=1e-12, atol=0.0):
        raise ValueError(f"path horizon {path.t_final} != solver t_final {cfg.t_final}")
    if np.isfinite(dt_max):
        needed = 1 << max(0, int(np.ceil(np.log2(cfg.t_final / dt_max))))
        path = refine_to(path, needed)
    return path


def run_steps(spec: ProblemSpec, u0, cfg: SolverConfig, dW: np.ndarray, dt: float,
              observer: Optional[Callable] = None):
    """Integrate a stack of initial states.

    ``u0`` has shape (..., n_cells); ``dW`` has shape (n_steps,) + leading
    shape of ``u0``.  Returns saved states of shape (n_saved, ..., n_cells)
    and the saved step indices.
    """
    u = np.array(u0, dtype=float)
    n_steps = dW.shape[0]
    bound = 0.9 * max(abs(spec.u_box[0]), abs(spec.u_box[1]))
    saved, idx = [u.copy()], [0]
    for j in range(n_steps):
        if observer is not None:
            observer(j, dW[j])
        u = advance(u, dt, dW[j], spec, cfg)
        if np.max(np.abs(u)) > bound:
            raise BlowUpError(f"max|u| left 0.9 x u_box at step {j + 1} (t={(j + 1) * dt:.4g})")
        if (j + 1) % cfg.save_every == 0 or j + 1 == n_steps:
            saved.append(u.copy())
            idx.append(j + 1)
    return np.stack(saved), np.array(idx)


def solve(spec: ProblemSpec, u0: TorusField, cfg: SolverConfig, path: NoisePath,
          observer: Optional[Callable] = None) -> Trajectory:
    """Repeated :func:`step` from ``u0`` driven by ``path`` (refined to meet the CFL bound)."""
    if u0.n_cells != cfg.n_cells:
        raise ValueError("initial data resolution does not match the solver config")
    path = prepare_path(path, cfg, choose_dt([spec], [u0.values], cfg))
    return _trajectory(spec, u0.values, cfg, path, observer)


def _trajectory(spec, u0_values, cfg, path, observer=None):
    states, idx = run_steps(spec, u0_values, cfg, path.increments, path.dt, observer)
    if cfg.save_every > 1 and path.n_steps % cfg.save_every:
        raise ValueError("save_every must divide the number of steps for a uniform output grid")
    return Trajectory(times=idx * path.dt, states=states, dt=path.dt, save_every=cfg.save_every,
                      config=cfg, problem=spec,
                      path_meta={"seed": path.seed, "n_steps": path.n_steps})


def coupled_solve(spec_u: ProblemSpec, spec_v: ProblemSpec, u0: TorusField, v0: TorusField,
                  cfg: SolverConfig, path: NoisePath, observer: Optional[Callable] = None):
    """Two runs sharing n_cells, dt and every Brownian increment."""
    if u0.n_cells != v0.n_cells or u0.n_cells != cfg.n_cells:
        raise ValueError("coupled runs need matching resolutions")
    dt_max = choose_dt([spec_u, spec_v], [u0.values, v0.values], cfg)
    path = prepare_path(path, cfg, dt_max)
    obs_u = (lambda j, dw: observer("u", j, dw)) if observer else None
    obs_v = (lambda j, dw: observer("v", j, dw)) if observer else None
    return (_trajectory(spec_u, u0.values, cfg, path, obs_u),
            _trajectory(spec_v, v0.values, cfg, path, obs_v))


def trajectory_to_csv(traj: Trajectory, path=None, solver: str = "fv") -> str:
    """``t,cell_index,value`` rows; with ``path`` also writes ``<path>.meta.json``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "cell_index", "value"])
    for t, row in zip(traj.times, traj.states):
        for i, x in enumerate(row):
            w.writerow([repr(float(t)), i, repr(float(x))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
        Path(str(path) + ".meta.json").write_text(json.dumps(trajectory_metadata(traj, solver),
                                                             indent=2, sort_keys=True) + "\n")
    return text


def trajectory_metadata(traj: Trajectory, solver: str = "fv") -> dict:
    return {
        "solver": solver,
        "config": asdict(traj.config),
        "problem": {"name": traj.problem.name, "params": traj.problem.params},
        "seed": traj.path_meta.get("seed"),
        "n_steps": traj.path_meta.get("n_steps"),
        "dt": traj.dt,
        "save_every": traj.save_every,
    }


def trajectory_from_csv(text: str):
    """Parse trajectory CSV text into ``(times, states)`` arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    if [c.strip() for c in rows[0]] != ["t", "cell_index", "value"]:
        raise ValueError("trajectory CSV header must be 't,cell_index,value'")
    data = np.array([[float(r[0]), int(r[1]), float(r[2])] for r in rows[1:] if r])
    times = np.unique(data[:, 0])
    n = int(data[:, 1].max()) + 1
    states = np.empty((times.size, n))
    ti = np.searchsorted(times, data[:, 0])
    states[ti, data[:, 1].astype(int)] = data[:, 2]
    return times, states

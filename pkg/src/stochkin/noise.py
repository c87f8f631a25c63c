"""Counter-based Brownian paths with exact dyadic refinement.

Every Gaussian variate is addressed by ``(seed, level, index)`` through a
Philox counter generator, so any part of any path can be produced without
replaying earlier draws.  A path with ``2**L`` steps is built by Levy's
midpoint construction from the single step ``W(T) = sqrt(T) Z(seed, 0, 0)``;
level ``l`` bridge midpoints use ``Z(seed, l, j)``.  Consequently the
``2n``-step path of a seed refines the ``n``-step path of the same seed.

Path values are rounded to the lattice ``2**-36``.  Differences and partial
sums of lattice numbers of moderate size are exact in float64, which makes
"the refined pair sums to the coarse increment" an exact identity rather
than one that holds up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_QUANTUM = 2.0 ** -36
_W_LIMIT = 2.0 ** 15
_TWO_NEG53 = 2.0 ** -53


def _quantize(w):
    return np.round(w / _QUANTUM) * _QUANTUM


def standard_normals(seed: int, level: int, start: int, count: int) -> np.ndarray:
    """N(0,1) variates Z(seed, level, start..start+count-1) by Box-Muller on Philox output."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(level)], dtype=np.uint64)
    # each Philox counter block yields four 64-bit words, i.e. two variates
    first, skip = divmod(int(start), 2)
    ctr = np.array([first, 0, 0, 0], dtype=np.uint64)
    raw = np.random.Philox(key=key, counter=ctr).random_raw(2 * (count + skip))
    raw = raw[2 * skip:].reshape(count, 2)
    u1 = ((raw[:, 0] >> np.uint64(11)).astype(float) + 1.0) * _TWO_NEG53  # (0, 1]
    u2 = (raw[:, 1] >> np.uint64(11)).astype(float) * _TWO_NEG53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def sample_seed(master_seed: int, k: int) -> int:
    """Seed of ensemble member ``k``; distinct k give independent paths."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(k)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Discretized Brownian path W(t_j), t_j = j * t_final / n_steps."""

    seed: int
    t_final: float
    values: np.ndarray

    def __post_init__(self):
        w = np.array(self.values, dtype=float)
        n = w.size - 1
        if n < 1 or n & (n - 1):
            raise ValueError("n_steps must be a power of two")
        w.setflags(write=False)
        object.__setattr__(self, "values", w)

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def level(self) -> int:
        return self.n_steps.bit_length() - 1

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __eq__(self, other):
        return (isinstance(other, NoisePath) and self.seed == other.seed
                and self.t_final == other.t_final
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.seed, self.t_final, self.n_steps))


def _bridge(values: np.ndarray, seed: int, level: int, t_final: float) -> np.ndarray:
    n = values.size - 1
    h = t_final / n
    z = standard_normals(seed, level, 0, n)
    mid = _quantize(0.5 * (values[:-1] + values[1:]) + 0.5 * np.sqrt(h) * z)
    out = np.empty(2 * n + 1)
    out[0::2] = values
    out[1::2] = mid
    if np.max(np.abs(out)) >= _W_LIMIT:
        raise OverflowError("Brownian path left the exact-arithmetic range")
    return out


def sample_path(seed: int, t_final: float, n_steps: int) -> NoisePath:
    if n_steps < 1 or n_steps & (n_steps - 1):
        raise ValueError("n_steps must be a power of two")
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    w = np.array([0.0, float(_quantize(np.sqrt(t_final) * standard_normals(seed, 0, 0, 1)[0]))])
    for level in range(1, n_steps.bit_length()):
        w = _bridge(w, seed, level, t_final)
    return NoisePath(seed, float(t_final), w)


def refine(path: NoisePath) -> NoisePath:
    """Double the resolution by Brownian-bridge midpoint insertion."""
    return NoisePath(path.seed, path.t_final,
                     _bridge(path.values, path.seed, path.level + 1, path.t_final))


def refine_to(path: NoisePath, n_steps: int) -> NoisePath:
    while path.n_steps < n_steps:
        path = refine(path)
    return path


def coarsen(path: NoisePath, n_steps: int) -> NoisePath:
    """Restrict to a coarser dyadic grid (exact subsampling of W)."""
    stride = path.n_steps // n_steps
    if stride * n_steps != path.n_steps:
        raise ValueError("coarse grid must divide the fine grid")
    return NoisePath(path.seed, path.t_final, path.values[::stride])

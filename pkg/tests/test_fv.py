import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochkin.experiments import fit_exponential
from stochkin.fv import (
    BlowUpError, CFLError, SolverConfig, advance, coupled_solve, numerical_flux, run_steps,
    solve, step, trajectory_from_csv, trajectory_metadata, trajectory_to_csv,
)
from stochkin.noise import refine_to, sample_path, sample_seed
from stochkin.problem import builtin_problem
from stochkin.torus import TorusField, l1_distance, positive_part_l1

N = 64
sine = TorusField.from_function(lambda x: 0.5 + np.sin(2 * np.pi * x), N)


def test_identity_dynamics_exact():
    spec = builtin_problem("linear_advection", c=0.0, sigma0=0.0)
    cfg = SolverConfig(N, 1.0)
    assert np.array_equal(step(sine, 0.01, 0.3, spec, cfg).values, sine.values)


def test_single_step_conserves_mass():
    rng = np.random.default_rng(4)
    for name in ("het_burgers", "porous_medium", "viscous_burgers"):
        spec = builtin_problem(name)
        cfg = SolverConfig(N, 1.0, epsilon=0.01)
        u = TorusField(rng.uniform(-1, 1, N))
        out = step(u, 2e-5, 0.0, spec, cfg)
        assert abs(out.mean() - u.mean()) <= 1e-12


def test_linear_advection_one_step_against_characteristics():
    c = 1.0
    spec = builtin_problem("linear_advection", c=c)
    for n in (64, 128, 256):
        cfg = SolverConfig(n, 1.0)
        u = TorusField.from_function(lambda x: np.sin(2 * np.pi * x), n)
        dt = 0.4 / n
        exact = TorusField.from_function(lambda x: np.sin(2 * np.pi * (x - c * dt)), n)
        err = np.max(np.abs(step(u, dt, 0.0, spec, cfg).values - exact.values))
        # upwind truncation: dt * dx/2 * (1 - nu) * max|u_xx|
        assert err <= 0.5 * dt / n * (2 * np.pi) ** 2


def test_linear_advection_first_order_convergence():
    errs = []
    for n in (64, 128, 256):
        spec = builtin_problem("linear_advection", c=1.0)
        u0 = TorusField.from_function(lambda x: np.sin(2 * np.pi * x), n)
        traj = solve(spec, u0, SolverConfig(n, 0.25), sample_path(0, 0.25, 1))
        exact = TorusField.from_function(lambda x: np.sin(2 * np.pi * (x - 0.25)), n)
        errs.append(l1_distance(traj.final, exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


def test_engquist_osher_matches_closed_form():
    spec = builtin_problem("het_burgers", eps_c=0.3)
    rng = np.random.default_rng(2)
    a, b, x = rng.uniform(-2, 2, 500), rng.uniform(-2, 2, 500), rng.uniform(0, 1, 500)
    flux, _ = numerical_flux(spec, a, b, x, "engquist_osher")
    # convex in u with sonic point 0: F(max(a,0), x) + F(min(b,0), x)
    oracle = spec.flux(np.maximum(a, 0), x) + spec.flux(np.minimum(b, 0), x)
    assert np.allclose(flux, oracle, atol=1e-12)


def test_lax_friedrichs_interface_flux():
    spec = builtin_problem("het_burgers", eps_c=0.0)
    f, s = numerical_flux(spec, np.array([-1.0, 1.0]), np.array([1.0, -1.0]), np.zeros(2))
    assert np.allclose(f, [-0.5, 1.5]) and np.allclose(s, [1.0, 1.0])


def test_cfl_violation_and_blowup():
    spec = builtin_problem("het_burgers")
    cfg = SolverConfig(N, 1.0)
    with pytest.raises(CFLError):
        step(sine, 1.0, 0.0, spec, cfg)
    noisy = builtin_problem("linear_advection", c=0.0, sigma0=1.0)
    with pytest.raises(BlowUpError):
        run_steps(noisy, np.full(N, 2.5), cfg, np.array([0.5]), 0.01)


def test_additive_noise_integrates_exactly():
    spec = builtin_problem("linear_advection", c=0.0, sigma0=0.7, noise="constant")
    path = sample_path(5, 1.0, 128)
    traj = solve(spec, sine, SolverConfig(N, 1.0), path)
    expected = sine.values[None, :] + 0.7 * path.values[:, None]
    assert np.allclose(traj.states, expected, atol=1e-13, rtol=0)


def test_heat_mode_decay():
    eps, t = 0.01, 0.2
    spec = builtin_problem("linear_advection", c=0.0)
    u0 = TorusField.from_function(lambda x: np.sin(2 * np.pi * x) + np.cos(6 * np.pi * x), 128)
    traj = solve(spec, u0, SolverConfig(128, t, epsilon=eps), sample_path(0, t, 1))
    amp = np.abs(np.fft.rfft(traj.final.values)) / np.abs(np.fft.rfft(u0.values))
    for k in (1, 3):
        assert amp[k] == pytest.approx(np.exp(-eps * 4 * np.pi ** 2 * k ** 2 * t), rel=0.02)


def test_mass_conservation_full_run():
    spec = builtin_problem("het_burgers", eps_c=0.5)
    traj = solve(spec, sine, SolverConfig(N, 0.5), sample_path(0, 0.5, 1))
    assert np.max(np.abs(traj.states.mean(axis=1) - sine.mean())) <= 1e-10


def test_mean_mass_is_a_martingale():
    spec = builtin_problem("het_burgers", sigma0=0.3, noise="linear")
    cfg = SolverConfig(N, 0.25)
    base = TorusField(0.5 + 0.5 * np.sin(2 * np.pi * sine.centers))
    n_steps = 256
    dW = np.stack([refine_to(sample_path(sample_seed(3, k), 0.25, 1), n_steps).increments
                   for k in range(1000)], axis=1)
    u0 = np.broadcast_to(base.values, (1000, N))
    states, _ = run_steps(spec, u0, cfg, dW, 0.25 / n_steps)
    mass = states.mean(axis=2)  # (n_saved, samples)
    se = mass.std(axis=1, ddof=1) / np.sqrt(1000)
    dev = np.abs(mass.mean(axis=1) - base.mean())
    assert np.all(dev <= 4 * se + 1e-12)


def test_coupled_identical_runs_bit_identical():
    spec = builtin_problem("het_burgers", sigma0=0.3)
    u, v = coupled_solve(spec, spec, sine, sine, SolverConfig(N, 0.3), sample_path(8, 0.3, 4))
    assert np.array_equal(u.states, v.states)


def test_coupled_runs_observe_same_increments():
    spec = builtin_problem("het_burgers", sigma0=0.3)
    seen = {"u": [], "v": []}
    path = sample_path(8, 0.3, 4)
    other = spec.replace(sigma=lambda w: 0.1 * w)
    u, _ = coupled_solve(spec, other, sine, TorusField(0.5 * sine.values), SolverConfig(N, 0.3), path,
                         observer=lambda who, j, dw: seen[who].append(dw))
    assert seen["u"] == seen["v"]
    assert np.array_equal(np.array(seen["u"]), refine_to(path, u.path_meta["n_steps"]).increments)


def test_comparison_principle_deterministic():
    spec = builtin_problem("het_burgers", eps_c=0.0)
    rng = np.random.default_rng(9)
    u0 = TorusField(rng.uniform(-1, 1, N))
    v0 = TorusField(u0.values + rng.uniform(0, 0.5, N))
    u, v = coupled_solve(spec, spec, u0, v0, SolverConfig(N, 0.5), sample_path(0, 0.5, 1))
    assert np.all(u.states <= v.states)
    d = [l1_distance(u.field(k), v.field(k)) for k in range(len(u))]
    assert np.all(np.diff(d) <= 1e-14)


def test_lifted_data_positive_part_bounded():
    # u0 = v0 + c with sigma = sigma0 u: E int (u - v)_+ stays at c
    spec = builtin_problem("het_burgers", eps_c=0.0, sigma0=0.3)
    cfg = SolverConfig(N, 0.5, save_every=16)
    c = 0.2
    v0 = sine
    u0 = TorusField(v0.values + c)
    curves = []
    for k in range(64):
        u, v = coupled_solve(spec, spec, u0, v0, cfg, sample_path(sample_seed(1, k), 0.5, 64))
        curves.append([positive_part_l1(v.field(j), u.field(j)) for j in range(len(u))])
    mean = np.mean(curves, axis=0)
    _, C_hat, _ = fit_exponential(u.times, mean)
    assert mean[0] == pytest.approx(c)
    assert abs(C_hat) < 0.2
    assert np.all(mean <= c * np.exp(max(C_hat, 0.0) * u.times) + 4 * np.std(curves, axis=0) / 8)


def test_trajectory_csv_round_trip(tmp_path):
    spec = builtin_problem("het_burgers", sigma0=0.2)
    traj = solve(spec, sine, SolverConfig(N, 0.1, save_every=2), sample_path(1, 0.1, 8))
    trajectory_to_csv(traj, tmp_path / "t.csv")
    times, states = trajectory_from_csv((tmp_path / "t.csv").read_text())
    assert np.array_equal(times, traj.times) and np.array_equal(states, traj.states)
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta == json.loads(json.dumps(trajectory_metadata(traj)))
    assert meta["seed"] == 1 and meta["problem"]["name"] == "het_burgers"


def test_resolution_mismatch():
    with pytest.raises(ValueError):
        solve(builtin_problem("het_burgers"), sine, SolverConfig(32, 0.1), sample_path(0, 0.1, 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["local_lax_friedrichs", "engquist_osher"]))
def test_step_order_preserving(seed, scheme):
    rng = np.random.default_rng(seed)
    spec = builtin_problem("het_burgers", eps_c=0.0)
    cfg = SolverConfig(32, 1.0, flux_scheme=scheme)
    u = rng.uniform(-1.5, 1.5, 32)
    v = u + rng.uniform(0, 0.5, 32)
    dt = 0.4 / (32 * 2.0)
    assert np.all(advance(u, dt, 0.0, spec, cfg) <= advance(v, dt, 0.0, spec, cfg) + 1e-15)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochkin import experiments as ex
from stochkin.duhamel import DuhamelConfig, picard_solve
from stochkin.experiments import (
    EnsembleConfig, additive_noise_prediction, fit_power_law, fit_rate_with_band,
    mean_and_stderr, pairwise_sum, run_samples, theoretical_exponent,
)
from stochkin.fv import SolverConfig, solve
from stochkin.noise import sample_path
from stochkin.problem import builtin_problem
from stochkin.torus import TorusField, l1_distance

SMALL = dict(n_samples=16, n_cells=32, t_final=0.1, n_outputs=8)
ADDITIVE = dict(problem="linear_advection",
                problem_params=(("c", 0.0), ("sigma0", 0.5), ("noise", "constant")),
                amplitude=0.2, t_final=1.0, n_cells=16, n_outputs=64, lags=(1, 2, 4, 8))


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_samples=8)
    with pytest.raises(ValueError):
        EnsembleConfig(mu=1.5)
    with pytest.raises(ValueError):
        EnsembleConfig(n_outputs=12)
    with pytest.raises(ValueError):
        EnsembleConfig(initial="saw")


def test_fit_power_law_examples():
    f = fit_power_law([(1, 1), (2, 4), (4, 16)])
    assert f.exponent == pytest.approx(2.0, abs=1e-12)
    assert f.prefactor == pytest.approx(1.0, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit_power_law([(1, 3.0), (2, 3.0), (4, 3.0)]).exponent == 0.0
    rng = np.random.default_rng(12)
    x = np.logspace(-2, 0, 10)
    y = 3 * x ** 1.5 * (1 + 0.01 * rng.standard_normal(10))
    assert fit_power_law(zip(x, y)).exponent == pytest.approx(1.5, abs=0.05)
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 0.0), (4, 1)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 2)])


def test_rate_band_brackets_point_fit():
    scales = [0.1, 0.05, 0.025, 0.0125]
    means = [0.1, 0.05, 0.025, 0.0125]
    fit, steep, shallow = fit_rate_with_band(scales, means, [0.001] * 4, 4.0)
    assert shallow <= fit.exponent <= steep
    assert fit.exponent == pytest.approx(1.0)


def test_theoretical_exponent_examples():
    assert theoretical_exponent(1.0, 1.0, 0.5) == 1.0
    assert theoretical_exponent(1.0, 0.6, 0.1, kappa_F2=0.5) == 0.5
    near = [theoretical_exponent(1.0, 1.0, 1.0 - d) for d in (1e-1, 1e-2, 1e-3)]
    assert near[0] > near[1] > near[2] > 0
    assert near[2] == pytest.approx(1 / 0.999 - 1)
    with pytest.raises(ValueError):
        theoretical_exponent(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        theoretical_exponent(1.0, 0.5, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 70), st.integers(1, 9))
def test_pairwise_sum_is_chunking_independent(n, chunk):
    a = np.random.default_rng(n).normal(size=(n, 3)) * 1e3
    whole = pairwise_sum(a)
    assert np.allclose(whole, a.sum(axis=0), rtol=1e-12, atol=1e-9)
    # blocks concatenated in order reduce to the identical value
    parts = np.concatenate([a[s:s + chunk] for s in range(0, n, chunk)])
    assert np.array_equal(pairwise_sum(parts), whole)


def test_mean_and_stderr():
    s = np.array([1.0, 2.0, 3.0, 4.0])
    m, e = mean_and_stderr(s)
    assert m == 2.5 and e == pytest.approx(np.std(s, ddof=1) / 2)


def test_identical_initial_data_gives_zero_distance():
    cfg = EnsembleConfig(v_shift=0.0, v_lift=0.0, problem_params=(("sigma0", 0.3),), **SMALL)
    S = run_samples("l1_stability", cfg)
    assert np.all(S == 0.0)


def test_constant_data_has_zero_seminorm():
    cfg = EnsembleConfig(initial="constant", amplitude=0.5,
                         problem_params=(("sigma0", 0.3), ("eps_c", 0.0)), **SMALL)
    rep = ex.run_fractional_bv(cfg)
    assert np.all(np.array([r[1] for r in rep.tables["fractional_bv"][1]]) == 0.0)
    assert rep.verdict("AC6.envelope").status == ex.PASS


def test_zero_delta_gives_zero_difference():
    cfg = EnsembleConfig(deltas=(0.0, 0.0, 0.0, 0.0), problem_params=(("sigma0", 0.2),), **SMALL)
    assert np.all(run_samples("continuous_dependence", cfg) == 0.0)
    with pytest.raises(ValueError):
        ex.run_continuous_dependence(cfg)
    with pytest.raises(ValueError):
        ex.run_continuous_dependence(cfg.replace(deltas=(0.1, 0.05, 0.02, 0.01)))


def test_equal_viscosities_give_zero_difference():
    cfg = EnsembleConfig(eps_ladder=(0.05, 0.05, 0.05, 0.05), problem_params=(("sigma0", 0.2),), **SMALL)
    assert np.all(run_samples("viscosity_cauchy", cfg) == 0.0)
    with pytest.raises(ValueError):
        ex.run_viscosity_cauchy(cfg)


def test_viscosity_difference_matches_duhamel():
    # sigma = 0, smooth data, short time: the FV and spectral Cauchy differences agree
    spec = builtin_problem("het_burgers", eps_c=0.0)
    n, t = 64, 0.05
    u0 = TorusField(0.5 + np.sin(2 * np.pi * (np.arange(n) + 0.5) / n))
    path = sample_path(0, t, 1)
    fvs = [solve(spec, u0, SolverConfig(n, t, epsilon=e), path).final for e in (0.1, 0.025)]
    dus = [picard_solve(spec, u0, DuhamelConfig(n, e, 256), path)[0].final for e in (0.1, 0.025)]
    scheme_tol = 2e-2
    assert abs(l1_distance(*fvs) - l1_distance(*dus)) <= 2 * scheme_tol


def test_additive_closed_form():
    cfg = EnsembleConfig(**ADDITIVE)
    pred = additive_noise_prediction(cfg, 0.5)
    h = 1 / 64
    # E (sigma0 dW)_+ over a lag L*h is sigma0 sqrt(L h / (2 pi)), summed over N+1-L left points
    assert pred[0] == pytest.approx(64 * h * 0.5 * math.sqrt(h / (2 * math.pi)))
    rep = ex.run_temporal_bv(cfg.replace(n_samples=256), closed_form=pred)
    assert rep.verdict("AC9.closed_form").status == ex.PASS


def test_band_shrinks_like_inverse_sqrt_samples():
    cfg = EnsembleConfig(**ADDITIVE)
    _, e_small = mean_and_stderr(run_samples("temporal_bv", cfg.replace(n_samples=64)))
    _, e_big = mean_and_stderr(run_samples("temporal_bv", cfg.replace(n_samples=1024)))
    ratio = e_small / e_big
    # 16x the samples: the band narrows by about 4x
    assert np.all((ratio > 3.0) & (ratio < 5.3))


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    assert ex.worker_count() == 3
    monkeypatch.setenv(ex.WORKERS_ENV, "zero")
    with pytest.raises(ValueError):
        ex.worker_count()


def test_results_independent_of_worker_count(monkeypatch):
    cfg = EnsembleConfig(n_samples=32, block_size=8, problem_params=(("sigma0", 0.3),),
                         n_cells=32, t_final=0.1, n_outputs=8)
    one = run_samples("l1_stability", cfg, workers=1)
    monkeypatch.setenv(ex.WORKERS_ENV, "2")
    two = run_samples("l1_stability", cfg)
    assert np.array_equal(one, two)
    rep1 = ex.run_l1_stability(cfg, workers=1)
    rep3 = ex.run_l1_stability(cfg, workers=3)
    assert rep1.tables == rep3.tables


def test_samples_coupled_and_independent():
    # sample k of two runs shares its path (the additive result ignores n_cells); samples differ
    cfg = EnsembleConfig(**ADDITIVE, n_samples=16)
    S = run_samples("temporal_bv", cfg)
    assert np.array_equal(S, run_samples("temporal_bv", cfg.replace(n_cells=8)))
    assert len({tuple(r) for r in S}) == 16


def test_heat_decay_study_small():
    rep = ex.heat_decay_study(n_cells=64)
    assert rep.verdict("AC3.heat_decay").status == ex.PASS
    assert len(rep.tables["heat_decay"][1]) == 8


def test_report_status_ordering():
    rep = ex.ExperimentReport("x", EnsembleConfig())
    assert rep.status == ex.PASS
    rep.verdicts.append(ex.Verdict("a", ex.INCONCLUSIVE, 0, 0))
    assert rep.status == ex.INCONCLUSIVE
    rep.verdicts.append(ex.Verdict("b", ex.FAIL, 0, 0))
    assert rep.status == ex.FAIL
    with pytest.raises(KeyError):
        rep.verdict("c")

"""Numerical laboratory for stochastic kinetic solutions of degenerate
parabolic-hyperbolic equations with heterogeneous flux on the 1-D torus."""

from .torus import (TorusField, Mollifier, lp_norm, positive_part_l1, l1_distance, shift,
                    nikolskii_seminorm, bv_seminorm, mollify)
from .problem import ProblemSpec, CoefficientDistance, builtin_problem, kirchhoff, coefficient_distance, perturb
from .noise import NoisePath, sample_path, refine, sample_seed
from .fv import SolverConfig, Trajectory, step, solve, coupled_solve
from .duhamel import DuhamelConfig, heat_propagate, picard_solve
from .kinetic import (EtaFamily, build_eta, doubling_identity_check, positive_part_identity,
                      kinetic_sample, parabolic_defect, ito_correction, weak_form_residual)
from .experiments import (EnsembleConfig, RateFit, fit_power_law, theoretical_exponent,
                          run_l1_stability, run_fractional_bv, run_continuous_dependence,
                          run_viscosity_cauchy, run_temporal_bv)

__version__ = "0.1.0"

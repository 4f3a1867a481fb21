# Copyright 2024 The bpre Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from .misc import ModelError, GuardError, Status, Check, golden_section
from .models import OffspringLaw, LinearFractional, Poisson, Bounded, Zeta, EnvironmentModel, TailAssumption, \
    TailCheck, ModelFile, Regime, pgf_eval, mean, sample_offspring, verify_tail_assumption, cgf, drift, classify, \
    tilt, tilt_parameter, parse_model, load_model, bundled_environments
from .ratefn import RateProfile, lambda_rate, gamma, theta_star, chi, chi_slope, theta_dagger, psi_direct, \
    psi_piecewise, psi_galton_watson, psi_beta_limit, psi_supercritical, rate_profile, characterization_checks, \
    beta_checks
from .path import Strategy, OptimalStrategy, PathProfile, PhaseReport, optimal_strategy, path_profile, phase_report
from .simulate import Method, Trajectory, TailEstimate, SequenceRow, DEFAULT_CAP, run_bpre, exact_tail, \
    exact_distribution, mc_tail, tilted_tail, survival_rate_scan, conditional_survival_bound_check, \
    empirical_rate_curve, level_rate_scan, triangle_checks
from .plot import RATE_COLUMNS, PATH_COLUMNS, write_csv, read_table, plot_rates, plot_path

__author__  = "The bpre Authors"
__version__ = "0.1.0"
__license__ = "Apache 2.0"
__status__  = "Development"
__all__     = [
    # models
    'OffspringLaw',
    'LinearFractional',
    'Poisson',
    'Bounded',
    'Zeta',
    'EnvironmentModel',
    'TailAssumption',
    'Regime',
    'pgf_eval',
    'mean',
    'sample_offspring',
    'verify_tail_assumption',
    'cgf',
    'drift',
    'classify',
    'tilt',
    'tilt_parameter',
    'parse_model',
    'load_model',
    'bundled_environments',
    # rate functions
    'RateProfile',
    'lambda_rate',
    'gamma',
    'theta_star',
    'chi',
    'chi_slope',
    'theta_dagger',
    'psi_direct',
    'psi_piecewise',
    'psi_galton_watson',
    'psi_beta_limit',
    'psi_supercritical',
    'rate_profile',
    # strategies
    'Strategy',
    'OptimalStrategy',
    'PathProfile',
    'PhaseReport',
    'optimal_strategy',
    'path_profile',
    'phase_report',
    # simulation
    'Trajectory',
    'TailEstimate',
    'Method',
    'run_bpre',
    'exact_tail',
    'mc_tail',
    'tilted_tail',
    'survival_rate_scan',
    'conditional_survival_bound_check',
    'empirical_rate_curve',
    'level_rate_scan',
    'exact_distribution',
    'triangle_checks',
    'SequenceRow',
    'DEFAULT_CAP',
    # verification
    'Check',
    'Status',
    'TailCheck',
    'ModelFile',
    'characterization_checks',
    'beta_checks',
    # tables and figures
    'RATE_COLUMNS',
    'PATH_COLUMNS',
    'write_csv',
    'read_table',
    'plot_rates',
    'plot_path',
    # errors
    'ModelError',
    'GuardError',
    # helpers
    'golden_section',
]

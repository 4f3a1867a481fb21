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

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .misc import Check, golden_section
from .models import EnvironmentModel, Regime, ZERO_TOL, classify, cgf, drift, tilt_parameter, tilted_moments

log = logging.getLogger(__name__)


########################################################################################################################
# Constants
########################################################################################################################

# coarse grid of the direct minimization, per axis
DIRECT_GRID = 201
# zoom grid of the refinement stage, per axis
ZOOM_GRID = 21
# refinement stops once the zoom window is narrower than this
ZOOM_TOL = 1e-10
# grid minimizers within this of the optimum count as competing strategies
DEGENERACY_TOL = 1e-9
# largest t below one used on the t < 1 branch of the direct objective
T_LIMIT = 1 - 1e-12
# lambda points of the walk rate table behind the coarse direct grid
RATE_TABLE = 4097
# the table extends until ess sup X - K'(lam) falls below this, relative
RATE_TABLE_GAP = 1e-10


def _top_tol(env: EnvironmentModel) -> float:
    return 1e-13 * max(1.0, abs(env.x_max))


########################################################################################################################
# Walk Rate Function
########################################################################################################################

def lambda_rate(env: EnvironmentModel, theta):
    """
    Rate function of the associated random walk, sup_{lam >= 0} {lam theta - K(lam)}, vectorized.
    Zero for theta <= E[X], -log P(X = ess sup X) at the essential supremum and inf beyond it.

    :param env: Environment model
    :param theta: Nonnegative level(s)
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("Rate function needs theta >= 0")
    scalar = theta.ndim == 0
    th = np.atleast_1d(theta)
    out = np.zeros(th.shape)
    tol = _top_tol(env)
    top = np.abs(th - env.x_max) <= tol
    inner = (th > drift(env)) & (th < env.x_max) & ~top
    out[th > env.x_max + tol] = np.inf
    out[top & (th > drift(env))] = -math.log(env.top_probability)
    if np.any(inner):
        lam = tilt_parameter(env, th[inner])
        # lam theta - K(lam) with K(lam) = lam x_max + logsumexp(log p + lam (x - x_max))
        lse = special.logsumexp(env.log_probs + lam[:, None] * (env.x - env.x_max), axis=-1)
        out[inner] = np.maximum(lam * (th[inner] - env.x_max) - lse, 0.0)
    return float(out[0]) if scalar else out


def lambda_slope(env: EnvironmentModel, theta):
    """ Right derivative of the walk rate function, the tilt parameter solving K'(lam) = theta """
    theta = np.asarray(theta, dtype=float)
    slope = np.where(theta >= env.x_max - _top_tol(env), np.inf, tilt_parameter(env, np.minimum(theta, env.x_max)))
    return float(slope) if slope.ndim == 0 else slope


@lru_cache(maxsize=256)
def _rate_table(env: EnvironmentModel) -> tuple:
    """
    Walk rate along theta = K'(lam), Lambda = lam K'(lam) - K(lam), on a uniform lambda grid closed by
    (ess sup X, -log P(X = ess sup X)), with the largest gap between a chord and the rate function.

    :return: (theta, Lambda, error)
    """
    start, top, tol = drift(env), env.x_max, _top_tol(env)
    if top - start <= tol:
        return np.array([top]), np.array([0.0]), 0.0
    lam_max = 1.0
    while top - float(tilted_moments(env, lam_max)[1]) > RATE_TABLE_GAP * max(1.0, abs(top)) and lam_max < 1e6:
        lam_max *= 2
    lam = np.linspace(0.0, lam_max, RATE_TABLE)
    k0, k1, _ = tilted_moments(env, lam)
    rate = np.maximum(lam * (k1 - top) - (k0 - lam * top), 0.0)
    last = -math.log(env.top_probability)
    # chord minus rate is at most h (b - a) / 4 for slopes in [a, b] on a step h
    error = float(np.max(np.diff(k1) * np.diff(lam))) / 4
    error = max(error, last - rate[-1] - lam[-1] * (top - k1[-1]), 0.0)
    theta = np.append(np.maximum.accumulate(k1), top)
    log.debug("walk rate table: lam_max=%g interpolation error=%.3g", lam_max, error)
    return theta, np.append(rate, last), error


def _rate_interp(env: EnvironmentModel, theta):
    # linear interpolation of the walk rate table, never below the walk rate
    table, value, _ = _rate_table(env)
    theta = np.asarray(theta, dtype=float)
    return np.where(theta > env.x_max + _top_tol(env), np.inf, np.interp(theta, table, value, left=0.0))


########################################################################################################################
# Survival Cost And Tangency
########################################################################################################################

@lru_cache(maxsize=256)
def survival_tilt(env: EnvironmentModel) -> tuple:
    """
    Survival cost and the point where E[exp(sX)] is smallest on [0, 1]

    :param env: Environment model
    :return: (gamma, nu)
    """
    if drift(env) >= -ZERO_TOL:
        return 0.0, 0.0
    nu = golden_section(lambda s: cgf(env, s), 0.0, 1.0, tol=1e-12)
    return max(-cgf(env, nu), 0.0), float(nu)


def gamma(env: EnvironmentModel) -> float:
    """ Decay rate of the survival probability P(Z_n > 0) """
    return survival_tilt(env)[0]


@lru_cache(maxsize=256)
def _tangency(env: EnvironmentModel) -> tuple:
    # (theta_star, chord slope): the tangent from (0, gamma) touches the walk rate at K'(lam) where K(lam) = -gamma
    g = gamma(env)
    if env.is_deterministic or env.x_max <= 0:
        return 0.0, math.nan
    if lambda_rate(env, 0.0) - g <= 1e-10:
        return 0.0, math.nan
    lo = tilt_parameter(env, 0.0)
    hi = max(2 * lo, 1.0)
    while cgf(env, hi) + g <= 0:
        hi *= 2
    lam = optimize.brentq(lambda v: cgf(env, v) + g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    star = float(tilted_moments(env, lam)[1])
    log.debug("tangency at lambda=%.12g theta_star=%.12g", lam, star)
    return star, float(lam)


def theta_star(env: EnvironmentModel) -> float:
    """
    End of the survival-phase regime, the minimizer of (Lambda(theta) - gamma) / theta on (0, ess sup X].
    Solved as an exact tangency rather than by minimizing the ratio: brentq finds the root lam of
    K(lam) = -gamma and theta* = K'(lam), accurate to machine precision.
    Zero when gamma = Lambda(0) and for environments where the construction does not apply (all states
    sharing one mean, or no state with mean above one).

    :param env: Environment model
    """
    return _tangency(env)[0]


def theta_star_applicable(env: EnvironmentModel) -> bool:
    return not env.is_deterministic and (env.x_max > 0 or drift(env) >= -ZERO_TOL)


########################################################################################################################
# Convex Minorant
########################################################################################################################

def chi(env: EnvironmentModel, theta):
    """
    Largest convex function below the walk rate with value gamma at the origin: the chord from (0, gamma)
    to (theta*, Lambda(theta*)) on [0, theta*), the walk rate beyond.

    :param env: Environment model
    :param theta: Nonnegative level(s)
    """
    theta = np.asarray(theta, dtype=float)
    star, _ = _tangency(env)
    g = gamma(env)
    value = np.asarray(lambda_rate(env, theta), dtype=float)
    if star > 0:
        chord = g + theta * (lambda_rate(env, star) - g) / star
        value = np.where(theta < star, chord, value)
    value = np.where(theta == 0, g, value)
    return float(value) if value.ndim == 0 else value


def chi_slope(env: EnvironmentModel, theta):
    """
    Right slope of chi: the chord slope before theta*, Lambda'(theta) on the walk-rate piece and inf from
    the essential supremum on.

    :param env: Environment model
    :param theta: Nonnegative level(s)
    """
    theta = np.asarray(theta, dtype=float)
    star, _ = _tangency(env)
    slope = np.asarray(lambda_slope(env, theta), dtype=float)
    if star > 0:
        chord = (lambda_rate(env, star) - gamma(env)) / star
        slope = np.where(theta < star, chord, slope)
    slope = np.where(theta >= env.x_max - _top_tol(env), np.inf, slope)
    return float(slope) if slope.ndim == 0 else slope


@lru_cache(maxsize=256)
def theta_dagger(env: EnvironmentModel, beta: float) -> float:
    """
    Onset of the jump regime, sup{theta >= max(0, E[X]) : chi'(theta) <= beta, chi(theta) < inf}.
    Lambda'(theta) = lam_theta is nondecreasing, so the supremum is K'(beta) unless the slope
    at max(0, E[X]) already exceeds beta.
    The closed form replaces a search over theta, no finite-difference slope of chi is taken.

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    """
    if not beta > 1:
        raise ValueError("Tail exponent must satisfy beta > 1, got {}".format(beta))
    start = max(0.0, drift(env))
    if start >= env.x_max - _top_tol(env):
        return start
    if chi_slope(env, start) > beta:
        return 0.0
    turn = float(tilted_moments(env, beta)[1])
    return min(env.x_max, max(theta_star(env), start, turn))


########################################################################################################################
# Upper Deviation Rate
########################################################################################################################

def psi_galton_watson(m: float, beta: float, theta: float) -> float:
    """
    Closed form rate for a constant environment with mean m

    :param m: Mean offspring count
    :param beta: Tail exponent
    :param theta: Level
    """
    if not m > 0:
        raise ValueError("Mean offspring must be positive, got {}".format(m))
    if theta < 0:
        raise ValueError("Rate function needs theta >= 0")
    if m <= 1:
        return -math.log(m) + beta * theta
    if theta < math.log(m) - ZERO_TOL:
        raise ValueError("theta={} below log m={}, the probability does not decay".format(theta, math.log(m)))
    return beta * max(theta - math.log(m), 0.0)


def psi_piecewise(env: EnvironmentModel, beta: float, theta):
    """
    Graphical construction of the upper deviation rate: chi up to theta-dagger, then a ray of slope beta.

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level(s)
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("Rate function needs theta >= 0")
    if env.is_deterministic:
        m = env.laws[0].mean
        growth = math.log(m) if m > 1 else 0.0
        value = np.vectorize(lambda th: psi_galton_watson(m, beta, max(th, growth)), otypes=[float])(theta)
        return float(value) if value.ndim == 0 else value
    dagger = theta_dagger(env, beta)
    ray = chi(env, dagger) + beta * (theta - dagger)
    value = np.where(theta <= dagger, chi(env, np.minimum(theta, dagger)), ray)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class DirectMinimum:
    """ Minimum of t gamma + beta s + (1-t) Lambda((theta-s)/(1-t)) with its minimizer """
    value: float
    t: float
    s: float
    degenerate: bool = False


def _direct_objective(env, beta, theta, g, t, s, rate_fn=lambda_rate):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    span = np.maximum(theta - s, 0.0) / (1 - t)
    value = np.full(np.broadcast(t, s).shape, np.inf)
    rate = rate_fn(env, np.broadcast_to(span, value.shape).ravel()).reshape(value.shape)
    finite = np.isfinite(rate)
    cost = t * g + beta * s + (1 - t) * np.where(finite, rate, 0.0)
    value[finite] = np.broadcast_to(cost, value.shape)[finite]
    return value


@lru_cache(maxsize=4096)
def direct_minimum(env: EnvironmentModel, beta: float, theta: float) -> DirectMinimum:
    """
    Minimize the direct objective over t in [0, 1], s in [0, theta]: coarse grid with the t = 1
    candidate gamma + beta theta, then zooming grids around the incumbent. Ties go to the smallest t,
    then the smallest s.

    The coarse grid is screened with the interpolated walk rate, which exceeds the rate by at most the
    table error; only cells that can still come within DEGENERACY_TOL of the minimum are evaluated exactly.

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level
    """
    if not beta > 1:
        raise ValueError("Tail exponent must satisfy beta > 1, got {}".format(beta))
    if theta < 0:
        raise ValueError("Rate function needs theta >= 0")
    g = gamma(env)
    t_axis = np.linspace(0.0, 1.0, DIRECT_GRID)[:-1]
    s_axis = np.linspace(0.0, theta, DIRECT_GRID)
    grid = np.full((DIRECT_GRID, DIRECT_GRID), np.inf)
    # t = 1: survive to the end, then one jump of size theta
    grid[-1, -1] = g + beta * theta
    rough = _direct_objective(env, beta, theta, g, t_axis[:, None], s_axis[None, :], _rate_interp)
    error = _rate_table(env)[2]
    rows, cols = np.nonzero(rough - error <= min(float(rough.min()), grid[-1, -1]) + DEGENERACY_TOL)
    grid[rows, cols] = _direct_objective(env, beta, theta, g, t_axis[rows], s_axis[cols])
    log.debug("direct grid theta=%g: %d of %d cells evaluated exactly", theta, rows.size, rough.size)

    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    best = float(grid[i, j])
    near = np.argwhere(grid <= best + DEGENERACY_TOL)
    degenerate = bool(np.any(np.abs(near - [i, j]).max(axis=1) > 2))

    if i == DIRECT_GRID - 1:
        return DirectMinimum(best, 1.0, float(theta), degenerate)

    t_best, s_best = float(t_axis[i]), float(s_axis[j])
    t_half, s_half = 2.0 / (DIRECT_GRID - 1), 2.0 * theta / (DIRECT_GRID - 1)
    while max(t_half, s_half) > ZOOM_TOL:
        t_zoom = np.linspace(max(0.0, t_best - t_half), min(T_LIMIT, t_best + t_half), ZOOM_GRID)
        s_zoom = np.linspace(max(0.0, s_best - s_half), min(theta, s_best + s_half), ZOOM_GRID)
        zoom = _direct_objective(env, beta, theta, g, t_zoom[:, None], s_zoom[None, :])
        a, b = np.unravel_index(np.argmin(zoom), zoom.shape)
        if zoom[a, b] <= best:
            best, t_best, s_best = float(zoom[a, b]), float(t_zoom[a]), float(s_zoom[b])
        t_half /= 5
        s_half /= 5
    return DirectMinimum(best, t_best, s_best, degenerate)


def psi_direct(env: EnvironmentModel, beta: float, theta: float) -> float:
    """
    Upper deviation rate as inf_{t, s} {t gamma + beta s + (1-t) Lambda((theta-s)/(1-t))}

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level
    """
    return direct_minimum(env, float(beta), float(theta)).value


def psi_beta_limit(env: EnvironmentModel, theta: float) -> float:
    """
    Limit of the upper deviation rate as beta grows, inf_t {t gamma + (1-t) Lambda(theta/(1-t))}

    :param env: Environment model
    :param theta: Nonnegative level
    """
    if theta < 0:
        raise ValueError("Rate function needs theta >= 0")
    g = gamma(env)
    if theta == 0:
        return min(g, lambda_rate(env, 0.0))
    if env.x_max <= 0 or theta > env.x_max + _top_tol(env):
        return math.inf

    # the perspective term is finite while theta/(1-t) <= ess sup X
    t_max = max(0.0, 1 - theta / env.x_max)

    def cost(t):
        return t * g + (1 - t) * lambda_rate(env, min(theta / (1 - t), env.x_max))

    return float(cost(golden_section(cost, 0.0, t_max, tol=1e-12)))


def psi_supercritical(env: EnvironmentModel, beta: float, theta: float) -> float:
    """
    Supercritical form of the upper deviation rate, inf_{s in [0, theta]} {beta s + Lambda(theta - s)}

    :param env: Environment model with E[X] > 0
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level
    """
    if drift(env) <= ZERO_TOL:
        raise ValueError("Supercritical form needs E[X] > 0, got {}".format(drift(env)))
    lo = max(0.0, theta - env.x_max)

    def cost(s):
        return beta * s + lambda_rate(env, max(theta - s, 0.0))

    return float(cost(golden_section(cost, lo, theta, tol=1e-12)))


########################################################################################################################
# Rate Profile
########################################################################################################################

@dataclass(frozen=True)
class RateProfile:
    """ Survival cost, tangency and jump-onset points of one environment for one tail exponent """
    env: EnvironmentModel
    beta: float
    gamma: float
    theta_star: float
    theta_dagger: float
    ess_sup_x: float
    regime: Regime
    theta_star_applicable: bool = True

    def lambda_curve(self, theta):
        return lambda_rate(self.env, theta)

    def chi_curve(self, theta):
        return chi(self.env, theta)

    def psi_curve(self, theta):
        return psi_piecewise(self.env, self.beta, theta)

    def summary(self) -> dict:
        return {
            'beta': self.beta,
            'gamma': self.gamma,
            'theta_star': self.theta_star,
            'theta_star_applicable': self.theta_star_applicable,
            'theta_dagger': self.theta_dagger,
            'ess_sup_x': self.ess_sup_x,
            'regime': self.regime.value,
        }


def rate_profile(env: EnvironmentModel, beta: float) -> RateProfile:
    """
    Build rate profile

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    """
    profile = RateProfile(env, float(beta), gamma(env), theta_star(env), theta_dagger(env, float(beta)),
                          env.x_max, classify(env), theta_star_applicable(env))
    log.debug("rate profile: %s", profile.summary())
    return profile


########################################################################################################################
# Characterization Checks
########################################################################################################################

def characterization_checks(env: EnvironmentModel, beta: float, grid: np.ndarray, tag: str = '') -> list:
    """
    Check the computed rate against its characterization as the largest convex function with psi(0) = gamma,
    psi <= Lambda and slopes at most beta, plus the agreement of both algorithms.

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param grid: Uniform theta grid starting at 0
    :param tag: Name prefix of the returned checks
    """
    grid = np.asarray(grid, dtype=float)
    direct = np.array([psi_direct(env, beta, th) for th in grid])
    piecewise = psi_piecewise(env, beta, grid)
    rate = lambda_rate(env, grid)
    g = gamma(env)
    name = "{}beta={:g} ".format(tag, beta)
    checks = []

    checks.append(Check.from_margin(name + "psi(0)=gamma", 1e-6 - abs(psi_direct(env, beta, 0.0) - g)))

    finite = np.isfinite(rate)
    margin = float(np.min(rate[finite] + 1e-8 - direct[finite])) if np.any(finite) else math.inf
    checks.append(Check.from_margin(name + "psi<=Lambda", margin))

    steps = grid[None, :] - grid[:, None]
    upper = np.triu(np.ones(steps.shape, dtype=bool), 1)
    lipschitz = direct[:, None] + beta * steps + 1e-8 - direct[None, :]
    checks.append(Check.from_margin(name + "beta-Lipschitz", float(lipschitz[upper].min()) if upper.any() else 0.0))

    # pairs (i, j) with i + j even have their midpoint on the grid
    idx = np.arange(grid.size)
    i, j = np.meshgrid(idx, idx, indexing='ij')
    pairs = (i < j) & ((i + j) % 2 == 0)
    mid = (i + j) // 2
    convex = (direct[i] + direct[j]) / 2 + 1e-8 - direct[mid]
    checks.append(Check.from_margin(name + "midpoint-convexity", float(convex[pairs].min()) if pairs.any() else 0.0))

    checks.append(Check.from_margin(name + "direct=piecewise", 1e-4 - float(np.max(np.abs(direct - piecewise)))))

    dagger = theta_dagger(env, beta)
    turn = float(tilted_moments(env, beta)[1])
    if 0 < dagger < env.x_max and abs(dagger - turn) <= 1e-12 * max(1.0, dagger):
        beyond = grid > dagger
        tail_form = beta * grid[beyond] - cgf(env, beta)
        gap = float(np.max(np.abs(piecewise[beyond] - tail_form))) if beyond.any() else 0.0
        checks.append(Check.from_margin(name + "ray=beta*theta-K(beta)", 1e-8 - gap))
    return checks


def beta_checks(env: EnvironmentModel, betas, grid: np.ndarray, tag: str = '', beta_large: float = 64.0) -> list:
    """
    Monotonicity of the rate in beta and its large-beta limit

    :param env: Environment model
    :param betas: Increasing tail exponents
    :param grid: Theta grid
    :param tag: Name prefix of the returned checks
    :param beta_large: Exponent standing in for the limit
    """
    grid = np.asarray(grid, dtype=float)
    betas = sorted(betas)
    curves = [psi_piecewise(env, b, grid) for b in betas]
    margin = min((float(np.min(high + 1e-10 - low)) for low, high in zip(curves, curves[1:])), default=0.0)
    checks = [Check.from_margin(tag + "monotone-in-beta", margin)]

    limit = np.array([psi_beta_limit(env, th) for th in grid])
    finite = np.isfinite(limit)
    if np.any(finite):
        large = np.array([psi_direct(env, beta_large, th) for th in grid[finite]])
        checks.append(Check.from_margin(tag + "beta-limit", 1e-3 - float(np.max(np.abs(large - limit[finite])))))
    return checks

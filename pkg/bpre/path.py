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

import enum
import math
from dataclasses import dataclass

import numpy as np

from .models import EnvironmentModel
from .ratefn import direct_minimum, gamma, psi_piecewise, theta_dagger, theta_star

# minimizer coordinates below this are zero
SNAP_TOL = 1e-8
# finite-difference step of the phase report slopes
SLOPE_STEP = 1e-6


class Strategy(enum.Enum):
    SURVIVE_THEN_GROW = 'SurviveThenGrow'
    STRAIGHT_GROWTH = 'StraightGrowth'
    JUMP_THEN_GROW = 'JumpThenGrow'
    SURVIVE_THEN_FINAL_JUMP = 'SurviveThenFinalJump'
    DEGENERATE = 'Degenerate'


@dataclass(frozen=True)
class OptimalStrategy:
    """ Survival time share t, jump size s and the rate they achieve """
    theta: float
    t_theta: float
    s_theta: float
    value: float
    regime: Strategy

    def to_dict(self) -> dict:
        return {
            'theta': self.theta,
            't_theta': self.t_theta,
            's_theta': self.s_theta,
            'value': self.value,
            'regime': self.regime.value,
        }


@dataclass(frozen=True)
class PathProfile:
    """ Predicted log-population per generation, (t, f(t)) samples; a repeated t marks the jump """
    strategy: OptimalStrategy
    samples: tuple

    @property
    def t(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def f(self) -> np.ndarray:
        return np.array([f for _, f in self.samples])


def optimal_strategy(env: EnvironmentModel, beta: float, theta: float) -> OptimalStrategy:
    """
    Minimizer (t, s) of the direct rate objective and the trajectory shape it describes

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level
    """
    best = direct_minimum(env, float(beta), float(theta))
    t = 0.0 if best.t < SNAP_TOL else best.t
    s = 0.0 if best.s < SNAP_TOL else best.s
    if best.degenerate:
        regime = Strategy.DEGENERATE
    elif t >= 1:
        regime = Strategy.SURVIVE_THEN_FINAL_JUMP
    elif t > 0 and s == 0:
        regime = Strategy.SURVIVE_THEN_GROW
    elif t == 0 and s == 0:
        regime = Strategy.STRAIGHT_GROWTH
    elif t == 0:
        regime = Strategy.JUMP_THEN_GROW
    else:
        # jump after a survival phase, not an optimal shape
        regime = Strategy.DEGENERATE
    return OptimalStrategy(float(theta), t, s, best.value, regime)


def path_profile(env: EnvironmentModel, beta: float, theta: float, resolution: int = 101) -> PathProfile:
    """
    Sample t -> f(t): zero while surviving, a jump to s at the end of survival, then linear growth to theta

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    :param theta: Nonnegative level
    :param resolution: Number of equally spaced t samples, at least 2
    """
    if resolution < 2:
        raise ValueError("Path resolution must be at least 2, got {}".format(resolution))
    strategy = optimal_strategy(env, beta, theta)
    t_jump, s = strategy.t_theta, strategy.s_theta

    if t_jump >= 1:
        samples = [(float(t), 0.0) for t in np.linspace(0.0, 1.0, resolution)]
        samples.append((1.0, float(theta)))
        return PathProfile(strategy, tuple(samples))

    slope = (theta - s) / (1 - t_jump)
    times = np.union1d(np.linspace(0.0, 1.0, resolution), [t_jump])
    samples = []
    for t in times:
        if t < t_jump:
            samples.append((float(t), 0.0))
        elif t == t_jump:
            samples.append((float(t), 0.0))
            if s > 0:
                samples.append((float(t), float(s)))
        else:
            samples.append((float(t), float(s + slope * (t - t_jump))))
    samples[-1] = (1.0, float(theta))
    return PathProfile(strategy, tuple(samples))


@dataclass(frozen=True)
class PhaseReport:
    beta: float
    gamma: float
    theta_star: float
    theta_dagger: float
    intervals: tuple
    slopes_at_star: tuple
    slopes_at_dagger: tuple
    summary: str

    def to_dict(self) -> dict:
        def finite(value):
            return value if math.isfinite(value) else None

        return {
            'beta': self.beta,
            'gamma': self.gamma,
            'theta_star': self.theta_star,
            'theta_dagger': self.theta_dagger,
            'intervals': [{'lo': lo, 'hi': finite(hi), 'regime': regime} for lo, hi, regime in self.intervals],
            'slopes_at_star': [finite(v) for v in self.slopes_at_star],
            'slopes_at_dagger': [finite(v) for v in self.slopes_at_dagger],
            'summary': self.summary,
        }


def _one_sided(env, beta, theta, h=SLOPE_STEP) -> tuple:
    psi = psi_piecewise(env, beta, np.array([max(theta - h, 0.0), theta, theta + h]))
    left = (psi[1] - psi[0]) / h if theta >= h else math.nan
    return float(left), float((psi[2] - psi[1]) / h)


def phase_report(env: EnvironmentModel, beta: float) -> PhaseReport:
    """
    Phase transitions of the rate in theta: survival then growth on [0, theta*], straight growth on
    [theta*, theta-dagger] and an initial jump beyond, with the one-sided slopes at both kinks

    :param env: Environment model
    :param beta: Tail exponent, beta > 1
    """
    star, dagger, g = theta_star(env), theta_dagger(env, beta), gamma(env)
    intervals = []
    if dagger > 0:
        if star > 0:
            intervals.append((0.0, star, Strategy.SURVIVE_THEN_GROW.value))
        if dagger > star:
            intervals.append((star, dagger, Strategy.STRAIGHT_GROWTH.value))
        intervals.append((dagger, math.inf, Strategy.JUMP_THEN_GROW.value))
        summary = "psi(theta) = chi(theta) on [0, {:.6g}], chi({:.6g}) + {:g}(theta - {:.6g}) beyond".format(
            dagger, dagger, beta, dagger)
    else:
        intervals.append((0.0, math.inf, Strategy.SURVIVE_THEN_FINAL_JUMP.value))
        summary = "psi(theta)=gamma+beta*theta with gamma={:.6g}, beta={:g}".format(g, beta)
    return PhaseReport(float(beta), g, star, dagger, tuple(intervals), _one_sided(env, beta, star),
                       _one_sided(env, beta, dagger), summary)

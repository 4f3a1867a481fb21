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
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .misc import Check, GuardError, Status
from .models import EnvironmentModel, cgf, drift, tilt, tilt_parameter, tilted_moments
from .path import optimal_strategy
from .ratefn import survival_tilt

log = logging.getLogger(__name__)


########################################################################################################################
# Constants
########################################################################################################################

# default population cap, larger populations are frozen and flagged
DEFAULT_CAP = 10 ** 9
# replicates per random substream
BLOCK_SIZE = 2 ** 14
# exact oracle guards
SEQUENCE_GUARD = 10 ** 6
SUPPORT_GUARD = 2 ** 20
# unbounded laws need a truncation losing less mass than this
CERTIFIED_MASS = 1e-10
# final supports up to this size are propagated by direct convolution, larger ones on an FFT grid
DIRECT_SUPPORT = 2 ** 12
# share of the distance from E[X] to ess sup X a deep-tail tilt may reach
TILT_REACH = 0.95
# share of first-generation draws forced above the jump size
JUMP_SHARE = 0.5
# an estimate backed by fewer nonzero replicates or a larger relative error is not trusted
MIN_HITS = 50
MAX_RELATIVE_ERROR = 0.3
# a deep-tail threshold needs this many expected nonzero tilted replicates
MIN_EXPECTED_HITS = 200
# the tilt must beat naive sampling only when naive sampling is hopeless
VARIANCE_CHECK_MAX = 1e-4


class Method(enum.Enum):
    EXACT = 'exact'
    NAIVE = 'naive'
    TILTED = 'tilted'


@dataclass(frozen=True, eq=False)
class Trajectory:
    """ One simulated run: populations, associated walk, its minimum and the first time it is attained """
    z: np.ndarray
    s_walk: np.ndarray
    m_min: float
    tau: int
    env_seq: np.ndarray
    overflow: bool = False


@dataclass(frozen=True)
class TailEstimate:
    """ Estimate of P(Z_n >= threshold) """
    p_hat: float
    std_err: float
    n_samples: int
    method: Method
    threshold: int
    n: int
    seed: Optional[int] = None
    tilt: float = 0.0
    error_bound: float = 0.0
    hits: int = 0
    jump: int = 0

    def __post_init__(self):
        assert isinstance(self.method, Method), "Invalid estimation method type"
        assert 0 <= self.p_hat <= 1, "Probability estimate outside [0, 1]"
        assert self.std_err >= 0, "Negative standard error"

    @property
    def rate(self) -> float:
        """ -(1/n) log p_hat """
        return math.inf if self.p_hat <= 0 else -math.log(self.p_hat) / self.n

    def row(self, theta: Optional[float] = None) -> dict:
        return {
            'method': self.method.value,
            'n': self.n,
            'k': self.threshold,
            'theta': '' if theta is None else repr(float(theta)),
            'p_hat': repr(self.p_hat),
            'std_err': repr(self.std_err),
            'n_samples': self.n_samples,
            'seed': '' if self.seed is None else self.seed,
            'error_bound': repr(self.error_bound),
        }

    @property
    def relative_error(self) -> float:
        return math.inf if self.p_hat <= 0 else self.std_err / self.p_hat


class RatePoint(NamedTuple):
    n: int
    rate: float
    estimate: TailEstimate


########################################################################################################################
# Single Run
########################################################################################################################

def run_bpre(env: EnvironmentModel, n: int, z0: int, cap: int, rng: np.random.Generator) -> Trajectory:
    """
    Simulate one run of the branching process in random environment

    :param env: Environment model
    :param n: Number of generations
    :param z0: Initial population
    :param cap: Population cap, larger populations are frozen at the cap
    :param rng: Random generator owned by the caller
    """
    if n < 1 or z0 < 1 or cap < z0:
        raise ValueError("Invalid run parameters n={}, z0={}, cap={}".format(n, z0, cap))
    env_seq = rng.choice(len(env), size=n, p=env.probabilities)
    z = np.zeros(n + 1, dtype=np.int64)
    z[0] = z0
    overflow = False
    for k, state in enumerate(env_seq):
        if z[k] == 0 or overflow:
            z[k + 1] = z[k]
            continue
        z[k + 1] = env.laws[state].sum_draws(z[k:k + 1], rng)[0]
        if z[k + 1] > cap:
            z[k + 1] = cap
            overflow = True

    s_walk = np.concatenate([[0.0], np.cumsum(env.x[env_seq])])
    tau = int(np.argmin(s_walk))
    return Trajectory(z, s_walk, float(s_walk[tau]), tau, env_seq, overflow)


########################################################################################################################
# Exact Oracle
########################################################################################################################

@dataclass(frozen=True)
class SequenceRow:
    states: tuple
    probability: float
    survival: float
    tail: float
    walk_min: float
    mass: float


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """ Law of Z_n given every environment sequence of length n """
    env: EnvironmentModel
    n: int
    z0: int
    sequences: tuple
    probabilities: np.ndarray
    pmfs: tuple
    error_bound: float = 0.0

    def conditional_tail(self, k: int) -> np.ndarray:
        """ P(Z_n >= k | sequence) for every sequence """
        return np.array([pmf[max(k, 0):].sum() for pmf in self.pmfs])

    def tail(self, k: int) -> float:
        return float(np.dot(self.probabilities, self.conditional_tail(k)))

    def pmf(self) -> np.ndarray:
        """ Unconditional pmf of Z_n """
        size = max(pmf.size for pmf in self.pmfs)
        total = np.zeros(size)
        for p, pmf in zip(self.probabilities, self.pmfs):
            total[:pmf.size] += p * pmf
        return total

    def rows(self, k: int) -> list:
        rows = []
        for states, p, pmf in zip(self.sequences, self.probabilities, self.pmfs):
            walk = np.cumsum(self.env.x[list(states)])
            rows.append(SequenceRow(states, float(p), float(pmf[1:].sum()), float(pmf[max(k, 0):].sum()),
                                    float(min(0.0, walk.min())), float(pmf.sum())))
        return rows


def _offspring_sum(pmf: np.ndarray, masses: np.ndarray) -> np.ndarray:
    # pmf of the sum of Z iid offspring, Z ~ pmf, by accumulating convolution powers
    out = np.zeros((pmf.size - 1) * (masses.size - 1) + 1)
    out[0] = pmf[0]
    power = np.ones(1)
    for z in range(1, pmf.size):
        power = np.convolve(power, masses)
        if pmf[z] > 0:
            out[:power.size] += pmf[z] * power
    return out


def _compose(states: tuple, masses: list, z0: int, support: int) -> np.ndarray:
    # pgf of Z_n is (f_1(f_2(...f_n(s))))^z0, evaluated on the roots of unity and inverted
    size = 1 << int(support).bit_length()
    w = np.exp(2j * np.pi * np.arange(size) / size)
    for state in reversed(states):
        w = np.polynomial.polynomial.polyval(w, masses[state])
    w = w ** z0
    pmf = np.fft.fft(w).real[:support + 1] / size
    return np.clip(pmf, 0.0, None)


def exact_distribution(env: EnvironmentModel, n: int, z0: int = 1, truncation: Optional[int] = None) \
        -> ExactDistribution:
    """
    Enumerate every environment sequence and propagate the exact law of Z_k along it

    :param env: Environment model
    :param n: Number of generations
    :param z0: Initial population
    :param truncation: Support cut for unbounded laws, must lose less than CERTIFIED_MASS
    """
    if n < 1 or z0 < 1:
        raise ValueError("Invalid oracle parameters n={}, z0={}".format(n, z0))
    count = len(env) ** n
    if count > SEQUENCE_GUARD:
        raise GuardError("{} environment sequences exceed the guard {}".format(count, SEQUENCE_GUARD))

    masses, lost = [], 0.0
    for law in env.laws:
        if law.bounded:
            masses.append(np.asarray(law.masses, dtype=float))
            continue
        if truncation is None:
            raise GuardError("Unbounded law {} needs a certified truncation".format(law.info()))
        cut = float(law.tail(truncation))
        if cut >= CERTIFIED_MASS:
            raise GuardError("Truncation at {} loses mass {:.3g} >= {:g} for {}".format(
                truncation, cut, CERTIFIED_MASS, law.info()))
        masses.append(law.pmf_array(truncation))
        lost = max(lost, cut)

    a_max = max(m.size - 1 for m in masses)
    support = z0 * a_max ** n
    if support > SUPPORT_GUARD:
        raise GuardError("Support {} of Z_{} exceeds the guard {}".format(support, n, SUPPORT_GUARD))
    log.debug("exact oracle: %d sequences, support %d", count, support)

    sequences, probs, pmfs = [], [], []
    if support <= DIRECT_SUPPORT:
        start = np.zeros(z0 + 1)
        start[z0] = 1.0

        def visit(prefix, pmf, prob):
            if len(prefix) == n:
                sequences.append(prefix)
                probs.append(prob)
                pmfs.append(pmf)
                return
            for state, p in enumerate(env.probabilities):
                visit(prefix + (state,), _offspring_sum(pmf, masses[state]), prob * p)

        visit((), start, 1.0)
    else:
        for states in itertools.product(range(len(env)), repeat=n):
            sequences.append(states)
            probs.append(math.prod(env.probabilities[s] for s in states))
            pmfs.append(_compose(states, masses, z0, support))

    probs = np.asarray(probs)
    error_bound = 0.0
    if lost > 0:
        error_bound = float(np.dot(probs, [max(0.0, 1 - pmf.sum()) for pmf in pmfs]))
    return ExactDistribution(env, n, z0, tuple(sequences), probs, tuple(pmfs), error_bound)


def exact_tail(env: EnvironmentModel, n: int, z0: int, k: int, truncation: Optional[int] = None) -> tuple:
    """
    Exact P(Z_n >= k) with the per-sequence table

    :param env: Environment model
    :param n: Number of generations
    :param z0: Initial population
    :param k: Threshold
    :param truncation: Support cut for unbounded laws
    :return: (TailEstimate, list of SequenceRow)
    """
    dist = exact_distribution(env, n, z0, truncation)
    p_hat = min(max(dist.tail(k), 0.0), 1.0)
    estimate = TailEstimate(p_hat, 0.0, len(dist.sequences), Method.EXACT, k, n, error_bound=dist.error_bound)
    return estimate, dist.rows(k)


def survival_bound_margin(env: EnvironmentModel, n: int, truncation: Optional[int] = None) -> float:
    """ Smallest exp(M_n) + 1e-12 - P(Z_n > 0 | environment) over all sequences, one ancestor """
    dist = exact_distribution(env, n, 1, truncation)
    return min(math.exp(row.walk_min) + 1e-12 - row.survival for row in dist.rows(1))


def conditional_survival_bound_check(env: EnvironmentModel, n: int, truncation: Optional[int] = None) -> bool:
    """
    Check P(Z_n > 0 | environment) <= exp(min_k S_k) for every enumerated environment sequence

    :param env: Environment model
    :param n: Number of generations
    :param truncation: Support cut for unbounded laws
    """
    return survival_bound_margin(env, n, truncation) >= 0


########################################################################################################################
# Monte Carlo
########################################################################################################################

def block_rng(seed: int, block: int) -> np.random.Generator:
    """ Counter-based substream of one replicate block """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _jump_draws(law, jump: int, size: int, rng) -> tuple:
    # one ancestor's offspring from the mixture (1 - q) L + q (L | L >= jump), with likelihood ratios
    mass = law.at_least(jump)
    if not mass > 0:
        return law.sample(rng, size), np.ones(size)
    forced = rng.random(size) < JUMP_SHARE
    draws = np.asarray(law.sample(rng, size), dtype=np.int64)
    if np.any(forced):
        draws[forced] = law.sample_at_least(jump, rng, int(np.count_nonzero(forced)))
    weight = 1 / ((1 - JUMP_SHARE) + JUMP_SHARE * (draws >= jump) / mass)
    return draws, weight


def _simulate_block(env: EnvironmentModel, probs, n: int, z0: int, cap: int, size: int, rng,
                    jump: int = 0) -> tuple:
    # environments drawn from probs (tilted or not), branching always under env's laws;
    # jump > 0 biases the single ancestor's offspring towards L >= jump
    states = rng.choice(len(env), size=(size, n), p=probs)
    z = np.full(size, z0, dtype=np.int64)
    weight = np.ones(size)
    overflow = np.zeros(size, dtype=bool)
    for k in range(n):
        for state, law in enumerate(env.laws):
            mask = (states[:, k] == state) & (z > 0) & ~overflow
            if not np.any(mask):
                continue
            if k == 0 and jump > 0:
                z[mask], weight[mask] = _jump_draws(law, jump, int(np.count_nonzero(mask)), rng)
            else:
                z[mask] = law.sum_draws(z[mask], rng)
        overflow |= z > cap
        z[overflow] = cap
    return z, overflow, env.x[states].sum(axis=1), weight


@dataclass
class _Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def merge(self, values: np.ndarray):
        count = values.size
        if count == 0:
            return
        mean = float(values.mean())
        m2 = float(np.sum((values - mean) ** 2))
        total = self.count + count
        delta = mean - self.mean
        self.mean += delta * count / total
        self.m2 += m2 + delta * delta * self.count * count / total
        self.count = total

    @property
    def std_err(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1) / self.count)


def _run_blocks(task, replicates: int, seed: int, threads: int) -> list:
    starts = range(0, replicates, BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, replicates - start) for start in starts]

    def run(block):
        return task(sizes[block], block_rng(seed, block))

    log.debug("%d replicates in %d blocks on %d threads", replicates, len(sizes), threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, range(len(sizes))))
    return [run(block) for block in range(len(sizes))]


def _check_mc(n, z0, k, replicates, cap, threads):
    if n < 1 or z0 < 1 or replicates < 1 or threads < 1:
        raise ValueError("Invalid simulation parameters n={}, z0={}, replicates={}, threads={}".format(
            n, z0, replicates, threads))
    if cap < z0 or k > cap:
        raise ValueError("Threshold {} and initial population {} must not exceed the cap {}".format(k, z0, cap))


def mc_tail(env: EnvironmentModel, n: int, z0: int, k: int, replicates: int, cap: int = DEFAULT_CAP,
            seed: int = 0, threads: int = 1) -> TailEstimate:
    """
    Naive Monte Carlo frequency of {Z_n >= k}

    :param env: Environment model
    :param n: Number of generations
    :param z0: Initial population
    :param k: Threshold, at most the cap
    :param replicates: Number of independent runs
    :param cap: Population cap
    :param seed: Root seed of the replicate substreams
    :param threads: Worker threads, values do not depend on it
    """
    _check_mc(n, z0, k, replicates, cap, threads)
    probs = np.asarray(env.probabilities)

    def task(size, rng):
        z, _, _, _ = _simulate_block(env, probs, n, z0, cap, size, rng)
        return int(np.count_nonzero(z >= k))

    hits = sum(_run_blocks(task, replicates, seed, threads))
    p_hat = hits / replicates
    std_err = math.sqrt(p_hat * (1 - p_hat) / replicates)
    return TailEstimate(p_hat, std_err, replicates, Method.NAIVE, k, n, seed, hits=hits)


def tilted_estimate(env: EnvironmentModel, lam: float, n: int, z0: int, k: int, replicates: int,
                    cap: int = DEFAULT_CAP, seed: int = 0, threads: int = 1, jump: int = 0) -> TailEstimate:
    """
    Importance-sampling estimate of P(Z_n >= k) with environments drawn from tilt(env, lam), weighted by
    exp(n K(lam) - lam S_n). With jump > 0 the ancestor's offspring is also drawn from a defensive mixture
    putting half its mass on L >= jump, the likelihood ratio of that draw joining the weight.

    :param env: Environment model
    :param lam: Tilt parameter
    :param n: Number of generations
    :param z0: Initial population
    :param k: Threshold, at most the cap
    :param replicates: Number of independent runs
    :param cap: Population cap
    :param seed: Root seed of the replicate substreams
    :param threads: Worker threads, values do not depend on it
    :param jump: First-generation jump size, 0 for none, needs z0 = 1
    """
    _check_mc(n, z0, k, replicates, cap, threads)
    if jump < 0 or (jump > 0 and z0 != 1):
        raise ValueError("Jump {} needs a single ancestor, got z0={}".format(jump, z0))
    tilted = tilt(env, lam)
    probs = np.asarray(tilted.probabilities)
    scale = n * cgf(env, lam)

    def task(size, rng):
        z, _, s_n, weight = _simulate_block(env, probs, n, z0, cap, size, rng, jump)
        return np.where(z >= k, weight * np.exp(scale - lam * s_n), 0.0)

    moments = _Moments()
    hits = 0
    for values in _run_blocks(task, replicates, seed, threads):
        moments.merge(values)
        hits += int(np.count_nonzero(values))
    p_hat = min(max(moments.mean, 0.0), 1.0)
    return TailEstimate(p_hat, moments.std_err, replicates, Method.TILTED, k, n, seed, float(lam),
                        hits=hits, jump=int(jump))


def tilted_tail(env: EnvironmentModel, n: int, z0: int, theta_prime: float, k: int, replicates: int,
                cap: int = DEFAULT_CAP, seed: int = 0, threads: int = 1) -> TailEstimate:
    """
    Importance-sampling estimate of P(Z_n >= k) under the environment tilted to drift theta_prime

    :param env: Environment model
    :param n: Number of generations
    :param z0: Initial population
    :param theta_prime: Target drift, E[X] < theta_prime < ess sup X
    :param k: Threshold, at most the cap
    :param replicates: Number of independent runs
    :param cap: Population cap
    :param seed: Root seed of the replicate substreams
    :param threads: Worker threads, values do not depend on it
    """
    if not drift(env) < theta_prime < env.x_max:
        raise ValueError("Tilt target {} outside ({}, {})".format(theta_prime, drift(env), env.x_max))
    lam = tilt_parameter(env, theta_prime)
    log.debug("tilt to drift %.6g with lambda %.6g", theta_prime, lam)
    return tilted_estimate(env, lam, n, z0, k, replicates, cap, seed, threads)


def survival_rate_scan(env: EnvironmentModel, n_list, replicates: int, seed: int = 0, method: str = 'auto',
                       cap: int = DEFAULT_CAP, threads: int = 1) -> list:
    """
    Empirical survival decay rates -(1/n) log P(Z_n > 0)

    :param env: Environment model
    :param n_list: Generation counts
    :param replicates: Runs per generation count
    :param seed: Root seed
    :param method: 'exact' (oracle), 'naive', 'tilted' or 'auto'
    :param cap: Population cap
    :param threads: Worker threads
    """
    if method not in ('auto', 'exact', 'naive', 'tilted'):
        raise ValueError("Unknown survival scan method '{}'".format(method))
    _, nu = survival_tilt(env)
    # the tilt at nu makes the walk follow the survival strategy, drift K'(nu)
    target = float(tilted_moments(env, nu)[1])
    usable = nu > 0 and drift(env) < target < env.x_max
    if method == 'tilted' and not usable:
        raise ValueError("No survival tilt for this environment (E[X]={}, nu={})".format(drift(env), nu))

    points = []
    for n in n_list:
        if n < 1:
            raise ValueError("Generation count must be positive, got {}".format(n))
        if method == 'exact':
            estimate, _ = exact_tail(env, n, 1, 1)
        elif method == 'tilted' or (method == 'auto' and usable):
            estimate = tilted_estimate(env, nu, n, 1, 1, replicates, cap, seed, threads)
        else:
            estimate = mc_tail(env, n, 1, 1, replicates, cap, seed, threads)
        points.append(RatePoint(n, estimate.rate, estimate))
    return points


def level_rate_scan(env: EnvironmentModel, theta: float, n_list, replicates: int, seed: int = 0,
                    method: str = 'naive', cap: int = DEFAULT_CAP, threads: int = 1) -> list:
    """
    Rates -(1/n) log P(Z_n >= e^(theta n)) from the exact oracle or naive Monte Carlo

    :param env: Environment model
    :param theta: Level
    :param n_list: Generation counts
    :param replicates: Runs per generation count
    :param seed: Root seed
    :param method: 'exact' or 'naive'
    :param cap: Population cap
    :param threads: Worker threads
    """
    if method not in ('exact', 'naive'):
        raise ValueError("Unknown level scan method '{}'".format(method))
    points = []
    for n in n_list:
        k = int(math.ceil(math.exp(theta * n)))
        if method == 'exact':
            estimate, _ = exact_tail(env, n, 1, k)
        else:
            estimate = mc_tail(env, n, 1, k, replicates, cap, seed, threads)
        points.append(RatePoint(n, estimate.rate, estimate))
    return points


def empirical_rate_curve(env: EnvironmentModel, beta: float, theta: float, n_list, replicates: int,
                         seed: int = 0, cap: int = DEFAULT_CAP, threads: int = 1) -> list:
    """
    Empirical rates -(1/n) log P(Z_n >= e^(theta n)), tilted to the growth slope of the optimal strategy.
    When the strategy jumps at once (t_theta = 0, s_theta > 0) the ancestor's offspring is importance
    sampled above e^(s_theta n) as well.

    :param env: Environment model
    :param beta: Tail exponent of the rate the curve approaches
    :param theta: Level
    :param n_list: Generation counts
    :param replicates: Runs per generation count
    :param seed: Root seed
    :param cap: Population cap, every threshold must stay below it
    :param threads: Worker threads
    """
    strategy = optimal_strategy(env, beta, theta)
    slope = None
    if strategy.t_theta < 1:
        slope = (theta - strategy.s_theta) / (1 - strategy.t_theta)
        if not drift(env) < slope < env.x_max:
            slope = None

    jumps = strategy.t_theta == 0 and strategy.s_theta > 0
    lam = 0.0 if slope is None else tilt_parameter(env, slope)

    points = []
    for n in n_list:
        k = int(math.ceil(math.exp(theta * n)))
        if k > cap:
            raise ValueError("Threshold e^(theta n) = {} above the cap {} at n={}".format(k, cap, n))
        jump = int(math.ceil(math.exp(strategy.s_theta * n))) if jumps else 0
        if slope is None and not jump:
            estimate = mc_tail(env, n, 1, k, replicates, cap, seed, threads)
        else:
            estimate = tilted_estimate(env, lam, n, 1, k, replicates, cap, seed, threads, jump)
        log.debug("n=%d k=%d jump=%d: p=%.6g se=%.3g hits=%d", n, k, jump, estimate.p_hat, estimate.std_err,
                  estimate.hits)
        points.append(RatePoint(n, estimate.rate, estimate))
    return points


########################################################################################################################
# Oracle Triangle
########################################################################################################################

def _deep_threshold(env: EnvironmentModel, dist: ExactDistribution, tails: np.ndarray, replicates: int,
                    target: float) -> Optional[tuple]:
    # threshold closest to target among those the clipped tilt hits at least MIN_EXPECTED_HITS times
    spread = env.x_max - drift(env)
    counts = np.array([np.bincount(states, minlength=len(env)) for states in dist.sequences])
    candidates = np.unique(np.geomspace(2, tails.size - 1, 64).astype(np.int64)) if tails.size > 2 else []
    feasible = []
    for k in candidates:
        exact = float(tails[k])
        if not 0 < exact <= 0.05:
            continue
        theta_prime = min(max(math.log(k) / dist.n, drift(env) + 1e-3 * spread), drift(env) + TILT_REACH * spread)
        tilted = tilt(env, tilt_parameter(env, theta_prime))
        sequence_probs = np.exp(counts @ np.log(tilted.probabilities))
        expected = replicates * float(np.dot(sequence_probs, dist.conditional_tail(int(k))))
        if expected >= MIN_EXPECTED_HITS:
            feasible.append((abs(math.log(exact) - math.log(target)), int(k), theta_prime))
    if not feasible:
        return None
    _, k, theta_prime = min(feasible)
    return k, theta_prime


def triangle_checks(env: EnvironmentModel, n: int, replicates: int, seed: int = 0, threads: int = 1,
                    target: float = 1e-6, tag: str = '', truncation: Optional[int] = None,
                    band: float = 3.0) -> list:
    """
    Compare exact, naive and tilted estimates: naive against exact on survival and on a moderate threshold,
    tilted against exact on the threshold closest to target that the tilt reaches often enough, plus the
    variance reduction of the tilt when naive sampling is hopeless, and the conditional survival bound.
    A tilted estimate with fewer than MIN_HITS nonzero replicates or a relative error above
    MAX_RELATIVE_ERROR fails whatever its deviation.

    :param env: Environment model
    :param n: Number of generations
    :param replicates: Monte Carlo runs per estimate
    :param seed: Root seed
    :param threads: Worker threads
    :param target: Deep-tail probability
    :param tag: Name prefix of the returned checks
    :param truncation: Support cut for unbounded laws
    :param band: Allowed deviation in standard errors
    """
    names = ['naive~exact survival', 'naive~exact moderate', 'tilted~exact deep', 'tilt variance reduction',
             'survival<=exp(M_n)']
    names = ["{}n={} {}".format(tag, n, name) for name in names]
    try:
        dist = exact_distribution(env, n, 1, truncation)
    except GuardError as e:
        return [Check.skipped(name, str(e)) for name in names]

    pmf = dist.pmf()
    tails = np.cumsum(pmf[::-1])[::-1]
    bound = Check.from_margin(names[4], min(math.exp(row.walk_min) + 1e-12 - row.survival for row in dist.rows(1)))
    checks = []

    moderate = max(int(np.flatnonzero(tails >= 0.05)[-1]), 1)
    for name, k in ((names[0], 1), (names[1], moderate)):
        exact = min(float(tails[k]), 1.0) if k < tails.size else 0.0
        naive = mc_tail(env, n, 1, k, replicates, seed=seed, threads=threads)
        sigma = math.sqrt(exact * (1 - exact) / replicates)
        checks.append(Check.from_margin(name, band * sigma + 1e-12 - abs(naive.p_hat - exact),
                                        "k={} exact={:.6g} naive={:.6g}".format(k, exact, naive.p_hat)))

    # the deep-tail comparison needs a random environment and a threshold the tilt reaches
    deep = None if env.is_deterministic else _deep_threshold(env, dist, tails, replicates, target)
    if deep is None:
        return checks + [bound]

    k_deep, theta_prime = deep
    exact = float(tails[k_deep])
    tilted = tilted_tail(env, n, 1, theta_prime, k_deep, replicates, seed=seed, threads=threads)
    detail = "k={} exact={:.6g} tilted={:.6g} se={:.3g} hits={}".format(
        k_deep, exact, tilted.p_hat, tilted.std_err, tilted.hits)
    if tilted.hits < MIN_HITS or tilted.relative_error > MAX_RELATIVE_ERROR:
        checks.append(Check(names[2], Status.FAIL, -math.inf, "too few hits, " + detail))
    else:
        checks.append(Check.from_margin(names[2], band * tilted.std_err + 1e-12 - abs(tilted.p_hat - exact), detail))
    if exact <= VARIANCE_CHECK_MAX and tilted.std_err > 0:
        ratio = exact * (1 - exact) / (tilted.std_err ** 2 * replicates)
        checks.append(Check.from_margin(names[3], ratio - 10, "variance ratio {:.3g}".format(ratio)))
    return checks + [bound]

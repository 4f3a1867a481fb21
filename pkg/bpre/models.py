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
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import yaml
from scipy import special, stats

from .misc import ModelError

log = logging.getLogger(__name__)


########################################################################################################################
# Constants
########################################################################################################################

# probability mass allowed beyond the truncation point of unbounded laws
TRUNCATION_TOL = 1e-12
# hard cap on any truncated support
MAX_SUPPORT = 2 ** 22
# tie tolerance for criticality and state equality decisions
ZERO_TOL = 1e-12
# size of the inverse-cdf table of the zeta sampler, Pareto inversion beyond it
ZETA_TABLE = 2 ** 16
# zeta offspring values counted multinomially, larger ones drawn one by one
COUNT_HEAD = 64
# single draws per vectorized chunk of an offspring sum
CHUNK_DRAWS = 2 ** 22
# single heavy-tail draws and offspring sums are clipped here to stay inside int64
DRAW_CAP = 2.0 ** 50
SUM_CAP = 2.0 ** 62
# model file probabilities must sum to one within this
FILE_PROB_TOL = 1e-9


class Regime(enum.Enum):
    SUPERCRITICAL = 'Supercritical'
    CRITICAL = 'Critical'
    WEAKLY_SUBCRITICAL = 'WeaklySubcritical'
    INTERMEDIATELY_SUBCRITICAL = 'IntermediatelySubcritical'
    STRONGLY_SUBCRITICAL = 'StronglySubcritical'


########################################################################################################################
# Offspring Laws
########################################################################################################################

class OffspringLaw:
    """ Base class of reproduction laws, P(L = k) for k = 0, 1, 2, ... """

    family = None
    bounded = False

    @property
    def mean(self) -> float:
        raise NotImplementedError()

    def pmf(self, k):
        raise NotImplementedError()

    def tail(self, z):
        """ P(L > z) """
        raise NotImplementedError()

    def pgf(self, s: float) -> float:
        raise NotImplementedError()

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError()

    def sum_draws(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """
        Sum of z[i] independent draws for every entry of z

        :param z: Nonnegative integer counts
        :param rng: Random generator owned by the caller
        """
        raise NotImplementedError()

    def truncation(self, tol: float = TRUNCATION_TOL) -> int:
        """ Smallest K with P(L > K) <= tol, capped at MAX_SUPPORT """
        raise NotImplementedError()

    def conditional_tail(self, z):
        """ P(L > z | L > 0) """
        return self.tail(z) / self.tail(0)

    def at_least(self, j: int) -> float:
        """ P(L >= j) """
        return float(self.tail(j - 1))

    def sample_at_least(self, j: int, rng: np.random.Generator, size: int) -> np.ndarray:
        """
        Draws of L conditioned on L >= j

        :param j: Lower bound, P(L >= j) must be positive
        :param rng: Random generator owned by the caller
        :param size: Number of draws
        """
        if j <= 0:
            return self.sample(rng, size)
        if j > MAX_SUPPORT:
            raise ModelError("Conditional draw above the support cap {}".format(MAX_SUPPORT))
        masses = self.pmf_array(max(self.truncation(), j))[j:]
        total = masses.sum()
        if not total > 0:
            raise ModelError("{} puts no mass on L >= {}".format(self.info(), j))
        return j + rng.choice(masses.size, size=size, p=masses / total)

    def pmf_array(self, k_max: Optional[int] = None) -> np.ndarray:
        """
        Probability masses of 0..k_max, default up to the documented truncation point

        :param k_max: Last support point
        """
        if k_max is None:
            k_max = self.truncation()
        return np.asarray(self.pmf(np.arange(k_max + 1)), dtype=float)

    def info(self) -> str:
        return "{}({})".format(self.family, ', '.join('{}={}'.format(k, v) for k, v in self.params().items()))

    def params(self) -> dict:
        raise NotImplementedError()

    def __str__(self):
        return self.info()


@dataclass(frozen=True, eq=True)
class LinearFractional(OffspringLaw):
    """ P(L=0) = a, P(L=k) = (1-a)(1-q)q^(k-1) for k >= 1 """
    a: float
    q: float

    family = 'linear_fractional'

    def __post_init__(self):
        if not 0 <= self.a < 1:
            raise ModelError("Invalid zero mass a={}, use 0 <= a < 1".format(self.a))
        if not 0 < self.q < 1:
            raise ModelError("Invalid geometric ratio q={}, use 0 < q < 1".format(self.q))

    @property
    def mean(self):
        return (1 - self.a) / (1 - self.q)

    def pmf(self, k):
        k = np.asarray(k)
        positive = (1 - self.a) * (1 - self.q) * np.power(self.q, np.maximum(k, 1) - 1.0)
        return np.where(k == 0, self.a, np.where(k > 0, positive, 0.0))

    def tail(self, z):
        z = np.asarray(z)
        return np.where(z < 0, 1.0, (1 - self.a) * np.power(self.q, np.maximum(z, 0) * 1.0))

    def pgf(self, s):
        return self.a + (1 - self.a) * (1 - self.q) * s / (1 - self.q * s)

    def truncation(self, tol=TRUNCATION_TOL):
        k = math.ceil(math.log(tol / (1 - self.a)) / math.log(self.q))
        return int(min(max(k, 1), MAX_SUPPORT))

    def sample(self, rng, size=None):
        if size is None:
            if rng.random() < self.a:
                return 0
            return int(rng.geometric(1 - self.q))
        alive = rng.random(size) >= self.a
        return np.where(alive, rng.geometric(1 - self.q, size), 0)

    def sum_draws(self, z, rng):
        z = np.asarray(z, dtype=np.int64)
        nonzero = rng.binomial(z, 1 - self.a)
        # sum of N geometric(1-q) on {1,2,..} is N + NegBin(N, 1-q) failures
        extra = rng.negative_binomial(np.maximum(nonzero, 1), 1 - self.q)
        return nonzero + np.where(nonzero > 0, extra, 0)

    def sample_at_least(self, j, rng, size):
        if j <= 0:
            return self.sample(rng, size)
        # memoryless above zero
        return (j - 1) + rng.geometric(1 - self.q, size)

    def params(self):
        return {'a': self.a, 'q': self.q}


@dataclass(frozen=True, eq=True)
class Poisson(OffspringLaw):
    rate: float

    family = 'poisson'

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError("Invalid Poisson rate {}, must be positive".format(self.rate))

    @property
    def mean(self):
        return float(self.rate)

    def pmf(self, k):
        return stats.poisson.pmf(k, self.rate)

    def tail(self, z):
        return stats.poisson.sf(z, self.rate)

    def pgf(self, s):
        return math.exp(self.rate * (s - 1))

    def truncation(self, tol=TRUNCATION_TOL):
        return int(min(max(stats.poisson.isf(tol, self.rate), 1), MAX_SUPPORT))

    def sample(self, rng, size=None):
        if size is None:
            return int(rng.poisson(self.rate))
        return rng.poisson(self.rate, size)

    def sum_draws(self, z, rng):
        return rng.poisson(self.rate * np.asarray(z, dtype=float))

    def params(self):
        return {'rate': self.rate}


@dataclass(frozen=True, eq=True)
class Bounded(OffspringLaw):
    """ Explicit probability masses over {0, ..., a_max} """
    masses: Tuple[float, ...]

    family = 'bounded'
    bounded = True

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ModelError("Bounded law needs at least one probability mass")
        if np.any(masses < 0):
            raise ModelError("Negative probability mass in {}".format(self.masses))
        if abs(masses.sum() - 1) > FILE_PROB_TOL:
            raise ModelError("Probability masses sum to {}, not 1".format(masses.sum()))
        if masses[-1] == 0:
            raise ModelError("Trailing zero mass, a_max must carry positive mass")
        if masses[0] == 1:
            raise ModelError("Law L=0 has zero mean")

    @classmethod
    def from_mapping(cls, mapping) -> 'Bounded':
        """
        Build from {k: p} or [p0, p1, ...], zero masses trimmed from the top and rescaled to sum 1

        :param mapping: Dict of offspring count to probability, or list of probabilities
        """
        if isinstance(mapping, dict):
            items = {int(k): float(v) for k, v in mapping.items()}
            if not items or min(items) < 0:
                raise ModelError("Invalid bounded pmf {}".format(mapping))
            masses = [0.0] * (max(items) + 1)
            for k, v in items.items():
                masses[k] = v
        else:
            masses = [float(v) for v in mapping]
        while len(masses) > 1 and masses[-1] == 0:
            masses.pop()
        total = sum(masses)
        if total <= 0 or abs(total - 1) > FILE_PROB_TOL:
            raise ModelError("Probability masses sum to {}, not 1".format(total))
        return cls(tuple(m / total for m in masses))

    @property
    def a_max(self) -> int:
        return len(self.masses) - 1

    @property
    def is_degenerate(self) -> bool:
        return np.count_nonzero(self.masses) == 1

    @cached_property
    def _masses(self):
        return np.asarray(self.masses, dtype=float)

    @property
    def mean(self):
        return float(np.dot(np.arange(self.a_max + 1), self._masses))

    def pmf(self, k):
        k = np.asarray(k)
        inside = (k >= 0) & (k <= self.a_max)
        return np.where(inside, self._masses[np.clip(k, 0, self.a_max)], 0.0)

    def tail(self, z):
        z = np.asarray(z)
        upper = np.concatenate([np.cumsum(self._masses[::-1])[::-1][1:], [0.0]])
        return np.where(z < 0, 1.0, upper[np.clip(z, 0, self.a_max)])

    def pgf(self, s):
        return float(np.polynomial.polynomial.polyval(s, self._masses))

    def truncation(self, tol=TRUNCATION_TOL):
        return self.a_max

    def sample(self, rng, size=None):
        if size is None:
            return int(rng.choice(self.a_max + 1, p=self._masses))
        return rng.choice(self.a_max + 1, size=size, p=self._masses)

    def sum_draws(self, z, rng):
        z = np.asarray(z, dtype=np.int64)
        if self.is_degenerate:
            return z * int(np.flatnonzero(self._masses)[0])
        counts = rng.multinomial(z, self._masses)
        return counts @ np.arange(self.a_max + 1)

    def params(self):
        return {'pmf': {k: p for k, p in enumerate(self.masses) if p > 0}}


def _chunked_sums(counts: np.ndarray, draw) -> np.ndarray:
    # sums of counts[i] single draws, vectorized in chunks of about CHUNK_DRAWS draws
    out = np.zeros(counts.shape, dtype=np.int64)
    live = np.flatnonzero(counts > 0)
    start = 0
    while start < live.size:
        total = np.cumsum(counts[live[start:]])
        stop = start + max(1, int(np.searchsorted(total, CHUNK_DRAWS, side='right')))
        chunk = live[start:stop]
        draws = draw(int(counts[chunk].sum()))
        owner = np.repeat(np.arange(chunk.size), counts[chunk])
        sums = np.bincount(owner, weights=draws, minlength=chunk.size)
        out[chunk] = np.minimum(sums, SUM_CAP).astype(np.int64)
        start = stop
    return out


@dataclass(frozen=True, eq=True)
class Zeta(OffspringLaw):
    """ P(L=0) = a, P(L=k) proportional to k^-(beta+1) for k >= 1, so P(L>z | L>0) decays like z^-beta """
    beta: float
    a: float = 0.0

    family = 'zeta'

    def __post_init__(self):
        if not self.beta > 1:
            raise ModelError("Invalid zeta tail exponent {}, use beta > 1 (finite mean)".format(self.beta))
        if not 0 <= self.a < 1:
            raise ModelError("Invalid zero mass a={}, use 0 <= a < 1".format(self.a))

    @cached_property
    def _norm(self):
        return float(special.zeta(self.beta + 1))

    @property
    def mean(self):
        return (1 - self.a) * float(special.zeta(self.beta)) / self._norm

    def pmf(self, k):
        k = np.asarray(k)
        positive = (1 - self.a) * np.power(np.maximum(k, 1) * 1.0, -(self.beta + 1)) / self._norm
        return np.where(k == 0, self.a, np.where(k > 0, positive, 0.0))

    def tail(self, z):
        z = np.asarray(z)
        # Hurwitz zeta: sum_{k > z} k^-(beta+1)
        upper = (1 - self.a) * special.zeta(self.beta + 1, np.maximum(z, 0) + 1.0) / self._norm
        return np.where(z < 0, 1.0, upper)

    def pgf(self, s):
        if s == 1:
            return 1.0
        k_max = self.truncation()
        return float(np.polynomial.polynomial.polyval(s, self.pmf_array(k_max)))

    def truncation(self, tol=TRUNCATION_TOL):
        guess = ((1 - self.a) / (self.beta * self._norm * tol)) ** (1 / self.beta)
        k = int(min(max(math.ceil(guess), 1), MAX_SUPPORT))
        while k < MAX_SUPPORT and self.tail(k) > tol:
            k = min(2 * k, MAX_SUPPORT)
        while k > 1 and self.tail(k - 1) <= tol:
            k -= 1
        return k

    @cached_property
    def _table(self):
        cutoff = min(self.truncation(), ZETA_TABLE)
        return np.cumsum(self.pmf_array(cutoff))

    @cached_property
    def _head(self):
        # probabilities of the values 0..h and of a draw above h, h = min(COUNT_HEAD, table cutoff)
        h = min(COUNT_HEAD, self._table.size - 1)
        masses = np.diff(self._table[:h + 1], prepend=0.0)
        probs = np.append(masses, self.at_least(h + 1))
        return probs / probs.sum()

    def _invert(self, u: np.ndarray) -> np.ndarray:
        table = self._table
        cutoff = table.size - 1
        k = np.searchsorted(table, u, side='right')
        beyond = k > cutoff
        if np.any(beyond):
            # Pareto inversion of P(L >= k | L > cutoff) ~ ((k - 1/2) / (cutoff + 1/2))^-beta
            v = (1 - u[beyond]) / max(1 - table[-1], np.finfo(float).tiny)
            x = (cutoff + 0.5) * np.power(np.clip(v, np.finfo(float).tiny, 1.0), -1 / self.beta) + 0.5
            k[beyond] = np.maximum(np.floor(np.minimum(x, DRAW_CAP)), cutoff + 1).astype(np.int64)
        return k.astype(np.int64)

    def sample(self, rng, size=None):
        if size is None:
            return int(self._invert(np.atleast_1d(rng.random()))[0])
        return self._invert(rng.random(size))

    def at_least(self, j):
        table = self._table
        cutoff = table.size - 1
        if j <= 0:
            return 1.0
        if j <= cutoff + 1:
            return float(max(1 - table[j - 1], 0.0))
        return float((1 - table[-1]) * ((j - 0.5) / (cutoff + 0.5)) ** -self.beta)

    def sample_at_least(self, j, rng, size):
        if j <= 0:
            return self.sample(rng, size)
        mass = self.at_least(j)
        if not mass > 0:
            raise ModelError("{} draws no value >= {}".format(self.info(), j))
        # inverse cdf restricted to u >= P(L < j)
        v = 1 - rng.random(size)
        return np.maximum(self._invert(1 - v * mass), j)

    def sum_draws(self, z, rng):
        z = np.asarray(z, dtype=np.int64)
        out = _chunked_sums(np.where(z <= COUNT_HEAD, z, 0), lambda size: self.sample(rng, size))
        large = np.flatnonzero(z > COUNT_HEAD)
        if large.size:
            # counts of the values 0..h are multinomial, values above h are drawn one by one
            head = self._head
            counts = rng.multinomial(z[large], head)
            values = counts[:, :-1] @ np.arange(head.size - 1, dtype=np.int64)
            beyond = _chunked_sums(counts[:, -1], lambda size: self.sample_at_least(head.size - 1, rng, size))
            out[large] = np.minimum(values.astype(float) + beyond, SUM_CAP).astype(np.int64)
        return out

    def params(self):
        return {'beta': self.beta, 'a': self.a}


FAMILIES = {
    LinearFractional.family: LinearFractional,
    Poisson.family: Poisson,
    Bounded.family: Bounded,
    Zeta.family: Zeta,
}


########################################################################################################################
# Environment
########################################################################################################################

@dataclass(frozen=True, eq=True)
class TailAssumption:
    """ P(L > z | L > 0) <= d * min(m, 1) * z^-beta for every state and z """
    beta: float
    d: float = 1.0

    def __post_init__(self):
        if not self.beta > 1:
            raise ModelError("Tail exponent must satisfy beta > 1, got {}".format(self.beta))
        if not self.d > 0:
            raise ModelError("Envelope constant must satisfy d > 0, got {}".format(self.d))


@dataclass(frozen=True, eq=True)
class EnvironmentModel:
    """ Finite-state i.i.d. environment: state laws and their probabilities """
    laws: Tuple[OffspringLaw, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        assert isinstance(self.laws, tuple) and isinstance(self.probabilities, tuple), "Use tuples for states"
        assert all(isinstance(law, OffspringLaw) for law in self.laws), "Invalid offspring law type"
        if not self.laws:
            raise ModelError("Environment needs at least one state")
        if len(self.laws) != len(self.probabilities):
            raise ModelError("{} laws but {} probabilities".format(len(self.laws), len(self.probabilities)))
        if any(not 0 < p <= 1 for p in self.probabilities):
            raise ModelError("State probabilities must lie in (0, 1]: {}".format(self.probabilities))
        if abs(math.fsum(self.probabilities) - 1) > ZERO_TOL:
            raise ModelError("State probabilities sum to {}, not 1".format(math.fsum(self.probabilities)))
        if any(not law.mean > 0 for law in self.laws):
            raise ModelError("Every offspring law needs a positive mean")

    @classmethod
    def from_states(cls, *states) -> 'EnvironmentModel':
        """
        Build from (law, probability) pairs, probabilities rescaled to sum exactly to one

        :param states: (OffspringLaw, probability) pairs
        """
        laws = tuple(law for law, _ in states)
        probs = [float(p) for _, p in states]
        total = math.fsum(probs)
        return cls(laws, tuple(p / total for p in probs))

    def __len__(self):
        return len(self.laws)

    def __str__(self):
        return "<Environment: {} states, E[X]={:.6g}>".format(len(self), drift(self))

    def info(self) -> str:
        msg = "Environment:\n"
        for law, p, x in zip(self.laws, self.probabilities, self.x):
            msg += "- p={:.6g} m={:.6g} X={:.6g} {}\n".format(p, law.mean, x, law.info())
        return msg

    @cached_property
    def x(self) -> np.ndarray:
        """ Per-state walk increment log m """
        return np.log([law.mean for law in self.laws])

    @cached_property
    def log_probs(self) -> np.ndarray:
        return np.log(self.probabilities)

    @property
    def x_max(self) -> float:
        """ Essential supremum of X """
        return float(self.x.max())

    @property
    def top_probability(self) -> float:
        """ P(X = ess sup X) """
        return float(np.sum(np.asarray(self.probabilities)[self.x >= self.x_max - ZERO_TOL]))

    @property
    def is_deterministic(self) -> bool:
        """ All states share one mean, the Galton-Watson case """
        return float(np.ptp(self.x)) <= ZERO_TOL


########################################################################################################################
# Model Functions
########################################################################################################################

def pgf_eval(law: OffspringLaw, s: float) -> float:
    """
    Probability generating function E[s^L]

    :param law: Offspring law
    :param s: Argument in [0, 1]
    """
    if not 0 <= s <= 1:
        raise ValueError("pgf argument {} outside [0, 1]".format(s))
    if s == 1:
        return 1.0
    return float(law.pgf(s))


def mean(law: OffspringLaw) -> float:
    """ m = f'(1) """
    return law.mean


def sample_offspring(law: OffspringLaw, rng: np.random.Generator) -> int:
    """
    One offspring count, deterministic given the generator state

    :param law: Offspring law
    :param rng: Random generator owned by the caller
    """
    return int(law.sample(rng))


def tilted_moments(env: EnvironmentModel, lam) -> tuple:
    """
    K(lam), K'(lam) and K''(lam) of X = log m, vectorized over lam

    :param env: Environment model
    :param lam: Tilt parameter(s)
    """
    lam = np.asarray(lam, dtype=float)
    expo = env.log_probs + lam[..., None] * (env.x - env.x_max)
    lse = special.logsumexp(expo, axis=-1)
    weights = np.exp(expo - lse[..., None])
    k0 = lam * env.x_max + lse
    k1 = np.sum(weights * env.x, axis=-1)
    k2 = np.sum(weights * (env.x - k1[..., None]) ** 2, axis=-1)
    return k0, k1, k2


def cgf(env: EnvironmentModel, lam):
    """
    K(lam) = log E[exp(lam X)] = log sum_i p_i m_i^lam

    :param env: Environment model
    :param lam: Nonnegative tilt parameter(s)
    """
    if np.any(np.asarray(lam) < 0):
        raise ValueError("cgf needs lambda >= 0, got {}".format(lam))
    value = tilted_moments(env, lam)[0]
    return float(value) if np.ndim(value) == 0 else value


def drift(env: EnvironmentModel) -> float:
    """ E[X] = sum_i p_i log m_i """
    return math.fsum(p * x for p, x in zip(env.probabilities, env.x))


def classify(env: EnvironmentModel) -> Regime:
    """
    Criticality regime from the signs of E[X] and E[X e^X]

    :param env: Environment model
    """
    mu = drift(env)
    if mu > ZERO_TOL:
        return Regime.SUPERCRITICAL
    if mu >= -ZERO_TOL:
        return Regime.CRITICAL
    slope = math.fsum(p * law.mean * x for p, law, x in zip(env.probabilities, env.laws, env.x))
    if slope < -ZERO_TOL:
        return Regime.STRONGLY_SUBCRITICAL
    if slope <= ZERO_TOL:
        return Regime.INTERMEDIATELY_SUBCRITICAL
    return Regime.WEAKLY_SUBCRITICAL


def tilt(env: EnvironmentModel, lam: float) -> EnvironmentModel:
    """
    Exponentially tilted environment, state probabilities p_i e^(lam x_i) / E[e^(lam X)]

    :param env: Environment model
    :param lam: Nonnegative tilt parameter
    """
    if lam < 0:
        raise ValueError("tilt needs lambda >= 0, got {}".format(lam))
    if lam == 0:
        return env
    probs = special.softmax(env.log_probs + lam * env.x)
    probs = np.maximum(probs, np.finfo(float).tiny)
    probs = probs / math.fsum(probs)
    return EnvironmentModel(env.laws, tuple(float(p) for p in probs))


def tilt_parameter(env: EnvironmentModel, theta, rtol: float = 1e-13, max_iter: int = 200):
    """
    Solve K'(lam) = theta for lam >= 0 by safeguarded Newton steps inside a bisection bracket.
    Entries with theta <= E[X] give 0, entries with theta >= ess sup X give inf.

    :param env: Environment model
    :param theta: Target drift(s)
    :param rtol: Relative bracket width at which iteration stops
    :param max_iter: Iteration cap
    """
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    theta = np.atleast_1d(theta)
    out = np.zeros(theta.shape)
    out[theta >= env.x_max] = np.inf
    todo = (theta > drift(env)) & (theta < env.x_max)
    if np.any(todo):
        target = theta[todo]
        lo = np.zeros(target.shape)
        hi = np.ones(target.shape)
        for _ in range(max_iter):
            short = tilted_moments(env, hi)[1] < target
            if not np.any(short):
                break
            lo = np.where(short, hi, lo)
            hi = np.where(short, 2 * hi, hi)
        lam = 0.5 * (lo + hi)
        for _ in range(max_iter):
            _, k1, k2 = tilted_moments(env, lam)
            excess = k1 - target
            lo = np.where(excess < 0, lam, lo)
            hi = np.where(excess > 0, lam, hi)
            with np.errstate(divide='ignore', invalid='ignore'):
                newton = lam - excess / k2
            inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
            step = np.where(excess == 0, lam, np.where(inside, newton, 0.5 * (lo + hi)))
            done = (np.abs(step - lam) <= rtol * np.maximum(lam, 1.0)) | (hi - lo <= rtol * np.maximum(hi, 1.0))
            lam = step
            if np.all(done):
                break
        out[todo] = lam
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TailCheck:
    holds: bool
    minimal_d: float
    violation: Optional[Tuple[int, int]] = None


def _tail_ratio(law: OffspringLaw, z: np.ndarray, beta: float) -> np.ndarray:
    # P(L > z | L > 0) / ((m ^ 1) z^-beta)
    return law.conditional_tail(z) / (min(law.mean, 1.0) * np.power(z * 1.0, -beta))


def verify_tail_assumption(env: EnvironmentModel, assume: TailAssumption, z_max: int) -> TailCheck:
    """
    Check P(L > z | L > 0) <= d (m ^ 1) z^-beta on z = 1..z_max for every state. Zeta states are closed
    beyond the grid analytically: the ratio to the envelope is bounded by z^(beta - beta_law) / (beta_law
    zeta(beta_law + 1) (m ^ 1)), and it tends to 1 / (beta zeta(beta + 1) (m ^ 1)) when the exponents agree.

    :param env: Environment model
    :param assume: Tail assumption (beta, d)
    :param z_max: Last grid point
    """
    if z_max < 1:
        raise ValueError("z_max must be at least 1, got {}".format(z_max))
    z = np.arange(1, z_max + 1)
    minimal_d = 0.0
    violation = None
    for index, law in enumerate(env.laws):
        ratio = _tail_ratio(law, z, assume.beta)
        law_d = float(ratio.max())
        bad = np.flatnonzero(ratio > assume.d)
        if violation is None and bad.size:
            violation = (index, int(z[bad[0]]))

        if isinstance(law, Zeta):
            scale = law.beta * law._norm * min(law.mean, 1.0)
            gap = law.beta - assume.beta
            if gap < -ZERO_TOL:
                # the ratio grows like z^(beta - beta_law) and eventually exceeds any d
                law_d = math.inf
                if violation is None:
                    cross = (assume.d * scale) ** (1 / -gap)
                    violation = (index, max(int(math.ceil(cross)), z_max + 1))
            elif gap <= ZERO_TOL:
                # (z / (z + 1))^beta sup <= ratio(z) <= sup
                sup = 1 / scale
                law_d = max(law_d, sup)
                if violation is None and assume.d < sup:
                    cross = 1 / ((sup / assume.d) ** (1 / assume.beta) - 1)
                    violation = (index, max(int(math.floor(cross)) + 1, z_max + 1))
            else:
                # past z_end the bound z^(beta - beta_law) / scale falls below the grid maximum
                z_end = (law_d * scale) ** (-1 / gap) if law_d > 0 else MAX_SUPPORT
                z_end = int(min(math.ceil(z_end), MAX_SUPPORT))
                if z_end > z_max:
                    extra = np.arange(z_max + 1, z_end + 1)
                    more = _tail_ratio(law, extra, assume.beta)
                    law_d = max(law_d, float(more.max()))
                    bad = np.flatnonzero(more > assume.d)
                    if violation is None and bad.size:
                        violation = (index, int(extra[bad[0]]))
        minimal_d = max(minimal_d, law_d)

    holds = violation is None
    if not holds:
        log.debug("tail assumption beta=%s d=%s fails at state %d, z=%d", assume.beta, assume.d, *violation)
    return TailCheck(holds, minimal_d, violation)


########################################################################################################################
# Model Files
########################################################################################################################

@dataclass(frozen=True)
class ModelFile:
    env: EnvironmentModel
    tail: Optional[TailAssumption] = None


def new_law(family: str, params: dict) -> OffspringLaw:
    """
    Instantiate offspring law from family name and named parameters

    :param family: 'bounded', 'linear_fractional', 'poisson' or 'zeta'
    :param params: Family parameters
    """
    if family not in FAMILIES:
        raise ModelError("Unknown family '{}', use one of: {}".format(family, ', '.join(sorted(FAMILIES))))
    try:
        if family == Bounded.family:
            if set(params) != {'pmf'}:
                raise ModelError("Bounded law takes only 'pmf', got {}".format(sorted(params)))
            return Bounded.from_mapping(params['pmf'])
        return FAMILIES[family](**{k: float(v) for k, v in params.items()})
    except TypeError as e:
        raise ModelError("Invalid parameters for {}: {}".format(family, e))


def parse_model(text: str) -> ModelFile:
    """
    Parse YAML model file text

    :param text: The model file content
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ModelError("Model file is not valid YAML: {}".format(e))
    if not isinstance(data, dict) or not isinstance(data.get('states'), list) or not data['states']:
        raise ModelError("Model file needs a nonempty 'states' list")
    unknown = set(data) - {'states', 'tail'}
    if unknown:
        raise ModelError("Unknown model file keys: {}".format(', '.join(sorted(unknown))))

    laws, probs = [], []
    for index, state in enumerate(data['states']):
        if not isinstance(state, dict) or 'family' not in state or 'probability' not in state:
            raise ModelError("State {} needs 'family' and 'probability'".format(index))
        params = {k: v for k, v in state.items() if k not in ('family', 'probability')}
        laws.append(new_law(str(state['family']), params))
        probs.append(float(state['probability']))

    total = math.fsum(probs)
    if abs(total - 1) > FILE_PROB_TOL:
        raise ModelError("State probabilities sum to {}, not 1".format(total))
    env = EnvironmentModel.from_states(*zip(laws, probs))

    tail = None
    if data.get('tail') is not None:
        block = data['tail']
        if not isinstance(block, dict) or 'beta' not in block:
            raise ModelError("Tail block needs 'beta' (and optionally 'd')")
        tail = TailAssumption(float(block['beta']), float(block.get('d', 1.0)))
    log.debug("parsed model with %d states", len(env))
    return ModelFile(env, tail)


def load_model(file_path: str) -> ModelFile:
    """
    Load YAML model file from disk

    :param file_path: The path to model file
    """
    try:
        with open(file_path, 'r') as f:
            return parse_model(f.read())
    except OSError as e:
        raise ModelError("Cannot read model file {}: {}".format(file_path, e.strerror))


def bundled_environments() -> dict:
    """ Named test environments used by the verification suite """
    return {
        # m = 0.25 w.p. 0.8, m = 1.5 w.p. 0.2
        'strongly_subcritical': EnvironmentModel.from_states(
            (Bounded.from_mapping({0: 0.75, 1: 0.25}), 0.8),
            (Bounded.from_mapping({0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25}), 0.2)),
        # X = +-log 2 with equal probability
        'critical': EnvironmentModel.from_states(
            (Bounded.from_mapping({0: 0.5, 4: 0.5}), 0.5),
            (Bounded.from_mapping({0: 0.5, 1: 0.5}), 0.5)),
        # m = 2 or 0.8, E[X] > 0
        'supercritical': EnvironmentModel.from_states(
            (Bounded.from_mapping({0: 0.25, 2: 0.25, 3: 0.5}), 0.5),
            (Bounded.from_mapping({0: 0.4, 1: 0.4, 2: 0.2}), 0.5)),
        'galton_watson': EnvironmentModel.from_states(
            (Bounded.from_mapping({0: 0.5, 1: 0.5}), 1.0)),
        'heavy_supercritical': EnvironmentModel.from_states(
            (Zeta(2.5, 0.0), 0.5),
            (Bounded.from_mapping({0: 0.2, 1: 0.2, 2: 0.6}), 0.5)),
    }

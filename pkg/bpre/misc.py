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
from scipy import stats


INV_PHI = (math.sqrt(5) - 1) / 2
# chance that a verification run fails some statistical check by bad luck alone
FAMILY_FLAKE = 0.01


########################################################################################################################
# Exceptions
########################################################################################################################

class ModelError(ValueError):
    """ Invalid model file, offspring law or environment parameters """


class GuardError(Exception):
    """ Exact oracle refuses the instance (too many sequences, unbounded law, support too large) """


########################################################################################################################
# Verification Records
########################################################################################################################

class Status(enum.Enum):
    PASS = 'PASS'
    FAIL = 'FAIL'
    SKIPPED = 'SKIPPED'


@dataclass(frozen=True)
class Check:
    """ One verified property: name, verdict and the worst margin observed (negative means violated) """
    name: str
    status: Status
    margin: float = math.nan
    detail: str = ''

    @property
    def passed(self):
        return self.status is Status.PASS

    @classmethod
    def from_margin(cls, name: str, margin: float, detail: str = ''):
        return cls(name, Status.PASS if margin >= 0 else Status.FAIL, float(margin), detail)

    @classmethod
    def skipped(cls, name: str, detail: str):
        return cls(name, Status.SKIPPED, math.nan, detail)


########################################################################################################################
# Helper Functions
########################################################################################################################

def golden_section(func, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500) -> float:
    """
    Minimize a unimodal function on [lo, hi] by golden-section search. The end points are
    compared with the interior result, so a minimum sitting on the boundary is returned exactly.

    :param func: Objective, scalar to scalar (may return inf)
    :param lo: Lower end of the bracket
    :param hi: Upper end of the bracket
    :param tol: Bracket width at which the search stops
    :param max_iter: Iteration cap
    """
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)

    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for x in (lo, hi):
        fx = func(x)
        if fx <= best_f:
            best_x, best_f = x, fx
    return best_x


def parse_grid(text: str) -> np.ndarray:
    """
    Parse theta grid in 'A:B:STEP' format, both ends included

    :param text: The grid description
    """
    parts = text.split(':')
    if len(parts) != 3:
        raise ValueError("Invalid grid '{}', use A:B:STEP".format(text))
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError("Invalid grid '{}', STEP must be positive and B >= A".format(text))
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def parse_int_list(text: str) -> list:
    """ Parse comma separated integers, e.g. '10,20,40' """
    return [int(item, 0) for item in text.split(',') if item.strip()]


def ext_str(value: float) -> str:
    """ Extended real to text: 'inf' for the +infinity marker, shortest repr otherwise """
    return 'inf' if math.isinf(value) else repr(float(value))


def bonferroni_band(count: int, family: float = FAMILY_FLAKE) -> float:
    """
    Two-sided normal band, in standard errors, keeping the chance that any of count checks fails
    by luck alone below family

    :param count: Number of statistical checks
    :param family: Familywise false failure probability
    """
    if count < 1 or not 0 < family < 1:
        raise ValueError("Invalid check count {} or family rate {}".format(count, family))
    return float(stats.norm.isf(family / (2 * count)))

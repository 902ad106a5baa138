"""Partial identification when the under-reporting rates are only bounded by ``delta``.

Three assumptions on the rates are supported:

``box``
    ``0 <= eta0, eta1 <= delta``
``eta0_le_eta1``
    ``0 <= eta0 <= eta1 <= delta``
``eta1_le_eta0``
    ``0 <= eta1 <= eta0 <= delta``

Probability bounds are clipped into [0, 1]: a negative lower bound for
``p(1|0)`` means part of the rate region is incompatible with the table, and 0
is then attained on the admissible boundary.  A non-positive denominator
means the unexposed column is exhausted at a corner of the region; that is
reported as :class:`DegenerateBound` together with the largest usable
``delta``.

The effect interval is the difference of extremes, which is exact for the box
and conservative under the two ordered assumptions because the extremes of
``p(1|1)`` and ``p(1|0)`` need not occur at a common rate pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CellProbabilities, ContingencyTable
from .errors import ConfigError, DegenerateBound

ASSUMPTIONS = ("box", "eta0_le_eta1", "eta1_le_eta0")
_ALIASES = {"box": "box", "symmetric_box": "box", "a": "eta0_le_eta1", "eta0_le_eta1": "eta0_le_eta1",
            "b": "eta1_le_eta0", "eta1_le_eta0": "eta1_le_eta0"}


def normalize_assumption(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown assumption {name!r}; use box, a or b") from None


@dataclass(frozen=True)
class IntervalBound:
    lower: float
    upper: float
    assumption: str = "box"
    delta: float = 0.0

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    @property
    def width(self) -> float:
        return self.upper - self.lower


class BoundSet(NamedTuple):
    p1_given_1: IntervalBound
    p1_given_0: IntervalBound
    ate: IntervalBound


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 <= delta < 1.0:
        raise ConfigError(f"delta must lie in [0, 1), got {delta}")
    return delta


def _max_delta(room: float, load: float) -> float:
    """Largest delta keeping ``room - delta/(1-delta) * load`` positive."""
    if load <= 0:
        return 1.0
    k = room / load
    return k / (1.0 + k)


def _positive(den: float, room: float, load: float, what: str) -> None:
    if not den > 0:
        raise DegenerateBound(f"{what} denominator {den:.3g} is not positive",
                              max_delta=_max_delta(room, load))


def _clip01(v: float) -> float:
    return min(1.0, max(0.0, float(v)))


def _compose(lo1, hi1, lo0, hi0, assumption, delta) -> BoundSet:
    b1 = IntervalBound(_clip01(lo1), _clip01(hi1), assumption, delta)
    b0 = IntervalBound(_clip01(lo0), _clip01(hi0), assumption, delta)
    ate = IntervalBound(b1.lower - b0.upper, b1.upper - b0.lower, assumption, delta)
    return BoundSet(b1, b0, ate)


def _exposed_terms(p11, p01):
    if not p11 + p01 > 0:
        raise DegenerateBound("no exposed mass in the observed table")
    return p11 / (p11 + p01)


def prop1_bounds(observed: CellProbabilities, delta: float) -> BoundSet:
    """Bounds under ``0 <= eta0, eta1 <= delta``."""
    delta = _check_delta(delta)
    obs = CellProbabilities.validated(*observed.as_tuple())
    p11, p10, p01, p00 = obs.as_tuple()
    _exposed_terms(p11, p01)
    k = delta / (1 - delta)
    unexposed = p10 + p00
    den_lo = unexposed - k * p11
    den_hi = unexposed - k * p01
    _positive(den_lo, unexposed, p11, "p(1|0) lower")
    _positive(den_hi, unexposed, p01, "p(1|0) upper")
    lo1 = p11 / (p11 + p01 / (1 - delta))
    hi1 = p11 / (p11 + (1 - delta) * p01)
    lo0 = (p10 - k * p11) / den_lo
    hi0 = p10 / den_hi
    return _compose(lo1, hi1, lo0, hi0, "box", delta)


def _diagonal(p11, p10, p01, p00, k):
    # p(1|0) along eta0 = eta1; monotone in k, so its range is set by the endpoints
    den = p10 + p00 - k * (p01 + p11)
    _positive(den, p10 + p00, p01 + p11, "equal-rate p(1|0)")
    return (p10 - k * p11) / den


def prop2a_bounds(observed: CellProbabilities, delta: float) -> BoundSet:
    """Bounds under ``0 <= eta0 <= eta1 <= delta``."""
    delta = _check_delta(delta)
    obs = CellProbabilities.validated(*observed.as_tuple())
    p11, p10, p01, p00 = obs.as_tuple()
    star1 = _exposed_terms(p11, p01)
    k = delta / (1 - delta)
    unexposed = p10 + p00
    _positive(unexposed, unexposed, 0.0, "p(1|0)")
    den_lo = unexposed - k * p11
    _positive(den_lo, unexposed, p11, "p(1|0) lower")
    star0 = p10 / unexposed
    lo1 = star1
    hi1 = p11 / (p11 + p01 * (1 - delta))
    lo0 = (p10 - k * p11) / den_lo
    hi0 = max(star0, _diagonal(p11, p10, p01, p00, k))
    return _compose(lo1, hi1, lo0, hi0, "eta0_le_eta1", delta)


def prop2b_bounds(observed: CellProbabilities, delta: float) -> BoundSet:
    """Bounds under ``0 <= eta1 <= eta0 <= delta``."""
    delta = _check_delta(delta)
    obs = CellProbabilities.validated(*observed.as_tuple())
    p11, p10, p01, p00 = obs.as_tuple()
    star1 = _exposed_terms(p11, p01)
    k = delta / (1 - delta)
    unexposed = p10 + p00
    _positive(unexposed, unexposed, 0.0, "p(1|0)")
    den_hi = unexposed - k * p01
    _positive(den_hi, unexposed, p01, "p(1|0) upper")
    star0 = p10 / unexposed
    lo1 = p11 / (p11 + p01 / (1 - delta))
    hi1 = star1
    lo0 = min(star0, _diagonal(p11, p10, p01, p00, k))
    hi0 = p10 / den_hi
    return _compose(lo1, hi1, lo0, hi0, "eta1_le_eta0", delta)


_BY_ASSUMPTION = {"box": prop1_bounds, "eta0_le_eta1": prop2a_bounds, "eta1_le_eta0": prop2b_bounds}


def cell_bounds(observed: CellProbabilities, delta: float, assumption: str = "box") -> BoundSet:
    return _BY_ASSUMPTION[normalize_assumption(assumption)](observed, delta)


def table_bounds(table: ContingencyTable, delta: float, assumption: str = "box") -> IntervalBound:
    """Effect bound for one stratum from its observed counts."""
    assumption = normalize_assumption(assumption)
    if assumption != "box":
        if table.n == 0:
            raise DegenerateBound("empty stratum")
        return cell_bounds(table.frequencies(), delta, assumption).ate
    delta = _check_delta(delta)
    a, b, c, d = (float(v) for v in table.as_tuple())
    if not a + b > 0:
        raise DegenerateBound("stratum has no reported-exposed units")
    k = delta / (1 - delta)
    den_hi0 = c + d - b * k
    den_lo0 = c + d - a * k
    _positive(den_hi0, c + d, b, "p(1|0) upper")
    _positive(den_lo0, c + d, a, "p(1|0) lower")
    lo1 = a / (a + b / (1 - delta))
    hi1 = a / (a + b * (1 - delta))
    hi0 = c / den_hi0
    lo0 = (c - a * k) / den_lo0
    return _compose(lo1, hi1, lo0, hi0, "box", delta).ate


def max_feasible_delta(observed: CellProbabilities, assumption: str = "box") -> float:
    """Supremum of the deltas for which the bounds are defined."""
    p11, p10, p01, p00 = observed.as_tuple()
    unexposed = p10 + p00
    assumption = normalize_assumption(assumption)
    if assumption == "box":
        return _max_delta(unexposed, max(p11, p01))
    return _max_delta(unexposed, p11 + p01)


def delta_grid(stop: float = 0.5, step: float = 0.05) -> np.ndarray:
    n = int(round(stop / step))
    return np.round(np.arange(n + 1) * step, 12)

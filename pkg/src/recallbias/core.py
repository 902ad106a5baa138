"""Data model and the cell-level algebra of outcome-dependent under-reporting.

Cell naming follows ``p_yz = Pr(Y=y, Z=z | x)``: ``p10`` is the probability
of a positive outcome among the *unexposed*.  Starred (observed) cells use the
same field names; which one a :class:`CellProbabilities` holds is up to the
caller.

Under-reporting moves a truly exposed unit with outcome ``y`` into the
unexposed column with probability ``eta_y``.  Only the forward map
(:func:`misclassify_cells`) and its inverse (:func:`adjust_cells`) are needed
to express every other quantity in the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    NonBinaryValue,
    DegenerateMargin,
    InadmissibleEtas,
    InvalidProbabilities,
)

SIMPLEX_TOL = 1e-9


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        bad = int(np.flatnonzero((arr != 0) & (arr != 1))[0])
        raise NonBinaryValue(name, bad + 1, arr[bad].item())
    return arr.astype(np.int8)


@dataclass(frozen=True)
class Unit:
    x: np.ndarray
    y: int
    z_star: int
    z: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed records: covariates, outcome ``y`` and reported exposure ``z_star``.

    ``z`` (true exposure) and the potential outcomes ``y0``/``y1`` are only
    filled in by the simulation module.
    """

    x: np.ndarray
    y: np.ndarray
    z_star: np.ndarray
    covariate_names: tuple = ()
    z: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None

    def __post_init__(self):
        y = _as_binary(self.y, "y")
        z_star = _as_binary(self.z_star, "z_star")
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(y), 0)
        if x.ndim != 2 or x.shape[0] != len(y) or len(z_star) != len(y):
            raise DataError("x, y and z_star must describe the same number of units")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("covariate_names does not match the covariate dimension")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z_star", z_star)
        object.__setattr__(self, "covariate_names", names)
        for name in ("z", "y0", "y1"):
            val = getattr(self, name)
            if val is not None:
                val = _as_binary(val, name)
                if len(val) != len(y):
                    raise DataError(f"{name} has the wrong length")
                object.__setattr__(self, name, val)
        if self.z is not None and np.any((z_star == 1) & (self.z == 0)):
            raise DataError("z_star = 1 with z = 0: only under-reporting is modelled")
        for arr in (self.x, self.y, self.z_star, self.z, self.y0, self.y1):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    def units(self) -> Iterator[Unit]:
        for i in range(self.n):
            yield Unit(self.x[i], int(self.y[i]), int(self.z_star[i]),
                       None if self.z is None else int(self.z[i]))

    @classmethod
    def from_units(cls, units: Sequence[Unit], covariate_names=()) -> "Dataset":
        units = list(units)
        d = len(units[0].x) if units else len(covariate_names)
        x = np.array([np.asarray(u.x, dtype=float) for u in units]).reshape(len(units), d)
        z = None
        if units and all(u.z is not None for u in units):
            z = [u.z for u in units]
        return cls(x, [u.y for u in units], [u.z_star for u in units],
                   tuple(covariate_names), z=z)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        opt = {k: (None if getattr(self, k) is None else getattr(self, k)[idx])
               for k in ("z", "y0", "y1")}
        return Dataset(self.x[idx], self.y[idx], self.z_star[idx], self.covariate_names, **opt)

    def select(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        names = tuple(self.covariate_names[j] for j in columns)
        return Dataset(self.x[:, columns], self.y, self.z_star, names,
                       z=self.z, y0=self.y0, y1=self.y1)


@dataclass(frozen=True, eq=False)
class RecallBiasSpec:
    """Under-reporting rates among the truly exposed: ``eta0`` when Y=0, ``eta1`` when Y=1.

    Scalars give the constant mode; equal-length arrays give one rate pair per
    unit.
    """

    eta0: object = 0.0
    eta1: object = 0.0

    def __post_init__(self):
        if np.ndim(self.eta0) == 0 and np.ndim(self.eta1) == 0:
            e0, e1 = float(self.eta0), float(self.eta1)
            if not (0.0 <= e0 < 1.0 and 0.0 <= e1 < 1.0):
                if not (math.isfinite(e0) and math.isfinite(e1)):
                    raise ValueError("eta must be finite")
                raise ValueError("eta0 and eta1 must lie in [0, 1)")
            object.__setattr__(self, "eta0", e0)
            object.__setattr__(self, "eta1", e1)
            return
        e0, e1 = np.asarray(self.eta0, dtype=float), np.asarray(self.eta1, dtype=float)
        if e0.ndim > 1 or e1.ndim > 1:
            raise ValueError("eta must be a scalar or a vector")
        if e0.ndim != e1.ndim or (e0.ndim == 1 and e0.shape != e1.shape):
            raise ValueError("eta0 and eta1 must both be scalars or equal-length vectors")
        if np.any(~np.isfinite(e0)) or np.any(~np.isfinite(e1)):
            raise ValueError("eta must be finite")
        if np.any(e0 < 0) or np.any(e0 >= 1) or np.any(e1 < 0) or np.any(e1 >= 1):
            raise ValueError("eta0 and eta1 must lie in [0, 1)")
        e0.setflags(write=False)
        e1.setflags(write=False)
        object.__setattr__(self, "eta0", e0)
        object.__setattr__(self, "eta1", e1)

    @property
    def mode(self) -> str:
        return "constant" if np.ndim(self.eta0) == 0 else "per_unit"

    @property
    def is_constant(self) -> bool:
        return self.mode == "constant"

    def per_unit(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.is_constant:
            return np.full(n, self.eta0), np.full(n, self.eta1)
        if len(self.eta0) != n:
            raise ValueError(f"per-unit spec has {len(self.eta0)} entries, data has {n}")
        return np.asarray(self.eta0), np.asarray(self.eta1)

    def take(self, idx) -> "RecallBiasSpec":
        if self.is_constant:
            return self
        return RecallBiasSpec(self.eta0[idx], self.eta1[idx])

    def as_dict(self) -> dict:
        if self.is_constant:
            return {"eta0": self.eta0, "eta1": self.eta1, "mode": "constant"}
        return {"mode": "per_unit", "eta0_mean": float(np.mean(self.eta0)),
                "eta1_mean": float(np.mean(self.eta1))}

    def __eq__(self, other):
        if not isinstance(other, RecallBiasSpec):
            return NotImplemented
        return (np.array_equal(self.eta0, other.eta0)
                and np.array_equal(self.eta1, other.eta1))

    def __repr__(self):
        if self.is_constant:
            return f"RecallBiasSpec(eta0={self.eta0!r}, eta1={self.eta1!r})"
        return f"RecallBiasSpec(per_unit, n={len(self.eta0)})"


NO_BIAS = RecallBiasSpec(0.0, 0.0)


def _constant_etas(spec) -> tuple[float, float]:
    if isinstance(spec, RecallBiasSpec):
        if not spec.is_constant:
            raise ValueError("cell-level adjustment needs a constant spec")
        return spec.eta0, spec.eta1
    eta0, eta1 = spec
    RecallBiasSpec(eta0, eta1)
    return float(eta0), float(eta1)


@dataclass(frozen=True)
class CellProbabilities:
    """Joint distribution of (Y, exposure) in one stratum or at one covariate value."""

    p11: float
    p10: float
    p01: float
    p00: float

    @classmethod
    def validated(cls, p11, p10, p01, p00, tol: float = SIMPLEX_TOL) -> "CellProbabilities":
        """Check the four values form a simplex; renormalise small rounding drift."""
        # plain floats: this runs once per cell table, often in tight loops
        cells = [float(p11), float(p10), float(p01), float(p00)]
        if not all(math.isfinite(v) and v >= -tol for v in cells):
            raise InvalidProbabilities(f"cell probabilities {cells} are not valid")
        total = math.fsum(cells)
        if abs(total - 1.0) > tol:
            raise InvalidProbabilities(f"cell probabilities sum to {total!r}, not 1")
        cells = [max(v, 0.0) for v in cells]
        total = math.fsum(cells)
        return cls(*(v / total for v in cells))

    def as_tuple(self) -> tuple:
        return (self.p11, self.p10, self.p01, self.p00)

    @property
    def p1_given_1(self):
        return self.p11 / (self.p11 + self.p01)

    @property
    def p1_given_0(self):
        return self.p10 / (self.p10 + self.p00)


@dataclass(frozen=True)
class ContingencyTable:
    """Counts of (Y, Z*) in one stratum: a = (1, 1), b = (0, 1), c = (1, 0), d = (0, 0)."""

    a_star: int
    b_star: int
    c_star: int
    d_star: int

    def __post_init__(self):
        if min(self.a_star, self.b_star, self.c_star, self.d_star) < 0:
            raise DataError("contingency counts must be non-negative")

    @property
    def n(self) -> int:
        return self.a_star + self.b_star + self.c_star + self.d_star

    @classmethod
    def from_arrays(cls, y, z_star) -> "ContingencyTable":
        y = np.asarray(y)
        z_star = np.asarray(z_star)
        a = int(np.sum((y == 1) & (z_star == 1)))
        b = int(np.sum((y == 0) & (z_star == 1)))
        c = int(np.sum((y == 1) & (z_star == 0)))
        d = int(np.sum((y == 0) & (z_star == 0)))
        return cls(a, b, c, d)

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        return ContingencyTable(self.a_star + other.a_star, self.b_star + other.b_star,
                                self.c_star + other.c_star, self.d_star + other.d_star)

    def frequencies(self) -> CellProbabilities:
        n = self.n
        if n == 0:
            raise DataError("empty table")
        return CellProbabilities(self.a_star / n, self.c_star / n, self.b_star / n, self.d_star / n)

    def as_tuple(self) -> tuple:
        return (self.a_star, self.b_star, self.c_star, self.d_star)


# -- cell algebra ------------------------------------------------------------

def adjust_arrays(p11, p10, p01, p00, eta0, eta1):
    """Vectorised inverse map; no admissibility check."""
    k1 = eta1 / (1.0 - eta1)
    k0 = eta0 / (1.0 - eta0)
    return (p11 / (1.0 - eta1), p10 - k1 * p11, p01 / (1.0 - eta0), p00 - k0 * p01)


def misclassify_arrays(p11, p10, p01, p00, eta0, eta1):
    return ((1.0 - eta1) * p11, p10 + eta1 * p11, (1.0 - eta0) * p01, p00 + eta0 * p01)


def adjust_cells(observed: CellProbabilities, spec) -> CellProbabilities:
    """Recover the true-exposure cells from observed ones.

    Raises
    ------
    InadmissibleEtas
        If an adjusted cell is negative, i.e. the assumed rates remove more
        mass from the unexposed column than it holds.
    """
    eta0, eta1 = _constant_etas(spec)
    obs = CellProbabilities.validated(*observed.as_tuple())
    cells = adjust_arrays(*obs.as_tuple(), eta0, eta1)
    if min(cells) < 0:
        raise InadmissibleEtas(
            f"eta0={eta0}, eta1={eta1} give negative adjusted cells {tuple(map(float, cells))}")
    return CellProbabilities(*map(float, cells))


def misclassify_cells(truth: CellProbabilities, spec) -> CellProbabilities:
    eta0, eta1 = _constant_etas(spec)
    t = CellProbabilities.validated(*truth.as_tuple())
    return CellProbabilities(*map(float, misclassify_arrays(*t.as_tuple(), eta0, eta1)))


def joint_observed_prob(m0, m1, e, spec, y, z_star):
    """Pr(Y=y, Z*=z_star | x) given outcome models ``m0``, ``m1`` and propensity ``e``.

    Works elementwise on arrays; ``spec`` may be a :class:`RecallBiasSpec` or an
    ``(eta0, eta1)`` pair of scalars/arrays.
    """
    if isinstance(spec, RecallBiasSpec):
        eta0, eta1 = spec.eta0, spec.eta1
    else:
        eta0, eta1 = spec
    m0, m1, e = np.asarray(m0, float), np.asarray(m1, float), np.asarray(e, float)
    y, z_star = np.asarray(y), np.asarray(z_star)
    p11 = m1 * e * (1 - eta1)
    p01 = (1 - m1) * e * (1 - eta0)
    p10 = m1 * e * eta1 + m0 * (1 - e)
    p00 = (1 - m1) * e * eta0 + (1 - m0) * (1 - e)
    out = np.where(z_star == 1, np.where(y == 1, p11, p01), np.where(y == 1, p10, p00))
    return out[()] if out.ndim == 0 else out


def cate_surface(observed: CellProbabilities, eta0, eta1):
    """Conditional effect over (broadcast) arrays of rates; NaN where inadmissible."""
    eta0 = np.asarray(eta0, dtype=float)
    eta1 = np.asarray(eta1, dtype=float)
    q11, q10, q01, q00 = adjust_arrays(*observed.as_tuple(), eta0, eta1)
    with np.errstate(divide="ignore", invalid="ignore"):
        exposed = q11 + q01
        unexposed = q10 + q00
        tau = q11 / exposed - q10 / unexposed
    bad = (q10 < 0) | (q00 < 0) | (exposed <= 0) | (unexposed <= 0)
    tau = np.where(bad, np.nan, tau)
    return tau[()] if tau.ndim == 0 else tau


def cate_point(observed: CellProbabilities, spec) -> float:
    """Point-identified conditional effect for known constant rates."""
    eta0, eta1 = _constant_etas(spec)
    obs = CellProbabilities.validated(*observed.as_tuple())
    p11, p10, p01, p00 = obs.as_tuple()
    k1 = eta1 / (1 - eta1)
    k0 = eta0 / (1 - eta0)
    num0 = p10 - k1 * p11
    den0 = num0 + p00 - k0 * p01
    if num0 < 0 or p00 - k0 * p01 < 0:
        raise InadmissibleEtas(f"eta0={eta0}, eta1={eta1} are incompatible with {obs}")
    a = p11 / (1 - eta1)
    den1 = a + p01 / (1 - eta0)
    if den1 <= 0 or den0 <= 0:
        raise DegenerateMargin("an adjusted exposure margin is zero")
    return float(a / den1 - num0 / den0)

"""Stratified estimation with recall-bias correction.

Strata come from quantiles of a fitted score (reported-exposure propensity
or prognostic score) or from blocks of covariate-similar units built by
iterated optimal matching.  Within a stratum the effect is estimated from
its 2x2 table of (Y, Z*) after undoing the expected under-reporting, and the
stratum estimates are averaged with weights ``n_i / N``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ContingencyTable, Dataset, RecallBiasSpec
from .errors import (
    AllDegenerate,
    ConfigError,
    DegenerateScores,
    DegenerateStratum,
    InsufficientExposed,
    NonDivisibleN,
)
from .estimators import EstimateResult, ModelSpec
from .logistic import fit_logistic
from .matching import (
    capacitated_assignment,
    rank_mahalanobis_embedding,
    within_block_distance,
)
from scipy.spatial.distance import cdist


@dataclass(frozen=True, eq=False)
class StratumAssignment:
    labels: np.ndarray
    method: str
    scores: Optional[np.ndarray] = None
    size_param: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.size:
            ids = np.unique(labels)
            if ids[0] != 0 or ids[-1] != len(ids) - 1:
                raise ValueError("stratum labels must form a contiguous range starting at 0")
        object.__setattr__(self, "labels", labels)

    @property
    def n_strata(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels == i)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_strata)

    def relabel(self, groups: Sequence[Sequence[int]]) -> "StratumAssignment":
        """Merge strata: ``groups[g]`` lists the old labels that form new stratum ``g``."""
        new = np.empty(self.n_strata, dtype=int)
        for g, old in enumerate(groups):
            new[list(old)] = g
        diag = dict(self.diagnostics)
        diag["merged_from"] = self.n_strata
        return StratumAssignment(new[self.labels], self.method, self.scores, self.size_param, diag)


# -- scores ------------------------------------------------------------------

def fit_propensity_star(data: Dataset, models: ModelSpec = ModelSpec()) -> np.ndarray:
    """Fitted Pr(Z* = 1 | X) for every unit."""
    if data.n == 0:
        raise ConfigError("empty dataset")
    design = models.exposure_design(data.x)
    return fit_logistic(design, data.z_star).predict(design)


def fit_prognostic(data: Dataset, models: ModelSpec = ModelSpec()) -> np.ndarray:
    """Linear predictor of the outcome model fitted among reported-exposed units.

    Reported exposure implies true exposure under under-reporting, so this
    subsample carries no misclassification.  The intercept is left out of the
    returned score.
    """
    exposed = data.z_star == 1
    design = models.outcome_design(data.x)
    if exposed.sum() < design.shape[1] + 1:
        raise InsufficientExposed(f"only {int(exposed.sum())} reported-exposed units")
    y = data.y[exposed]
    if y.min() == y.max():
        raise InsufficientExposed("outcome is constant among reported-exposed units")
    coef = fit_logistic(design[exposed], y).coef
    k = 1 if models.include_intercept else 0
    return design[:, k:] @ coef[k:]


def quantile_strata(scores, n_strata: int, method: str = "prop") -> StratumAssignment:
    """Split units into ``n_strata`` groups of near-equal size by score rank."""
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    if n_strata < 2:
        raise ConfigError("need at least two strata")
    if n < n_strata:
        raise ConfigError(f"{n} units cannot fill {n_strata} strata")
    if len(np.unique(scores)) < n_strata:
        raise DegenerateScores(f"fewer than {n_strata} distinct score values")
    order = np.argsort(scores, kind="stable")
    labels = np.empty(n, dtype=int)
    labels[order] = (np.arange(n) * n_strata) // n
    return StratumAssignment(labels, method, scores, n_strata)


# -- blocking ------------------------------------------------------------------

def _canonical(labels: np.ndarray) -> np.ndarray:
    # number blocks by their smallest member so equal partitions compare equal
    first = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in first:
            first[lab] = len(first)
        out[i] = first[lab]
    return out


def _match_to_templates(dist: np.ndarray, templates: np.ndarray, k: int) -> np.ndarray:
    n = len(dist)
    labels = np.empty(n, dtype=int)
    labels[templates] = np.arange(len(templates))
    rest = np.setdiff1d(np.arange(n), templates)
    if len(rest):
        labels[rest] = capacitated_assignment(dist[np.ix_(rest, templates)], k - 1)
    return _canonical(labels)


def _eject(dist: np.ndarray, labels: np.ndarray, n_blocks: int) -> np.ndarray:
    out = np.empty(n_blocks, dtype=int)
    for b in range(n_blocks):
        idx = np.flatnonzero(labels == b)
        spread = dist[np.ix_(idx, idx)].sum(axis=1)
        out[b] = idx[int(np.argmax(spread))]
    return out


def build_blocks(data, k: int, seed=0, max_rounds: int = 50, n_init: int = 5,
                 dist: Optional[np.ndarray] = None) -> StratumAssignment:
    """Partition units into blocks of exactly ``k`` covariate-similar units.

    Random templates seed the blocks and the remaining units are matched to
    them optimally, ``k - 1`` per template.  Each round then ejects from every
    block the unit farthest (summed distance) from its block-mates, uses the
    ejected units as the new templates, and re-matches.  A round's partition
    is kept only if it lowers the total within-block distance; iteration
    stops when the partition repeats, stops improving, or after
    ``max_rounds``.  The best of ``n_init`` random starts is returned; one
    start can lock into a poor partition because the ejected units are
    themselves drawn from the poor blocks.

    ``data`` may be a :class:`Dataset` or a covariate matrix; distances are
    rank-based Mahalanobis unless ``dist`` is supplied.
    """
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n = len(x)
    if k < 1 or n % k:
        raise NonDivisibleN(f"N={n} is not divisible by block size k={k}")
    n_blocks = n // k
    if dist is None:
        dist = rank_mahalanobis_embedding(x)
        dist = cdist(dist, dist)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        templates = np.sort(rng.choice(n, n_blocks, replace=False))
        labels = _match_to_templates(dist, templates, k)
        objective = within_block_distance(dist, labels)
        trace = [objective]
        converged = False
        rounds = 0
        for rounds in range(1, max_rounds + 1):
            ejected = _eject(dist, labels, n_blocks)
            new = _match_to_templates(dist, ejected, k)
            if np.array_equal(new, labels):
                converged = True
                break
            new_obj = within_block_distance(dist, new)
            if not new_obj < objective:
                converged = True
                break
            labels, objective = new, new_obj
            trace.append(objective)
        if best is None or objective < best[1]:
            best = (labels, objective, trace, converged, rounds)
    labels, objective, trace, converged, rounds = best
    if not converged:
        warnings.warn(f"blocking stopped after {max_rounds} rounds without settling", RuntimeWarning,
                      stacklevel=2)
    diag = {"objective": objective, "trace": trace, "converged": converged, "rounds": rounds}
    return StratumAssignment(labels, "block", None, k, diag)


# -- within-stratum estimation ------------------------------------------------

@dataclass(frozen=True)
class StratumSums:
    """Additive summary of one stratum for the corrected 2x2 estimator.

    ``a1``/``b0`` are the reported-exposed counts inflated by ``1/(1-eta)``;
    ``a_shift``/``b_shift`` are the mass those units add back to the
    unexposed column (``eta/(1-eta)`` weights).
    """

    a: float
    b: float
    c: float
    d: float
    a1: float
    b0: float
    a_shift: float
    b_shift: float

    @property
    def n(self) -> float:
        return self.a + self.b + self.c + self.d

    @classmethod
    def from_units(cls, y, z_star, eta0, eta1) -> "StratumSums":
        y = np.asarray(y, dtype=float)
        zs = np.asarray(z_star, dtype=float)
        eta0 = np.broadcast_to(np.asarray(eta0, dtype=float), y.shape)
        eta1 = np.broadcast_to(np.asarray(eta1, dtype=float), y.shape)
        ey = zs * y
        en = zs * (1 - y)
        return cls(ey.sum(), en.sum(), ((1 - zs) * y).sum(), ((1 - zs) * (1 - y)).sum(),
                   (ey / (1 - eta1)).sum(), (en / (1 - eta0)).sum(),
                   (ey * eta1 / (1 - eta1)).sum(), (en * eta0 / (1 - eta0)).sum())

    @classmethod
    def from_table(cls, table: ContingencyTable, spec: RecallBiasSpec) -> "StratumSums":
        if not spec.is_constant:
            raise ValueError("a count table needs a constant spec")
        a, b, c, d = (float(v) for v in table.as_tuple())
        e0, e1 = spec.eta0, spec.eta1
        return cls(a, b, c, d, a / (1 - e1), b / (1 - e0), a * e1 / (1 - e1), b * e0 / (1 - e0))

    def __add__(self, other: "StratumSums") -> "StratumSums":
        return StratumSums(*(x + y for x, y in zip(self._values(), other._values())))

    def _values(self):
        return (self.a, self.b, self.c, self.d, self.a1, self.b0, self.a_shift, self.b_shift)

    def table(self) -> ContingencyTable:
        return ContingencyTable(*(int(round(v)) for v in (self.a, self.b, self.c, self.d)))

    def corrected(self):
        """(exposed Y=1, exposed Y=0, unexposed Y=1, unexposed Y=0) after correction."""
        return self.a1, self.b0, self.c - self.a_shift, self.d - self.b_shift

    def degeneracy(self) -> Optional[str]:
        t1, t0, u1, u0 = self.corrected()
        if self.a + self.b == 0:
            return "no reported-exposed units"
        if self.c + self.d == 0:
            return "no reported-unexposed units"
        if u1 + u0 <= 0:
            return "corrected unexposed margin is not positive"
        if u1 < 0 or u0 < 0:
            return "a corrected unexposed cell is negative"
        return None

    def estimate(self) -> float:
        why = self.degeneracy()
        if why is not None:
            raise DegenerateStratum(why)
        t1, t0, u1, u0 = self.corrected()
        return t1 / (t1 + t0) - u1 / (u1 + u0)


def stratum_estimate(y, z_star, spec: RecallBiasSpec) -> float:
    """Corrected effect estimate from the units of one stratum.

    ``spec`` may be constant or carry one rate pair per unit of the stratum.
    """
    y = np.asarray(y)
    e0, e1 = spec.per_unit(len(y))
    return StratumSums.from_units(y, z_star, e0, e1).estimate()


def table_estimate(table: ContingencyTable, spec: RecallBiasSpec) -> float:
    return StratumSums.from_table(table, spec).estimate()


def stratum_sums(assignment: StratumAssignment, data: Dataset, spec: RecallBiasSpec) -> list:
    e0, e1 = spec.per_unit(data.n)
    out = []
    for i in range(assignment.n_strata):
        idx = assignment.members(i)
        out.append(StratumSums.from_units(data.y[idx], data.z_star[idx], e0[idx], e1[idx]))
    return out


def stratum_centers(assignment: StratumAssignment, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    return np.array([features[assignment.members(i)].mean(axis=0)
                     for i in range(assignment.n_strata)])


def combine_strata(strata: Sequence, centers, spec: Optional[RecallBiasSpec] = None,
                   sizes=None):
    """Merge every degenerate stratum into its nearest neighbour until none is left.

    ``strata`` holds :class:`StratumSums` or :class:`ContingencyTable` objects
    (tables need a constant ``spec``).  ``centers`` gives each stratum's mean
    score or mean covariate vector; a merged stratum's center is the
    size-weighted mean of its parts.  The first degenerate stratum (lowest
    index) is merged at each step, so at most ``I - 1`` merges happen.

    Returns ``(merged, groups)``: the merged summaries and, for each, the list
    of original stratum indices it absorbed.
    """
    items = []
    for s in strata:
        if isinstance(s, ContingencyTable):
            if spec is None:
                raise ValueError("tables need a spec to be checked for degeneracy")
            s = StratumSums.from_table(s, spec)
        items.append(s)
    if not items:
        raise AllDegenerate("no strata")
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    weights = np.array([s.n for s in items], dtype=float) if sizes is None else np.asarray(sizes, float)
    groups = [[i] for i in range(len(items))]
    centers = [c.copy() for c in centers]
    weights = list(weights)
    while True:
        bad = [i for i, s in enumerate(items) if s.degeneracy() is not None]
        if not bad:
            break
        if len(items) == 1:
            raise AllDegenerate(f"pooled data still degenerate: {items[0].degeneracy()}")
        i = bad[0]
        d = [np.inf if j == i else float(np.sum((centers[j] - centers[i]) ** 2))
             for j in range(len(items))]
        j = int(np.argmin(d))
        lo, hi = min(i, j), max(i, j)
        w = weights[lo] + weights[hi]
        center = (centers[lo] * weights[lo] + centers[hi] * weights[hi]) / w if w > 0 else centers[lo]
        items[lo] = items[lo] + items[hi]
        groups[lo] = sorted(groups[lo] + groups[hi])
        centers[lo], weights[lo] = center, w
        del items[hi], groups[hi], centers[hi], weights[hi]
    return items, groups


def aggregate(estimates, sizes, method: str = "strat", spec: RecallBiasSpec = RecallBiasSpec(),
              **diagnostics) -> EstimateResult:
    """Size-weighted average of stratum estimates (weights ``n_i / N``)."""
    est = np.asarray(estimates, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    total = sizes.sum()
    tau = float(np.sum(est * (sizes / total)))
    return EstimateResult(tau, method, spec, None, dict(diagnostics))


def stratified_estimate(data: Dataset, assignment: StratumAssignment, spec: RecallBiasSpec,
                        centers=None) -> EstimateResult:
    """Correct, merge where needed, and aggregate over the given strata."""
    sums = stratum_sums(assignment, data, spec)
    if centers is None:
        centers = np.arange(len(sums), dtype=float)
    merged, groups = combine_strata(sums, centers)
    est = [s.estimate() for s in merged]
    sizes = [s.n for s in merged]
    diag = {"strata": assignment.n_strata, "strata_after_merge": len(merged),
            "merges": assignment.n_strata - len(merged)}
    if assignment.method == "block":
        diag["blocking_converged"] = assignment.diagnostics.get("converged")
    return aggregate(est, sizes, assignment.method, spec, **diag)


# -- balance ----------------------------------------------------------------------

def corrected_masses(table: ContingencyTable, spec: RecallBiasSpec):
    """Bias-corrected (treated, control) unit counts of one stratum."""
    a, b, c, d = (float(v) for v in table.as_tuple())
    e0, e1 = spec.eta0, spec.eta1
    treated = a / (1 - e1) + b / (1 - e0)
    # equals c + d - a e1/(1-e1) - b e0/(1-e0); written this way the masses add to n exactly
    return treated, (a + b + c + d) - treated


def stratum_masses(assignment: StratumAssignment, data: Dataset, spec: RecallBiasSpec):
    """Corrected (treated, control) masses of every stratum as two arrays."""
    t = np.empty(assignment.n_strata)
    c = np.empty(assignment.n_strata)
    for i in range(assignment.n_strata):
        idx = assignment.members(i)
        t[i], c[i] = corrected_masses(ContingencyTable.from_arrays(data.y[idx], data.z_star[idx]), spec)
    return t, c


def _weighted_asmd(x, wt, wc):
    mt = wt @ x / wt.sum()
    mc = wc @ x / wc.sum()
    vt = wt @ (x - mt) ** 2 / wt.sum()
    vc = wc @ (x - mc) ** 2 / wc.sum()
    sd = np.sqrt((vt + vc) / 2)
    diff = np.abs(mt - mc)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), np.where(diff > 0, np.inf, 0.0))


def _mass_asmd(assignment: StratumAssignment, data: Dataset, t, c) -> np.ndarray:
    if np.any(c < 0) or np.any(t < 0):
        i = int(np.flatnonzero((c < 0) | (t < 0))[0])
        raise DegenerateStratum(f"stratum {i} has corrected masses ({t[i]:.3g}, {c[i]:.3g})")
    if t.sum() <= 0 or c.sum() <= 0:
        raise DegenerateStratum("one exposure group has no mass")
    sizes = assignment.sizes().astype(float)
    lab = assignment.labels
    # unit weights T_i/n_i give group means equal to mass-weighted stratum means
    return _weighted_asmd(data.x, (t / sizes)[lab], (c / sizes)[lab])


def balance_diagnostics(assignment: StratumAssignment, data: Dataset,
                        spec: RecallBiasSpec) -> np.ndarray:
    """Per-covariate absolute standardized mean difference under corrected weights.

    Every unit stands in for its stratum's average covariate vector and a
    stratum contributes its corrected treated and control masses to the two
    groups.  Group means are therefore mass-weighted averages of the stratum
    mean vectors.  The pooled SD ``sqrt((var_t + var_c) / 2)`` uses the
    individual covariate values under the same weights, so it measures the
    spread of units rather than of stratum means.  Only defined for
    constant rates.
    """
    if not spec.is_constant:
        raise ConfigError("balance diagnostics assume rates that do not vary with covariates")
    t, c = stratum_masses(assignment, data, spec)
    return _mass_asmd(assignment, data, t, c)


def naive_stratified_asmd(assignment: StratumAssignment, data: Dataset) -> np.ndarray:
    """The same diagnostic with the reported exposure counts as group masses."""
    t = np.bincount(assignment.labels, weights=data.z_star, minlength=assignment.n_strata)
    c = assignment.sizes() - t
    return _mass_asmd(assignment, data, t, c.astype(float))


def raw_asmd(data: Dataset) -> np.ndarray:
    """Unstratified ASMD between reported-exposed and reported-unexposed units."""
    z = data.z_star.astype(float)
    if z.sum() == 0 or z.sum() == len(z):
        raise DegenerateStratum("one reported exposure group is empty")
    return _weighted_asmd(data.x, z, 1 - z)

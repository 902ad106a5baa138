"""One entry point per estimation method, shared by sweeps, bootstrap, simulation and CLI.

Stratifications do not depend on the assumed rates, so :func:`prepare`
builds them once and :func:`estimate_prepared` can then be evaluated at many
rate pairs.  :func:`estimate` is simply the two steps together, which keeps
single-point runs and grid cells bit-for-bit identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .bounds import IntervalBound, normalize_assumption, table_bounds
from .core import Dataset, RecallBiasSpec, NO_BIAS
from .errors import ConfigError
from .estimators import (
    METHODS,
    EstimateResult,
    ModelSpec,
    ate_ml,
    fit_mle,
    naive_ipw,
    naive_or,
)
from .matching import rank_mahalanobis_embedding
from .stratification import (
    StratumAssignment,
    build_blocks,
    combine_strata,
    fit_prognostic,
    fit_propensity_star,
    quantile_strata,
    stratified_estimate,
    stratum_centers,
    stratum_sums,
)

STRATIFIED = ("prop", "prog", "block")


@dataclass(frozen=True)
class MethodConfig:
    """How to run one estimator.

    ``strata_size`` (when set) overrides ``n_strata`` for score strata as
    ``N // strata_size`` and sets the block size.
    """

    method: str = "ml"
    n_strata: int = 10
    block_size: int = 20
    strata_size: Optional[int] = None
    seed: int = 0
    models: ModelSpec = field(default_factory=ModelSpec)
    max_rounds: int = 50
    n_init: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    def with_seed(self, seed) -> "MethodConfig":
        return replace(self, seed=seed)

    def strata_count(self, n: int) -> int:
        return max(2, n // self.strata_size) if self.strata_size else self.n_strata

    def block_k(self) -> int:
        return self.strata_size or self.block_size


@dataclass(frozen=True, eq=False)
class Prepared:
    data: Dataset
    config: MethodConfig
    assignment: Optional[StratumAssignment] = None
    centers: Optional[np.ndarray] = None


def stratify(data: Dataset, config: MethodConfig) -> tuple[StratumAssignment, np.ndarray]:
    """Build the strata for a stratified method plus per-stratum centers for merging."""
    if config.method == "prop":
        scores = fit_propensity_star(data, config.models)
        assignment = quantile_strata(scores, config.strata_count(data.n), "prop")
        return assignment, stratum_centers(assignment, scores)
    if config.method == "prog":
        scores = fit_prognostic(data, config.models)
        assignment = quantile_strata(scores, config.strata_count(data.n), "prog")
        return assignment, stratum_centers(assignment, scores)
    if config.method == "block":
        emb = rank_mahalanobis_embedding(data.x)
        assignment = build_blocks(data, config.block_k(), seed=config.seed,
                                  max_rounds=config.max_rounds, n_init=config.n_init,
                                  dist=cdist(emb, emb))
        return assignment, stratum_centers(assignment, emb)
    raise ConfigError(f"{config.method!r} is not a stratified method")


def prepare(data: Dataset, config: MethodConfig) -> Prepared:
    if config.method in STRATIFIED:
        assignment, centers = stratify(data, config)
        return Prepared(data, config, assignment, centers)
    return Prepared(data, config)


def estimate_prepared(prep: Prepared, spec: RecallBiasSpec = NO_BIAS) -> EstimateResult:
    cfg, data = prep.config, prep.data
    if cfg.method == "ml":
        fit = fit_mle(data, spec, cfg.models)
        return ate_ml(fit, data, spec)
    if cfg.method == "naive_or":
        return naive_or(data, cfg.models)
    if cfg.method == "naive_ipw":
        return naive_ipw(data, cfg.models)
    return stratified_estimate(data, prep.assignment, spec, prep.centers)


def estimate(data: Dataset, spec: RecallBiasSpec = NO_BIAS,
             config: MethodConfig = MethodConfig()) -> EstimateResult:
    return estimate_prepared(prepare(data, config), spec)


def stratified_bound(prep: Prepared, delta: float, assumption: str = "box") -> IntervalBound:
    """Effect bound for a stratified method: per-stratum bounds averaged with ``n_i / N``.

    Strata lacking one reported-exposure arm are merged first, exactly as the
    point estimator does at zero bias, so the bound collapses to that
    estimate at ``delta = 0``.
    """
    assumption = normalize_assumption(assumption)
    sums = stratum_sums(prep.assignment, prep.data, NO_BIAS)
    merged, _ = combine_strata(sums, prep.centers)
    lo = hi = 0.0
    n = sum(s.n for s in merged)
    for s in merged:
        b = table_bounds(s.table(), delta, assumption)
        lo += b.lower * s.n / n
        hi += b.upper * s.n / n
    return IntervalBound(lo, hi, assumption, float(delta))


def region_grid(delta: float, assumption: str, step: float):
    """Rate pairs on a lattice covering the assumed region (corners included)."""
    assumption = normalize_assumption(assumption)
    m = int(np.floor(delta / step + 1e-9))
    axis = np.unique(np.append(np.round(np.arange(m + 1) * step, 12), delta))
    pairs = [(e0, e1) for e0 in axis for e1 in axis
             if assumption == "box" or (assumption == "eta0_le_eta1" and e0 <= e1)
             or (assumption == "eta1_le_eta0" and e1 <= e0)]
    return pairs


def ml_bound(data: Dataset, config: MethodConfig, delta: float, assumption: str = "box",
             step: float = 0.05) -> IntervalBound:
    """Range of the likelihood estimate over a lattice of the assumed rate region."""
    vals = [estimate(data, RecallBiasSpec(e0, e1), config).tau_hat
            for e0, e1 in region_grid(delta, assumption, step)]
    return IntervalBound(min(vals), max(vals), normalize_assumption(assumption), float(delta))


def merged_assignment(prep: Prepared, spec: RecallBiasSpec = NO_BIAS) -> StratumAssignment:
    """The stratification after degenerate strata are merged under ``spec``,
    exactly as the point estimator merges them."""
    sums = stratum_sums(prep.assignment, prep.data, spec)
    _, groups = combine_strata(sums, prep.centers)
    return prep.assignment.relabel(groups)

"""Bootstrap intervals and sensitivity sweeps over the recall-bias rates."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .bounds import delta_grid as default_delta_grid
from .bounds import normalize_assumption, table_bounds
from .core import NO_BIAS, ContingencyTable, Dataset, RecallBiasSpec
from .errors import ConfigError, RecallBiasError, ReplicateFailure
from .estimators import EstimateResult
from .methods import (
    STRATIFIED,
    MethodConfig,
    Prepared,
    estimate,
    estimate_prepared,
    ml_bound,
    prepare,
    stratified_bound,
)
from .parallel import parallel_map

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10
GRID_COLUMNS = ("eta0", "eta1", "estimate", "lower", "upper", "feasible")


# -- bootstrap -------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lower: float
    upper: float
    level: float
    normal_lower: float
    normal_upper: float
    half_width: float
    se: float
    replicates: np.ndarray = field(repr=False, compare=False)
    n_failed: int = 0

    def as_dict(self) -> dict:
        return {
            "point": self.point, "lower": self.lower, "upper": self.upper, "level": self.level,
            "normal_lower": self.normal_lower, "normal_upper": self.normal_upper,
            "half_width": self.half_width, "se": self.se,
            "replicates_ok": int(np.isfinite(self.replicates).sum()), "replicates_failed": self.n_failed,
        }


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    """Stream for bootstrap replicate ``r``; depends only on ``(seed, r)``."""
    return np.random.default_rng([int(seed), int(r)])


def _boot_one(args):
    data, spec, config, seed, r = args
    rng = replicate_rng(seed, r)
    idx = rng.integers(0, data.n, data.n)
    cfg = config.with_seed(int(rng.integers(2 ** 31))) if config.method == "block" else config
    try:
        return estimate(data.take(idx), spec.take(idx), cfg).tau_hat
    except RecallBiasError as exc:
        return type(exc).__name__


def _block_trim(data: Dataset, config: MethodConfig) -> None:
    if config.method == "block" and data.n % config.block_k():
        raise ConfigError(f"N={data.n} is not divisible by block size {config.block_k()}")


def bootstrap_ci(data: Dataset, spec: RecallBiasSpec = NO_BIAS,
                 config: MethodConfig = MethodConfig(), B: int = 1000, level: float = 0.95,
                 seed: int = 0, threads: int = 1, point: Optional[float] = None) -> BootstrapResult:
    """Percentile bootstrap for any estimator, re-running the whole pipeline per replicate.

    Units are resampled with replacement; scores, strata or blocks and merges
    are rebuilt each time under the fixed ``spec``.  Replicates that fail
    are dropped, but more than 10% failures abort with
    :class:`ReplicateFailure`.  A normal-theory interval and its half-width
    are reported alongside.
    """
    if B < 100:
        raise ConfigError("bootstrap needs B >= 100")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    _block_trim(data, config)
    if point is None:
        point = estimate(data, spec, config).tau_hat
    out = parallel_map(_boot_one, [(data, spec, config, seed, r) for r in range(B)], threads)
    failures = [o for o in out if isinstance(o, str)]
    if len(failures) > MAX_FAILURE_RATE * B:
        counts = {k: failures.count(k) for k in sorted(set(failures))}
        raise ReplicateFailure(f"{len(failures)} of {B} bootstrap replicates failed: {counts}")
    reps = np.array([np.nan if isinstance(o, str) else o for o in out], dtype=float)
    ok = reps[np.isfinite(reps)]
    alpha = (1 - level) / 2
    lo, hi = np.quantile(ok, [alpha, 1 - alpha])
    se = float(np.std(ok, ddof=1)) if len(ok) > 1 else 0.0
    half = float(norm.ppf(1 - alpha) * se)
    return BootstrapResult(float(point), float(lo), float(hi), level, float(point) - half,
                           float(point) + half, half, se, reps, len(failures))


# -- sweeps ------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    eta0: float
    eta1: float
    estimate: float
    lower: float
    upper: float
    feasible: bool
    reason: str = ""


@dataclass(frozen=True)
class SweepResult:
    """One record per grid point, in axis order.

    ``kind`` is ``delta`` (bounds; ``eta0 = eta1 = delta`` label the point),
    ``eta`` (equal-rate line) or ``grid`` (full lattice).
    """

    kind: str
    method: str
    records: tuple
    assumption: Optional[str] = None

    @property
    def feasible(self) -> np.ndarray:
        return np.array([r.feasible for r in self.records])

    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.records])

    def matrix(self):
        """Lattice as ``(eta0_axis, eta1_axis, values)`` with rows indexed by eta0."""
        e0 = sorted({r.eta0 for r in self.records})
        e1 = sorted({r.eta1 for r in self.records})
        vals = np.full((len(e0), len(e1)), np.nan)
        for r in self.records:
            vals[e0.index(r.eta0), e1.index(r.eta1)] = r.estimate
        return np.array(e0), np.array(e1), vals

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.kind == "delta":
            w.writerow(["delta", "lower", "upper", "feasible"])
            for r in self.records:
                w.writerow([_num(r.eta0), _num(r.lower), _num(r.upper), _flag(r.feasible)])
        else:
            w.writerow(GRID_COLUMNS)
            for r in self.records:
                w.writerow([_num(r.eta0), _num(r.eta1), _num(r.estimate), _num(r.lower),
                            _num(r.upper), _flag(r.feasible)])
        return buf.getvalue()

    def to_json(self) -> str:
        recs = []
        for r in self.records:
            d = {"eta0": r.eta0, "eta1": r.eta1, "estimate": _json_num(r.estimate),
                 "lower": _json_num(r.lower), "upper": _json_num(r.upper), "feasible": r.feasible}
            if r.reason:
                d["reason"] = r.reason
            recs.append(d)
        body = {"kind": self.kind, "method": self.method, "assumption": self.assumption,
                "records": recs}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _num(v) -> str:
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def _json_num(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _flag(b) -> str:
    return "true" if b else "false"


def _check_axis(values, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ConfigError(f"{name} grid is empty")
    if np.any(np.diff(a) <= 0):
        raise ConfigError(f"{name} grid must be strictly increasing")
    if a[0] < 0 or a[-1] >= 1:
        raise ConfigError(f"{name} grid must lie in [0, 1)")
    return a


def pooled_bound(data: Dataset, delta: float, assumption: str = "box"):
    """Bound on the unstratified 2x2 table of the whole sample."""
    return table_bounds(ContingencyTable.from_arrays(data.y, data.z_star), delta, assumption)


def delta_sweep(data: Dataset, config: MethodConfig = MethodConfig(method="prop"),
                assumption: str = "box", deltas: Optional[Sequence[float]] = None) -> SweepResult:
    """Effect bounds as the common rate cap ``delta`` grows.

    Stratified methods average per-stratum bounds with ``n_i / N`` weights;
    ``ml`` takes the range of the likelihood estimate over a rate lattice.
    The naive methods ignore the rates and have no bound; use
    :func:`pooled_bound` for the unstratified table.  Points where a bound
    denominator vanishes are flagged infeasible.
    """
    if config.method not in STRATIFIED and config.method != "ml":
        raise ConfigError(f"no bound for {config.method}; use one of {', '.join(STRATIFIED)}, ml")
    assumption = normalize_assumption(assumption)
    deltas = _check_axis(default_delta_grid() if deltas is None else deltas, "delta")
    prep = prepare(data, config) if config.method in STRATIFIED else None
    records = []
    for d in deltas:
        d = float(d)
        try:
            if prep is not None:
                b = stratified_bound(prep, d, assumption)
            else:
                b = ml_bound(data, config, d, assumption)
            records.append(SweepRecord(d, d, (b.lower + b.upper) / 2, b.lower, b.upper, True))
        except RecallBiasError as exc:
            nan = float("nan")
            records.append(SweepRecord(d, d, nan, nan, nan, False, type(exc).__name__))
    return SweepResult("delta", config.method, tuple(records), assumption)


def _point(prep: Prepared, e0: float, e1: float) -> SweepRecord:
    try:
        res = estimate_prepared(prep, RecallBiasSpec(e0, e1))
        if not np.isfinite(res.tau_hat):
            return SweepRecord(e0, e1, float("nan"), float("nan"), float("nan"), False, "NonFinite")
        return SweepRecord(e0, e1, res.tau_hat, float("nan"), float("nan"), True)
    except RecallBiasError as exc:
        nan = float("nan")
        return SweepRecord(e0, e1, nan, nan, nan, False, type(exc).__name__)


def _grid_cell(args):
    prep, e0, e1 = args
    return _point(prep, e0, e1)


def _with_ci(rec: SweepRecord, data, config, B, level, seed, threads) -> SweepRecord:
    if not rec.feasible:
        return rec
    try:
        ci = bootstrap_ci(data, RecallBiasSpec(rec.eta0, rec.eta1), config, B, level, seed,
                          threads, point=rec.estimate)
    except ReplicateFailure as exc:
        log.warning("bootstrap at (%g, %g) failed: %s", rec.eta0, rec.eta1, exc)
        return rec
    return SweepRecord(rec.eta0, rec.eta1, rec.estimate, ci.lower, ci.upper, True)


def eta_sweep(data: Dataset, config: MethodConfig = MethodConfig(), etas=None,
              B: int = 0, level: float = 0.95, seed: int = 0, threads: int = 1) -> SweepResult:
    """Point estimates along ``eta0 = eta1``, with bootstrap intervals when ``B > 0``."""
    etas = _check_axis(np.round(np.arange(0, 0.5 + 1e-9, 0.1), 12) if etas is None else etas, "eta")
    prep = prepare(data, config)
    recs = parallel_map(_grid_cell, [(prep, float(e), float(e)) for e in etas], threads)
    if B:
        recs = [_with_ci(r, data, config, B, level, seed, threads) for r in recs]
    return SweepResult("eta", config.method, tuple(recs))


def sensitivity_grid(data: Dataset, config: MethodConfig = MethodConfig(), eta0s=None,
                     eta1s=None, threads: int = 1) -> SweepResult:
    """Estimates over the ``eta0 x eta1`` lattice, long format with eta0 varying slowest.

    Every cell is computed exactly as a single-point run would be; infeasible
    cells are flagged with the failure class, never clipped.
    """
    axis = np.round(np.arange(0, 0.5 + 1e-9, 0.05), 12)
    eta0s = _check_axis(axis if eta0s is None else eta0s, "eta0")
    eta1s = _check_axis(axis if eta1s is None else eta1s, "eta1")
    prep = prepare(data, config)
    cells = [(prep, float(a), float(b)) for a in eta0s for b in eta1s]
    return SweepResult("grid", config.method, tuple(parallel_map(_grid_cell, cells, threads)))


def negative_region(result: SweepResult) -> list:
    """Feasible lattice points whose estimate is below zero."""
    return [(r.eta0, r.eta1) for r in result.records if r.feasible and r.estimate < 0]


def result_with_bootstrap(res: EstimateResult, ci: BootstrapResult) -> EstimateResult:
    return res.with_interval(ci.lower, ci.upper, ci.level, bootstrap=ci.as_dict())

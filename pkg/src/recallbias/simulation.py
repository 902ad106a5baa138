"""Synthetic studies with injected outcome-dependent under-reporting.

Covariates: ``X1, X2 ~ Bernoulli(0.5)`` and ``X3, X4 ~ N(0, 1)``, all
independent.  The true exposure and both potential outcomes follow logistic
models whose linear predictors are built from the feature vector

    (X1, X2, X3, X4, X3*X4, X3**2, X4**2)

A correctly specified ("cor") model puts weight only on the first four
features, which are exactly what the analyst sees; a misspecified ("mis")
model moves the weight of X3 and X4 onto the nonlinear terms, which an
analyst fitting main effects cannot represent.  All coefficients live in
:class:`DGP` so studies can change them without touching code.

Reported exposure ``Z*`` equals ``Z`` except that a truly exposed unit with
outcome ``y`` reports 0 with probability ``eta_y``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .core import Dataset, RecallBiasSpec
from .errors import ConfigError, RecallBiasError
from .io import write_dataset_csv
from .methods import MethodConfig, estimate
from .parallel import parallel_map

log = logging.getLogger(__name__)

SCENARIOS = ("cor_cor", "cor_mis", "mis_cor", "mis_mis")
ESTIMATORS = ("naive_ipw", "naive_or", "ml", "prop", "prog", "block")
FEATURES = ("x1", "x2", "x3", "x4", "x3_x4", "x3_sq", "x4_sq")


@dataclass(frozen=True)
class DGP:
    """Coefficients of the generating models on :data:`FEATURES`."""

    exposure_intercept: float = 0.2
    exposure_cor: tuple = (0.25, -0.25, 0.15, -0.15, 0.0, 0.0, 0.0)
    exposure_mis: tuple = (0.25, -0.25, 0.0, 0.0, 0.25, 0.5, -0.5)
    outcome_intercept: float = 0.0
    treatment_effect: float = 0.5
    outcome_cor: tuple = (0.3, -0.3, 0.2, -0.2, 0.0, 0.0, 0.0)
    outcome_mis: tuple = (0.3, -0.3, 0.0, 0.0, 0.25, 0.5, -0.5)


DEFAULT_DGP = DGP()


def _features(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = x.T
    return np.column_stack([x1, x2, x3, x4, x3 * x4, x3 ** 2, x4 ** 2])


def _split_scenario(scenario: str):
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    exp_arm, out_arm = scenario.split("_")
    return exp_arm, out_arm


def _draw_covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.column_stack([rng.integers(0, 2, n), rng.integers(0, 2, n),
                            rng.standard_normal(n), rng.standard_normal(n)]).astype(float)


def propensity(x: np.ndarray, scenario: str, dgp: DGP = DEFAULT_DGP) -> np.ndarray:
    exp_arm, _ = _split_scenario(scenario)
    coef = np.asarray(dgp.exposure_cor if exp_arm == "cor" else dgp.exposure_mis)
    return expit(dgp.exposure_intercept + _features(x) @ coef)


def outcome_prob(x: np.ndarray, z, scenario: str, dgp: DGP = DEFAULT_DGP) -> np.ndarray:
    _, out_arm = _split_scenario(scenario)
    coef = np.asarray(dgp.outcome_cor if out_arm == "cor" else dgp.outcome_mis)
    return expit(dgp.outcome_intercept + dgp.treatment_effect * np.asarray(z, float)
                 + _features(x) @ coef)


def inject_recall_bias(rng: np.random.Generator, y, z, spec: RecallBiasSpec) -> np.ndarray:
    """Report exposure, dropping a true exposure with probability ``eta_y``."""
    y = np.asarray(y)
    z = np.asarray(z)
    eta0, eta1 = spec.per_unit(len(y))
    eta = np.where(y == 1, eta1, eta0)
    forget = rng.random(len(y)) < eta
    return np.where((z == 1) & ~forget, 1, 0)


def generate_dataset(scenario: str, n: int, spec: RecallBiasSpec, seed=None,
                     dgp: DGP = DEFAULT_DGP) -> Dataset:
    """Simulate one study; the true exposure and both potential outcomes are kept."""
    rng = np.random.default_rng(seed)
    x = _draw_covariates(rng, n)
    z = (rng.random(n) < propensity(x, scenario, dgp)).astype(int)
    y0 = (rng.random(n) < outcome_prob(x, 0, scenario, dgp)).astype(int)
    y1 = (rng.random(n) < outcome_prob(x, 1, scenario, dgp)).astype(int)
    y = np.where(z == 1, y1, y0)
    z_star = inject_recall_bias(rng, y, z, spec)
    return Dataset(x, y, z_star, ("x1", "x2", "x3", "x4"), z=z, y0=y0, y1=y1)


def true_ate(scenario: str, seed: int = 20240101, n: int = 1_000_000,
             dgp: DGP = DEFAULT_DGP) -> float:
    """Monte Carlo population effect, averaging ``m(1, X) - m(0, X)`` over ``n`` draws of X.

    Averaging the conditional effect rather than drawn potential outcomes
    targets the same mean with far less noise.  Cached per argument set.
    """
    return _true_ate_cached(scenario, seed, n, dgp)


@lru_cache(maxsize=64)
def _true_ate_cached(scenario, seed, n, dgp):
    return float(np.mean(true_ate_draws(scenario, seed, n, dgp)))


def true_ate_draws(scenario: str, seed: int, n: int, dgp: DGP = DEFAULT_DGP) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = _draw_covariates(rng, n)
    return outcome_prob(x, 1, scenario, dgp) - outcome_prob(x, 0, scenario, dgp)


# -- study runner --------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "cor_cor"
    n: int = 2000
    spec: RecallBiasSpec = field(default_factory=lambda: RecallBiasSpec(0.1, 0.2))
    replications: int = 100
    seed: int = 1
    strata_size: int = 50
    estimators: tuple = ESTIMATORS
    dgp: DGP = DEFAULT_DGP
    truth_draws: int = 1_000_000

    def __post_init__(self):
        _split_scenario(self.scenario)
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.n < 2 * self.strata_size:
            raise ConfigError("N must be at least twice the strata size")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}")


@dataclass(frozen=True)
class StudyRow:
    scenario: str
    n: int
    eta0: float
    eta1: float
    estimator: str
    abs_bias: float
    rmse: float
    mcse: float
    mean_abs_error: float
    mean_estimate: float
    true_ate: float
    n_ok: int
    n_failed: int


@dataclass(frozen=True)
class StudyReport:
    rows: tuple
    estimates: dict = field(default_factory=dict, compare=False)

    def row(self, estimator: str, scenario: Optional[str] = None) -> StudyRow:
        for r in self.rows:
            if r.estimator == estimator and (scenario is None or r.scenario == scenario):
                return r
        raise KeyError(estimator)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(StudyRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["abs_bias_x100", "rmse_x100"])
        for r in self.rows:
            vals = [getattr(r, k) for k in names]
            w.writerow([_fmt(v) for v in vals] + [_fmt(100 * r.abs_bias), _fmt(100 * r.rmse)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _method_config(name: str, strata_size: int) -> MethodConfig:
    return MethodConfig(method=name, strata_size=strata_size)


def _replicate(args):
    cfg, r = args
    seq = np.random.SeedSequence([cfg.seed, r])
    data_seed, block_seed = seq.spawn(2)
    data = generate_dataset(cfg.scenario, cfg.n, cfg.spec, data_seed, cfg.dgp)
    out = {}
    for name in cfg.estimators:
        mc = _method_config(name, cfg.strata_size)
        if name == "block":
            mc = mc.with_seed(int(block_seed.generate_state(1)[0]))
        try:
            out[name] = estimate(data, cfg.spec, mc).tau_hat
        except RecallBiasError as exc:
            log.info("replicate %d, %s failed: %s", r, name, exc)
            out[name] = float("nan")
    return out


def summarize(scenario, n, spec, estimator, values, truth) -> StudyRow:
    vals = np.asarray(values, dtype=float)
    ok = vals[np.isfinite(vals)]
    k = len(ok)
    if k == 0:
        nan = float("nan")
        return StudyRow(scenario, n, spec.eta0, spec.eta1, estimator, nan, nan, nan, nan, nan,
                        truth, 0, len(vals))
    err = ok - truth
    bias = float(np.mean(err))
    rmse = float(math.sqrt(np.mean(err ** 2)))
    mcse = float(np.std(ok, ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
    return StudyRow(scenario, n, float(spec.eta0), float(spec.eta1), estimator, abs(bias),
                    max(rmse, abs(bias)), mcse, float(np.mean(np.abs(err))), float(np.mean(ok)),
                    truth, k, len(vals) - k)


def run_study(config: ScenarioConfig, threads: int = 1) -> StudyReport:
    """Replicate the scenario and score each estimator against the population effect.

    Adjusted estimators get the true rates; the naive ones ignore them.
    Replicate ``r`` draws from a stream seeded by ``(seed, r)`` so results do
    not depend on scheduling.
    """
    if not config.spec.is_constant:
        raise ConfigError("simulation studies use constant rates")
    truth = true_ate(config.scenario, n=config.truth_draws, dgp=config.dgp)
    results = parallel_map(_replicate, [(config, r) for r in range(config.replications)], threads)
    rows = []
    estimates = {}
    for name in config.estimators:
        vals = [res[name] for res in results]
        estimates[name] = np.array(vals)
        rows.append(summarize(config.scenario, config.n, config.spec, name, vals, truth))
    return StudyReport(tuple(rows), estimates)


def run_studies(configs: Sequence[ScenarioConfig], threads: int = 1) -> StudyReport:
    rows = []
    estimates = {}
    for cfg in configs:
        rep = run_study(cfg, threads)
        rows.extend(rep.rows)
        for k, v in rep.estimates.items():
            estimates[(cfg.scenario, cfg.n, cfg.spec.eta0, cfg.spec.eta1, k)] = v
    return StudyReport(tuple(rows), estimates)


# -- bundled example data -------------------------------------------------------

WLS_SEED = 19931994
WLS_SPEC = RecallBiasSpec(0.2, 0.3)
WLS_COLUMNS = ("female", "father_educ", "mother_educ", "siblings", "farm", "income", "ses")
_WLS_EXPOSURE = (-1.2, -0.2, -0.15, -0.1, 0.12, 0.2, -0.15, -0.2)
_WLS_OUTCOME = (-1.0, 0.5, -0.3, -0.1, -0.1, 0.1, 0.1, -0.15, -0.1)


def _wls_covariates(rng, n):
    female = rng.integers(0, 2, n)
    father = np.clip(np.round(rng.normal(10, 3, n)), 0, 20)
    mother = np.clip(np.round(0.5 * father + rng.normal(5.5, 2, n)), 0, 20)
    sibs = rng.poisson(3, n)
    farm = rng.integers(0, 2, n) * (rng.random(n) < 0.4)
    income = np.round(rng.lognormal(1.5, 0.5, n), 2)
    ses = np.round(0.3 * (father - 10) / 3 + 0.3 * (np.log(income) - 1.5) / 0.5 + rng.normal(0, 1, n), 3)
    return np.column_stack([female, father, mother, sibs, farm, income, ses]).astype(float)


def _wls_standardize(x):
    return (x - np.array([0.5, 10, 10.5, 3, 0.2, 5.0, 0.0])) / np.array([0.5, 3, 2.5, 1.7, 0.4, 2.5, 1.0])


def wls_analogue(n: int = 2000, seed: int = WLS_SEED, spec: RecallBiasSpec = WLS_SPEC):
    """Synthetic stand-in for a retrospective abuse/anger survey: seven covariates,
    a modest positive effect, and under-reporting at ``spec``.

    Returns ``(dataset, truth)`` where ``truth`` records the population and
    sample effects.
    """
    rng = np.random.default_rng(seed)
    x = _wls_covariates(rng, n)
    xs = _wls_standardize(x)
    e = expit(_WLS_EXPOSURE[0] + xs @ np.array(_WLS_EXPOSURE[1:]))
    z = (rng.random(n) < e).astype(int)
    lin = _WLS_OUTCOME[0] + xs @ np.array(_WLS_OUTCOME[2:])
    m0, m1 = expit(lin), expit(lin + _WLS_OUTCOME[1])
    y0 = (rng.random(n) < m0).astype(int)
    y1 = (rng.random(n) < m1).astype(int)
    y = np.where(z == 1, y1, y0)
    z_star = inject_recall_bias(rng, y, z, spec)
    data = Dataset(x, y, z_star, WLS_COLUMNS, z=z, y0=y0, y1=y1)
    big = _wls_standardize(_wls_covariates(np.random.default_rng(seed + 1), 1_000_000))
    lin_big = _WLS_OUTCOME[0] + big @ np.array(_WLS_OUTCOME[2:])
    truth = {
        "seed": seed, "n": n, "eta0": spec.eta0, "eta1": spec.eta1,
        "population_ate": float(np.mean(expit(lin_big + _WLS_OUTCOME[1]) - expit(lin_big))),
        "sample_conditional_ate": float(np.mean(m1 - m0)),
    }
    return data, truth


DATA_DIR = Path(__file__).parent / "data"
WLS_CSV = DATA_DIR / "wls_analogue.csv"
WLS_TRUTH = DATA_DIR / "wls_analogue_truth.json"


def write_wls_analogue(directory=DATA_DIR) -> tuple:
    """Regenerate the bundled CSV and its truth sidecar in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data, truth = wls_analogue()
    csv_path = directory / WLS_CSV.name
    truth_path = directory / WLS_TRUTH.name
    write_dataset_csv(data, csv_path)
    truth_path.write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, truth_path


def load_wls_truth() -> dict:
    return json.loads(WLS_TRUTH.read_text(encoding="utf-8"))

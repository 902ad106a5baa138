"""Average treatment effects when a binary exposure is under-reported
differently by outcome (differential recall bias).

Point identification for known rates, bounds for a rate cap, a
joint-likelihood estimator, three stratification estimators with a
recall-bias correction, bootstrap intervals, sensitivity sweeps and a
simulation harness.
"""
from .bounds import IntervalBound, cell_bounds, prop1_bounds, prop2a_bounds, prop2b_bounds, table_bounds
from .core import (
    NO_BIAS,
    CellProbabilities,
    ContingencyTable,
    Dataset,
    RecallBiasSpec,
    Unit,
    adjust_cells,
    cate_point,
    misclassify_cells,
)
from .estimators import EstimateResult, ModelSpec, ate_ml, fit_mle, naive_ipw, naive_or
from .inference import SweepResult, bootstrap_ci, delta_sweep, eta_sweep, sensitivity_grid
from .io import ingest_csv, write_dataset_csv
from .matching import optimal_assignment
from .methods import MethodConfig, estimate, estimate_prepared, prepare
from .simulation import ScenarioConfig, StudyReport, generate_dataset, run_study, true_ate
from .stratification import StratumAssignment, balance_diagnostics, build_blocks, stratified_estimate

__version__ = "0.1.0"

__all__ = [
    "adjust_cells",
    "ate_ml",
    "balance_diagnostics",
    "bootstrap_ci",
    "build_blocks",
    "cate_point",
    "cell_bounds",
    "CellProbabilities",
    "ContingencyTable",
    "Dataset",
    "delta_sweep",
    "estimate",
    "estimate_prepared",
    "EstimateResult",
    "eta_sweep",
    "fit_mle",
    "generate_dataset",
    "ingest_csv",
    "IntervalBound",
    "MethodConfig",
    "misclassify_cells",
    "ModelSpec",
    "naive_ipw",
    "naive_or",
    "NO_BIAS",
    "optimal_assignment",
    "prepare",
    "prop1_bounds",
    "prop2a_bounds",
    "prop2b_bounds",
    "RecallBiasSpec",
    "run_study",
    "ScenarioConfig",
    "sensitivity_grid",
    "stratified_estimate",
    "StratumAssignment",
    "StudyReport",
    "SweepResult",
    "table_bounds",
    "true_ate",
    "Unit",
    "write_dataset_csv",
]

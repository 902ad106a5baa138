import numpy as np
import pytest

from recallbias.core import NO_BIAS, RecallBiasSpec
from recallbias.errors import ConfigError
from recallbias.io import ingest_csv, write_dataset_csv
from recallbias.methods import MethodConfig, estimate
from recallbias.simulation import (
    DGP,
    SCENARIOS,
    WLS_COLUMNS,
    WLS_CSV,
    ScenarioConfig,
    generate_dataset,
    inject_recall_bias,
    load_wls_truth,
    run_study,
    summarize,
    true_ate,
    wls_analogue,
)


def test_no_bias_reports_truth():
    d = generate_dataset("cor_cor", 3000, NO_BIAS, seed=1)
    np.testing.assert_array_equal(d.z_star, d.z)


def test_injection_rates_match_spec():
    rng = np.random.default_rng(0)
    n = 100_000
    y = rng.integers(0, 2, n)
    z = rng.integers(0, 2, n)
    zs = inject_recall_bias(rng, y, z, RecallBiasSpec(0.1, 0.3))
    for yv, eta in ((0, 0.1), (1, 0.3)):
        exposed = (z == 1) & (y == yv)
        p = np.mean(zs[exposed] == 0)
        se = np.sqrt(eta * (1 - eta) / exposed.sum())
        assert abs(p - eta) < 3 * se
    # under-reporting only: unexposed units never report exposure
    assert not np.any(zs[z == 0])


def test_zero_effect_gives_zero_truth():
    dgp = DGP(treatment_effect=0.0)
    for s in SCENARIOS:
        assert true_ate(s, n=10_000, dgp=dgp) == pytest.approx(0.0, abs=1e-15)


def test_truth_is_stable_across_seeds():
    a = true_ate("mis_mis", seed=1, n=200_000)
    b = true_ate("mis_mis", seed=2, n=200_000)
    assert a == pytest.approx(b, abs=2e-3)
    assert a > 0


def test_generate_is_reproducible():
    a = generate_dataset("mis_cor", 500, RecallBiasSpec(0.1, 0.2), seed=7)
    b = generate_dataset("mis_cor", 500, RecallBiasSpec(0.1, 0.2), seed=7)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.z_star, b.z_star)
    np.testing.assert_array_equal(a.y, np.where(a.z == 1, a.y1, a.y0))


def test_summarize_fields():
    row = summarize("cor_cor", 10, RecallBiasSpec(0.1, 0.2), "ml", [0.1, 0.3, np.nan], 0.1)
    assert row.n_ok == 2 and row.n_failed == 1
    assert row.abs_bias == pytest.approx(0.1)
    assert row.rmse == pytest.approx(np.sqrt(0.02))
    assert row.rmse >= row.abs_bias


def test_run_study_reproducible():
    cfg = ScenarioConfig("cor_cor", n=400, replications=3, seed=5, strata_size=50,
                         estimators=("naive_ipw", "prop", "block"), truth_draws=20_000)
    a = run_study(cfg)
    b = run_study(cfg)
    assert a.to_csv() == b.to_csv()
    for r in a.rows:
        assert r.rmse >= r.abs_bias
        assert r.n_ok + r.n_failed == 3
    assert a.to_csv().splitlines()[0].endswith("abs_bias_x100,rmse_x100")


def test_scenario_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig("cor_xx")
    with pytest.raises(ConfigError):
        ScenarioConfig(replications=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(estimators=("magic",))


def test_bundled_example_matches_generator(tmp_path):
    data, truth = wls_analogue()
    out = tmp_path / "wls.csv"
    write_dataset_csv(data, out)
    assert out.read_bytes() == WLS_CSV.read_bytes()
    assert load_wls_truth() == pytest.approx(truth)


def test_bundled_example_is_recoverable():
    data = ingest_csv(WLS_CSV)
    assert data.covariate_names == WLS_COLUMNS
    truth = load_wls_truth()
    spec = RecallBiasSpec(truth["eta0"], truth["eta1"])
    tau = estimate(data, spec, MethodConfig("prop")).tau_hat
    assert abs(tau - truth["population_ate"]) < 0.1


def test_truth_is_a_probability_difference():
    for s in SCENARIOS:
        assert -1 <= true_ate(s, n=50_000) <= 1


def test_doubling_n_does_not_raise_rmse():
    # 60 replicates give the RMSE a relative sd near 0.1, so allow two of those
    rmse = {}
    for n in (500, 1000):
        cfg = ScenarioConfig("cor_cor", n=n, replications=60, seed=9, estimators=("ml", "prop"),
                             truth_draws=200_000)
        rmse[n] = {r.estimator: r.rmse for r in run_study(cfg).rows}
    for name in ("ml", "prop"):
        assert rmse[1000][name] <= rmse[500][name] * 1.2

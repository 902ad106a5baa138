import itertools

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from recallbias.core import NO_BIAS, ContingencyTable, Dataset, RecallBiasSpec, cate_point
from recallbias.errors import (
    AllDegenerate,
    DegenerateScores,
    InsufficientExposed,
    NonDivisibleN,
)
from recallbias.simulation import generate_dataset, propensity
from recallbias.stratification import (
    StratumAssignment,
    StratumSums,
    aggregate,
    balance_diagnostics,
    build_blocks,
    combine_strata,
    fit_prognostic,
    fit_propensity_star,
    naive_stratified_asmd,
    quantile_strata,
    stratified_estimate,
    stratum_estimate,
    stratum_masses,
    stratum_sums,
    table_estimate,
)
from recallbias.matching import within_block_distance


def test_quantile_strata_examples():
    a = quantile_strata(np.arange(1, 101), 10)
    assert a.sizes().tolist() == [10] * 10
    assert np.all(np.diff(a.labels) >= 0)
    b = quantile_strata(np.random.default_rng(0).random(95), 10)
    assert b.sizes().max() - b.sizes().min() <= 1
    with pytest.raises(DegenerateScores):
        quantile_strata(np.ones(20), 4)


def test_build_blocks_pairs_nearest_points():
    x = np.array([[0.0], [0.1], [10.0], [10.1]])
    for seed in range(10):
        a = build_blocks(x, 2, seed=seed)
        assert a.labels[0] == a.labels[1] and a.labels[2] == a.labels[3]
        assert a.labels[0] != a.labels[2]


def test_build_blocks_single_block_and_sizes(rng):
    x = rng.standard_normal((12, 2))
    assert build_blocks(x, 12).n_strata == 1
    a = build_blocks(x, 4, seed=1)
    assert a.sizes().tolist() == [4, 4, 4]
    with pytest.raises(NonDivisibleN):
        build_blocks(x, 5)


def test_build_blocks_brute_force_small():
    # oracle: all partitions of 6 points into 3 pairs
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.standard_normal((6, 1)) * 3
        d = cdist(x, x)
        best = min(
            within_block_distance(d, np.array(lab))
            for lab in itertools.product(range(3), repeat=6)
            if sorted(lab) == [0, 0, 1, 1, 2, 2]
        )
        got = build_blocks(x, 2, seed=0, n_init=10, dist=d).diagnostics["objective"]
        assert got == pytest.approx(best, abs=1e-12)


def test_blocking_trace_non_increasing(rng):
    for seed in range(10):
        x = rng.standard_normal((60, 3))
        trace = build_blocks(x, 6, seed=seed).diagnostics["trace"]
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_blocking_is_seed_deterministic(small_data):
    a = build_blocks(small_data, 20, seed=3)
    b = build_blocks(small_data, 20, seed=3)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_stratum_estimate_examples():
    t = ContingencyTable(20, 20, 30, 30)
    assert table_estimate(t, NO_BIAS) == pytest.approx(0.0, abs=1e-15)
    assert table_estimate(t, RecallBiasSpec(0.2, 0.2)) == pytest.approx(0.0, abs=1e-15)
    s = StratumSums.from_table(t, RecallBiasSpec(0.2, 0.2))
    t1, t0, u1, u0 = s.corrected()
    assert t1 / (t1 + t0) == pytest.approx(0.5) and u1 / (u1 + u0) == pytest.approx(0.5)


def test_constant_count_form_matches_cell_formula():
    t = ContingencyTable(17, 23, 41, 59)
    for spec in (RecallBiasSpec(0.1, 0.2), RecallBiasSpec(0.3, 0.05)):
        assert table_estimate(t, spec) == pytest.approx(cate_point(t.frequencies(), spec), abs=1e-12)


def test_per_unit_constant_reduces_to_constant(small_data, spec12):
    n = small_data.n
    per = RecallBiasSpec(np.full(n, 0.1), np.full(n, 0.2))
    a = stratum_estimate(small_data.y, small_data.z_star, per)
    b = stratum_estimate(small_data.y, small_data.z_star, spec12)
    assert a == pytest.approx(b, abs=1e-12)


def test_combine_example():
    strata = [ContingencyTable(0, 0, 5, 5), ContingencyTable(10, 10, 5, 5)]
    merged, groups = combine_strata(strata, [0.1, 0.2], NO_BIAS)
    assert len(merged) == 1 and groups == [[0, 1]]
    assert merged[0].table().as_tuple() == (10, 10, 10, 10)


def test_combine_identity_and_chain():
    ok = [ContingencyTable(5, 5, 5, 5), ContingencyTable(3, 4, 6, 7)]
    merged, groups = combine_strata(ok, [0.0, 1.0], NO_BIAS)
    assert groups == [[0], [1]]
    chain = [ContingencyTable(0, 0, 5, 5)] * 4 + [ContingencyTable(4, 4, 4, 4)]
    merged, groups = combine_strata(chain, np.arange(5.0), NO_BIAS)
    assert len(merged) == 1 and groups == [[0, 1, 2, 3, 4]]
    with pytest.raises(AllDegenerate):
        combine_strata([ContingencyTable(0, 0, 5, 5)] * 2, [0.0, 1.0], NO_BIAS)


def test_aggregate_examples():
    assert aggregate([0.1, 0.1, 0.1], [10, 20, 30]).tau_hat == pytest.approx(0.1)
    assert aggregate([0.2, -0.2], [50, 50]).tau_hat == pytest.approx(0.0, abs=1e-15)


def test_single_stratum_equals_pooled_point(sim_data, spec12):
    one = StratumAssignment(np.zeros(sim_data.n, int), "prop", None, 1, {})
    est = stratified_estimate(sim_data, one, spec12, np.zeros(1)).tau_hat
    table = ContingencyTable.from_arrays(sim_data.y, sim_data.z_star)
    assert est == pytest.approx(cate_point(table.frequencies(), spec12), abs=1e-12)


def test_merge_conserves_counts(spec12):
    d = generate_dataset("cor_cor", 200, spec12, seed=0)
    a = quantile_strata(fit_propensity_star(d), 40)
    merged, groups = combine_strata(stratum_sums(a, d, spec12), np.arange(40.0))
    assert len(merged) < 40
    assert sum(s.n for s in merged) == d.n
    assert sorted(i for g in groups for i in g) == list(range(40))
    res = stratified_estimate(d, a, spec12, np.arange(40.0))
    assert res.diagnostics["merges"] == 40 - len(merged)


def test_propensity_star_shrinks_by_rate():
    eta = 0.3
    d = generate_dataset("cor_cor", 100_000, RecallBiasSpec(eta, eta), seed=1)
    e = propensity(d.x, "cor_cor")
    est = fit_propensity_star(d)
    assert np.mean(np.abs(est - (1 - eta) * e)) < 0.01


def test_prognostic_monotone_and_checks(rng):
    n = 2000
    x = rng.standard_normal((n, 1))
    y = (rng.random(n) < 1 / (1 + np.exp(-2 * x[:, 0]))).astype(int)
    zs = (rng.random(n) < 0.5).astype(int)
    d = Dataset(x, y, zs, ("x",))
    score = fit_prognostic(d)
    order = np.argsort(x[:, 0])
    assert np.all(np.diff(score[order]) >= 0)
    with pytest.raises(InsufficientExposed):
        fit_prognostic(Dataset(x, y, np.zeros(n, int), ("x",)))


def test_balance_masses_sum_to_stratum_sizes(sim_data, spec12):
    a = quantile_strata(fit_propensity_star(sim_data), 10)
    t, c = stratum_masses(a, sim_data, spec12)
    np.testing.assert_allclose(t + c, a.sizes(), rtol=0, atol=1e-9)
    np.testing.assert_allclose(balance_diagnostics(a, sim_data, NO_BIAS),
                               naive_stratified_asmd(a, sim_data), atol=1e-12)


def test_balance_zero_for_identical_strata():
    x = np.tile(np.array([[0.0], [1.0]]), (10, 1))
    labels = np.repeat(np.arange(10), 2)
    zs = np.tile([1, 0], 10)
    d = Dataset(x, np.tile([1, 1, 0, 0], 5), zs, ("x",))
    a = StratumAssignment(labels, "block", None, 2, {})
    np.testing.assert_allclose(balance_diagnostics(a, d, RecallBiasSpec(0.1, 0.2)), 0.0, atol=1e-12)

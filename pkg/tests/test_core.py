import numpy as np
import pytest

from recallbias.core import (
    NO_BIAS,
    CellProbabilities,
    ContingencyTable,
    Dataset,
    RecallBiasSpec,
    Unit,
    adjust_cells,
    cate_point,
    cate_surface,
    joint_observed_prob,
    misclassify_cells,
)
from recallbias.errors import DataError, DegenerateMargin, InadmissibleEtas, InvalidProbabilities, NonBinaryValue


def cells(*v):
    return CellProbabilities(*v)


def test_adjust_hand_example():
    out = adjust_cells(cells(0.2, 0.3, 0.2, 0.3), RecallBiasSpec(0.0, 0.5))
    assert out.as_tuple() == pytest.approx((0.4, 0.1, 0.2, 0.3), abs=1e-15)


def test_adjust_identity_without_bias():
    c = cells(0.1, 0.2, 0.3, 0.4)
    assert adjust_cells(c, NO_BIAS).as_tuple() == pytest.approx(c.as_tuple(), abs=0)


def test_adjust_inadmissible():
    with pytest.raises(InadmissibleEtas):
        adjust_cells(cells(0.2, 0.1, 0.2, 0.5), RecallBiasSpec(0.0, 0.5))


def test_misclassify_examples():
    out = misclassify_cells(cells(0.4, 0.1, 0.2, 0.3), RecallBiasSpec(0.0, 0.5))
    assert out.as_tuple() == pytest.approx((0.2, 0.3, 0.2, 0.3), abs=1e-15)
    out = misclassify_cells(cells(0.25, 0.25, 0.25, 0.25), RecallBiasSpec(0.2, 0.2))
    assert out.as_tuple() == pytest.approx((0.2, 0.3, 0.2, 0.3), abs=1e-15)


def test_adjusted_cells_sum_to_one():
    out = adjust_cells(cells(0.15, 0.35, 0.1, 0.4), RecallBiasSpec(0.3, 0.2))
    assert sum(out.as_tuple()) == pytest.approx(1.0, abs=1e-15)


def test_joint_observed_prob_examples():
    assert joint_observed_prob(0.5, 0.5, 0.5, NO_BIAS, 1, 1) == pytest.approx(0.25)
    assert joint_observed_prob(0.5, 0.5, 0.5, RecallBiasSpec(0.0, 0.5), 1, 0) == pytest.approx(0.375)


def test_joint_observed_prob_sums_to_one(rng):
    m0, m1, e = rng.random((3, 50))
    spec = (rng.random(50) * 0.9, rng.random(50) * 0.9)
    total = sum(joint_observed_prob(m0, m1, e, spec, y, z) for y in (0, 1) for z in (0, 1))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)


def test_cate_point_examples():
    assert cate_point(cells(0.25, 0.25, 0.25, 0.25), NO_BIAS) == 0.0
    assert cate_point(cells(0.2, 0.3, 0.2, 0.3), RecallBiasSpec(0.0, 0.5)) == pytest.approx(5 / 12, abs=1e-15)


def test_cate_point_errors():
    with pytest.raises(InadmissibleEtas):
        cate_point(cells(0.2, 0.1, 0.2, 0.5), RecallBiasSpec(0.0, 0.5))
    with pytest.raises(DegenerateMargin):
        cate_point(cells(0.5, 0.0, 0.5, 0.0), NO_BIAS)


def test_cate_surface_matches_point():
    c = cells(0.2, 0.3, 0.2, 0.3)
    e0, e1 = np.meshgrid(np.linspace(0, 0.5, 6), np.linspace(0, 0.5, 6))
    surf = cate_surface(c, e0, e1)
    for a, b, v in zip(e0.ravel(), e1.ravel(), surf.ravel()):
        try:
            assert v == pytest.approx(cate_point(c, RecallBiasSpec(a, b)), abs=1e-14)
        except InadmissibleEtas:
            assert np.isnan(v)


def test_validated_rejects_bad_simplex():
    with pytest.raises(InvalidProbabilities):
        CellProbabilities.validated(0.5, 0.5, 0.5, 0.0)
    with pytest.raises(InvalidProbabilities):
        CellProbabilities.validated(-0.1, 0.5, 0.3, 0.3)


def test_spec_validation_and_modes():
    assert RecallBiasSpec(0.1, 0.2).mode == "constant"
    s = RecallBiasSpec(np.array([0.1, 0.2]), np.array([0.0, 0.3]))
    assert s.mode == "per_unit"
    assert s.take([1]).eta1.tolist() == [0.3]
    for bad in [(1.0, 0.0), (-0.1, 0.0), (0.0, np.nan)]:
        with pytest.raises(ValueError):
            RecallBiasSpec(*bad)
    with pytest.raises(ValueError):
        RecallBiasSpec(np.array([0.1]), 0.2)


def test_dataset_invariants():
    x = np.zeros((3, 1))
    with pytest.raises(NonBinaryValue):
        Dataset(x, [0, 1, 2], [0, 0, 1], ("x",))
    with pytest.raises(DataError):
        # reported exposure without true exposure is over-reporting
        Dataset(x, [0, 1, 1], [0, 0, 1], ("x",), z=[0, 0, 0])
    d = Dataset(x, [0, 1, 1], [0, 0, 1], ("x",))
    assert d.n == 3 and d.d == 1
    with pytest.raises(ValueError):
        d.y[0] = 1


def test_dataset_units_round_trip():
    d = Dataset(np.arange(6.0).reshape(3, 2), [0, 1, 1], [1, 0, 1], ("a", "b"))
    units = list(d.units())
    assert isinstance(units[0], Unit)
    back = Dataset.from_units(units, ("a", "b"))
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.z_star, d.z_star)
    assert d.take([2, 0]).y.tolist() == [1, 0]


def test_table_counts_and_frequencies():
    t = ContingencyTable.from_arrays([1, 0, 1, 0, 1], [1, 1, 0, 0, 1])
    assert t.as_tuple() == (2, 1, 1, 1)
    f = t.frequencies()
    assert f.as_tuple() == (2 / 5, 1 / 5, 1 / 5, 1 / 5)
    assert (t + t).as_tuple() == (4, 2, 2, 2)
    with pytest.raises(DataError):
        ContingencyTable(-1, 0, 0, 0)

import numpy as np
import pytest

from recallbias.bounds import (
    cell_bounds,
    delta_grid,
    max_feasible_delta,
    normalize_assumption,
    prop1_bounds,
    prop2a_bounds,
    prop2b_bounds,
    table_bounds,
)
from recallbias.core import CellProbabilities, ContingencyTable, cate_surface
from recallbias.errors import ConfigError, DegenerateBound

TABLE = CellProbabilities(0.2, 0.3, 0.2, 0.3)


def test_box_bounds_hand_example():
    b = prop1_bounds(TABLE, 0.5)
    assert (b.p1_given_1.lower, b.p1_given_1.upper) == pytest.approx((1 / 3, 2 / 3), abs=1e-15)
    assert (b.p1_given_0.lower, b.p1_given_0.upper) == pytest.approx((0.25, 0.75), abs=1e-15)
    assert (b.ate.lower, b.ate.upper) == pytest.approx((1 / 3 - 0.75, 2 / 3 - 0.25), abs=1e-15)


@pytest.mark.parametrize("fn", [prop1_bounds, prop2a_bounds, prop2b_bounds])
def test_zero_delta_collapses(fn):
    c = CellProbabilities(0.12, 0.33, 0.21, 0.34)
    b = fn(c, 0.0)
    assert b.p1_given_1.lower == pytest.approx(c.p1_given_1, abs=1e-15)
    assert b.p1_given_1.upper == pytest.approx(c.p1_given_1, abs=1e-15)
    assert b.p1_given_0.lower == pytest.approx(c.p1_given_0, abs=1e-15)
    assert b.ate.width == pytest.approx(0.0, abs=1e-15)


def test_ordered_assumptions_pin_one_side():
    c = CellProbabilities(0.12, 0.33, 0.21, 0.34)
    for d in (0.1, 0.3, 0.5):
        assert prop2a_bounds(c, d).p1_given_1.lower == pytest.approx(c.p1_given_1, abs=1e-15)
        assert prop2b_bounds(c, d).p1_given_1.upper == pytest.approx(c.p1_given_1, abs=1e-15)


def test_table_bound_hand_example():
    assert table_bounds(ContingencyTable(20, 20, 30, 30), 0.0).lower == pytest.approx(0.0, abs=1e-15)
    b = table_bounds(ContingencyTable(20, 20, 30, 30), 0.5)
    assert (b.lower, b.upper) == pytest.approx((-5 / 12, 5 / 12), abs=1e-15)


def test_table_bound_matches_frequency_form():
    t = ContingencyTable(13, 27, 31, 49)
    for d in (0.05, 0.2, 0.4):
        a = table_bounds(t, d)
        b = prop1_bounds(t.frequencies(), d).ate
        assert (a.lower, a.upper) == pytest.approx((b.lower, b.upper), abs=1e-12)


def test_box_bounds_match_brute_force_grid():
    # oracle: extremes of the point formula over a fine grid that includes the corners
    rng = np.random.default_rng(3)
    for _ in range(50):
        c = CellProbabilities(*rng.dirichlet([2, 2, 2, 2]))
        d = 0.5 * max_feasible_delta(c)
        axis = np.linspace(0, d, 201)
        e0, e1 = np.meshgrid(axis, axis)
        surf = cate_surface(c, e0, e1)
        if np.isnan(surf).any():
            continue
        b = prop1_bounds(c, d).ate
        assert b.lower == pytest.approx(surf.min(), abs=1e-12)
        assert b.upper == pytest.approx(surf.max(), abs=1e-12)


@pytest.mark.parametrize("assumption", ["box", "a", "b"])
def test_points_inside_bounds(assumption):
    rng = np.random.default_rng(7)
    axis = np.round(np.arange(0, 0.3001, 0.01), 10)
    e0, e1 = np.meshgrid(axis, axis, indexing="ij")
    keep = {"box": np.ones_like(e0, bool), "a": e0 <= e1, "b": e1 <= e0}[assumption]
    for _ in range(40):
        c = CellProbabilities(*rng.dirichlet([3, 3, 3, 3]))
        try:
            b = cell_bounds(c, 0.3, assumption).ate
        except DegenerateBound:
            continue
        vals = cate_surface(c, e0[keep], e1[keep])
        vals = vals[np.isfinite(vals)]
        assert np.all(vals >= b.lower - 1e-12) and np.all(vals <= b.upper + 1e-12)


def test_degenerate_bound_reports_max_delta():
    t = ContingencyTable(10, 0, 5, 5)
    table_bounds(t, 0.49)
    with pytest.raises(DegenerateBound) as err:
        table_bounds(t, 0.5)
    assert err.value.max_delta == pytest.approx(0.5)


def test_no_exposed_units_is_degenerate():
    with pytest.raises(DegenerateBound):
        table_bounds(ContingencyTable(0, 0, 5, 5), 0.1)


def test_assumption_names_and_delta_checks():
    assert normalize_assumption("a") == "eta0_le_eta1"
    assert normalize_assumption("b") == "eta1_le_eta0"
    with pytest.raises(ConfigError):
        normalize_assumption("c")
    with pytest.raises(ConfigError):
        prop1_bounds(TABLE, 1.0)
    np.testing.assert_allclose(delta_grid(0.5, 0.1), [0, 0.1, 0.2, 0.3, 0.4, 0.5])

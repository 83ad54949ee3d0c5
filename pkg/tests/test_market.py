import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidator.errors import LengthMismatch, NonpositiveImpact, ValidationError, WeightsNotSimplex
from liquidator.market import (
    ConstantVol,
    ModelParams,
    SlowOU,
    VenueSet,
    aggregate_impacts,
    check_admissibility,
    execution_price,
    permanent_drift,
    split_equally,
    temporary_cost,
    terminal_liquidation_value,
    validate_venues,
)


def test_single_venue_needs_full_weight():
    v = validate_venues([(1.0, 0.01)], 0.005)
    assert len(v) == 1 and v.betas[0] == 1.0
    with pytest.raises(WeightsNotSimplex):
        validate_venues([(0.9, 0.01)], 0.005)


def test_multi_venue_weights_strictly_inside():
    with pytest.raises(WeightsNotSimplex):
        validate_venues([(1.0, 0.01), (0.0, 0.01)], 0.005)
    with pytest.raises(WeightsNotSimplex):
        validate_venues([(0.5, 0.01), (0.6, 0.01)], 0.005)


def test_weight_sum_tolerance():
    validate_venues([(0.5, 0.01), (0.5 + 5e-13, 0.01)], 0.005)
    with pytest.raises(WeightsNotSimplex):
        validate_venues([(0.5, 0.01), (0.5 + 1e-11, 0.01)], 0.005)


@pytest.mark.parametrize("eta", [0.0, -0.01, math.inf, math.nan])
def test_temporary_impact_must_be_positive(eta):
    with pytest.raises(NonpositiveImpact):
        validate_venues([(1.0, eta)], 0.005)


def test_permanent_impact_nonnegative():
    with pytest.raises(NonpositiveImpact):
        validate_venues([(1.0, 0.01)], -1e-3)


def test_errors_are_value_errors():
    with pytest.raises(ValueError):
        validate_venues([], 0.005)


def test_aggregates_for_identical_venues():
    agg = aggregate_impacts(VenueSet.identical(4, 0.01, 0.005))
    assert agg.a == pytest.approx(400.0)
    assert agg.b == pytest.approx(0.5)
    assert agg.c == pytest.approx(4 * (0.005 * 0.25) ** 2 / 0.04)
    assert abs(agg.discriminant) <= 1e-14


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.05, 1.0), min_size=2, max_size=6),
    st.lists(st.floats(1e-3, 0.1), min_size=6, max_size=6),
    st.floats(0.0, 0.05),
)
def test_discriminant_never_positive(raw_w, etas, eta_per):
    w = np.array(raw_w) / sum(raw_w)
    w[-1] = 1.0 - w[:-1].sum()
    if np.any(w <= 0) or np.any(w >= 1):
        return
    v = validate_venues(list(zip(w, etas)), eta_per)
    agg = aggregate_impacts(v)
    assert agg.discriminant <= 1e-12 * max(agg.b**2, 1e-300)


def test_discriminant_zero_iff_equal_weights():
    # equal weights with unequal temporary impact still give equality
    equal_beta = aggregate_impacts(validate_venues([(0.5, 0.01), (0.5, 0.03)], 0.005))
    assert abs(equal_beta.discriminant) <= 1e-15
    unequal = aggregate_impacts(validate_venues([(0.3, 0.01), (0.7, 0.01)], 0.005))
    assert unequal.discriminant < -1e-6


def test_permanent_drift_and_length_check():
    v = validate_venues([(0.25, 0.01), (0.75, 0.02)], 0.004)
    assert permanent_drift(v, [10.0, 20.0]) == pytest.approx(0.004 * (2.5 + 15.0))
    with pytest.raises(LengthMismatch):
        permanent_drift(v, [1.0])


def test_execution_price_and_terminal_value():
    assert execution_price(15.0, 0.01, 100.0) == pytest.approx(14.0)
    assert terminal_liquidation_value(10.0, 15.0, 0.1) == pytest.approx(140.0)
    assert terminal_liquidation_value(0.0, 15.0, 0.1) == 0.0
    with pytest.raises(ValidationError):
        terminal_liquidation_value(-1.0, 15.0, 0.1)


def test_model_params_validation():
    with pytest.raises(ValidationError):
        ModelParams(0.0, 1.0, 0.1, 0.1, ConstantVol(1.0))
    with pytest.raises(ValidationError):
        ModelParams(1.0, 1.0, -0.1, 0.1, ConstantVol(1.0))
    with pytest.raises(ValidationError):
        ConstantVol(0.0)
    with pytest.raises(ValidationError):
        SlowOU(1.0, 0.01, 2.0, 1.0)
    SlowOU(1.0, 0.0, 0.0, 0.0)  # frozen limit is allowed


def test_admissibility_flags():
    grid = np.linspace(0, 1, 101)
    ok = check_admissibility(np.full(101, 50.0), 100.0, 1.0, grid)
    assert ok.admissible and ok.integral == pytest.approx(50.0)
    neg = check_admissibility(np.where(grid < 0.5, 10.0, -1.0), 100.0, 1.0, grid)
    assert not neg.nonnegative and neg.max_violation == pytest.approx(1.0)
    over = check_admissibility(np.full(101, 150.0), 100.0, 1.0, grid)
    assert not over.consistent and over.max_violation == pytest.approx(50.0)
    with pytest.raises(LengthMismatch):
        check_admissibility(np.ones(5), 1.0, 1.0, grid)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.lists(st.floats(0.0, 500.0), min_size=3, max_size=40))
def test_splitting_divides_temporary_cost(n, schedule):
    grid = np.linspace(0.0, 1.0, len(schedule))
    single = temporary_cost(schedule, [0.01], grid)
    split = temporary_cost(split_equally(schedule, n), [0.01] * n, grid)
    assert abs(split - single / n) <= 1e-12 * max(1.0, single)

import math

import pytest
from hypothesis import given, strategies as st

from coopredict.core import (
    Action,
    GameStructure,
    InteractionHistory,
    PayoffTable,
    delta_from_expected_length,
    expected_length,
    normalize_payoffs,
    reconstruct_unit_payoffs,
    validate_payoffs,
)
from coopredict.errors import (
    DegenerateScale,
    DomainError,
    InfeasibleRatios,
    InvalidLength,
    MixedInequalityViolation,
    OrderingViolation,
)


def test_action_encoding():
    assert int(Action.COOPERATE) == 1 and int(Action.DEFECT) == 0
    assert len(Action) == 2
    assert Action.from_symbol("C") is Action.COOPERATE
    assert Action.DEFECT.symbol == "D"


def test_valid_payoffs():
    t = PayoffTable(R=3, S=0, T=5, P=1)
    assert validate_payoffs(t) == t


def test_ordering_violation():
    with pytest.raises(OrderingViolation):
        validate_payoffs(PayoffTable(R=5, S=0, T=3, P=1))


def test_mixed_inequality_violation():
    with pytest.raises(MixedInequalityViolation):
        validate_payoffs(PayoffTable(R=2.4, S=0, T=5, P=1))


def test_normalize_example():
    r1, r2 = normalize_payoffs(PayoffTable(3, 0, 5, 1))
    assert r1 == pytest.approx(0.4, abs=1e-15)
    assert r2 == pytest.approx(0.6, abs=1e-15)


def test_degenerate_scale_guard():
    with pytest.raises(DegenerateScale):
        normalize_payoffs(PayoffTable(1, 1, 1, 1))


def test_reconstruct_row_one():
    t = reconstruct_unit_payoffs(0.18, 0.59)
    assert (t.R, t.S, t.T) == (0.59, 0.0, 1.0)
    assert t.P == pytest.approx(0.41, abs=1e-15)


@pytest.mark.parametrize("r1,r2", [(0.5, 0.5), (0.2, 0.45), (0.7, 0.6)])
def test_reconstruct_infeasible(r1, r2):
    with pytest.raises(InfeasibleRatios):
        reconstruct_unit_payoffs(r1, r2)


valid_tables = st.tuples(
    st.floats(-50, 50), st.floats(0.01, 20), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99)
).map(
    # S, T-S span, then R and P placed inside (S, T) with R above the midpoint and P below R
    lambda a: (a[0], a[0] + a[1], a[0] + a[1] * (0.5 + 0.5 * a[2]), a[3])
).map(lambda v: PayoffTable(R=v[2], S=v[0], T=v[1], P=v[0] + (v[2] - v[0]) * v[3]))


@given(valid_tables)
def test_normalize_reconstruct_roundtrip(table):
    validate_payoffs(table)
    r1, r2 = normalize_payoffs(table)
    assert 0 < r1 < r2 < 1
    assert r2 > 0.5
    back = normalize_payoffs(reconstruct_unit_payoffs(r1, r2))
    assert back[0] == pytest.approx(r1, abs=1e-12)
    assert back[1] == pytest.approx(r2, abs=1e-12)


@given(st.floats(0.01, 0.98), st.floats(0.0, 1.0))
def test_unit_gauge_is_valid(r1, frac):
    r2 = max(r1, 0.5) + (1 - max(r1, 0.5)) * frac
    if not (r1 < r2 < 1 and r2 > 0.5):
        return
    t = reconstruct_unit_payoffs(r1, r2)
    validate_payoffs(t)
    assert normalize_payoffs(t) == pytest.approx((r1, r2), abs=1e-12)


@pytest.mark.parametrize("length,delta", [(10, 0.9), (2, 0.5), (4, 0.75)])
def test_delta_from_length(length, delta):
    assert delta_from_expected_length(length) == pytest.approx(delta, abs=1e-15)
    assert expected_length(delta) == pytest.approx(length)


@pytest.mark.parametrize("length", [1, 0.5, -3])
def test_invalid_length(length):
    with pytest.raises(InvalidLength):
        delta_from_expected_length(length)


@given(st.floats(1.001, 1e6), st.floats(1.001, 1e6))
def test_delta_monotone(a, b):
    da, db = delta_from_expected_length(a), delta_from_expected_length(b)
    assert 0 < da < 1 and 0 < db < 1
    if a < b:
        assert da <= db


def test_structure_requires_r1_below_r2():
    with pytest.raises(DomainError, match="r1 < r2"):
        GameStructure("x", 0.0, 0.9, True, False, False, 0.6, 0.6)


def test_structure_from_payoffs():
    g = GameStructure.from_payoffs("p", PayoffTable(3, 0, 5, 1), error=0.0, delta=0.9, infinite=True, continuous=False, risk=False)
    assert (g.r1, g.r2) == pytest.approx((0.4, 0.6))


def test_fixture_invariants(structures):
    assert len(structures) == 30
    for g in structures:
        assert g.r1 < g.r2 and g.r2 >= 0.53
        assert g.delta in {0.5, 0.75, 0.875, 0.9}
        assert g.error in {0, 0.0625, 0.125}
        t = g.unit_payoffs
        assert math.isclose(t.R, g.r2) and t.S == 0 and t.T == 1


def test_history_mirror():
    h = InteractionHistory(Action.COOPERATE, Action.DEFECT)
    assert h.mirrored() == InteractionHistory(Action.DEFECT, Action.COOPERATE)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multigood.errors import AllocationError
from multigood.image_duality import (
    GoodsPrices,
    allocate,
    check_image_utility,
    conjugate,
    image_utility,
    infimal_convolution_check,
    inverse_marginal,
    per_good_conjugate,
)
from multigood.utility_fields import LogUtility, PowerUtility, make_additive, make_cobb_douglas

from oracles import simplex_grid_max

prices = st.lists(st.floats(0.1, 10.0), min_size=2, max_size=3)
budget = st.floats(1e-2, 1e2)


def log_field(m):
    return make_additive([LogUtility()] * m)


def power_field(p, m):
    return make_additive([PowerUtility(p)] * m)


# frozen from the simplex grid oracle (tests/oracles.py)
POWER_S14 = (1 / 3, 1 / 6)
POWER_S14_VALUE = -9.0
CD_S11 = (0.5, 0.5)
CD_S11_VALUE = -4.0


def test_log_equal_expenditure():
    S = np.array([1.0, 2.0, 5.0])
    a = allocate(log_field(3), S, 3.0)
    np.testing.assert_allclose(a.c, 1.0 / S, rtol=1e-15)


def test_power_allocation_matches_oracle():
    a = allocate(power_field(-1.0, 2), [1.0, 4.0], 1.0)
    np.testing.assert_allclose(a.c, POWER_S14, rtol=1e-14)
    assert a.value == pytest.approx(POWER_S14_VALUE, rel=1e-14)


def test_cobb_douglas_allocation_matches_oracle():
    a = allocate(make_cobb_douglas(-1.0, -1.0), [1.0, 1.0], 1.0)
    np.testing.assert_allclose(a.c, CD_S11, rtol=1e-14)
    assert a.value == pytest.approx(CD_S11_VALUE, rel=1e-14)


def test_oracle_reproduces_frozen_values():
    c, v, _ = simplex_grid_max(lambda c: np.sum(-1.0 / c), [1.0, 4.0], 1.0)
    np.testing.assert_allclose(c, POWER_S14, rtol=1e-6)
    assert v == pytest.approx(POWER_S14_VALUE, rel=1e-9)


@pytest.mark.parametrize("U", [
    make_additive([LogUtility(), PowerUtility(-2.0)]),
    make_additive([PowerUtility(0.5), PowerUtility(-1.0), LogUtility()]),
    make_cobb_douglas(-0.5, -2.0),
], ids=["log_pow", "mixed3", "cd"])
def test_numeric_agrees_with_fallbacks(U):
    S = np.linspace(1.0, 3.0, U.m)
    a = allocate(U, S, 2.0, method="numeric")
    assert float(S @ a.c) == pytest.approx(2.0, rel=1e-12)
    ratios = U.gradient(0.0, 0, a.c) / S
    assert np.ptp(ratios) / ratios.mean() < 1e-8


def test_analytic_refused_without_closed_form():
    U = make_additive([LogUtility(), PowerUtility(-2.0)])
    with pytest.raises(ValueError):
        allocate(U, [1.0, 1.0], 1.0, method="analytic")


@pytest.mark.parametrize("bad", [([1.0, -1.0], 1.0), ([1.0, 1.0], 0.0), ([1.0], 1.0)])
def test_allocate_rejects_bad_input(bad):
    S, x = bad
    with pytest.raises(ValueError):
        allocate(log_field(2), S, x)


@given(S=prices, x=budget, p=st.floats(-3.0, 0.8).filter(lambda p: abs(p) > 0.05))
@settings(max_examples=40, deadline=None)
def test_power_budget_and_foc(S, x, p):
    S = np.array(S)
    U = power_field(p, S.size)
    for method in ("analytic", "numeric"):
        a = allocate(U, S, x, method=method)
        assert float(S @ a.c) == pytest.approx(x, rel=1e-12)
        r = U.gradient(0.0, 0, a.c) / S
        assert np.ptp(r) / r.mean() < 1e-9


@given(S=st.lists(st.floats(0.2, 5.0), min_size=2, max_size=2), x=budget,
       p1=st.floats(-3.0, -0.2), p2=st.floats(-3.0, -0.2))
@settings(max_examples=30, deadline=None)
def test_cobb_douglas_numeric_vs_analytic(S, x, p1, p2):
    U = make_cobb_douglas(p1, p2)
    a = allocate(U, S, x, method="analytic")
    b = allocate(U, S, x, method="numeric")
    np.testing.assert_allclose(b.c, a.c, rtol=1e-9)


# -- image utility -----------------------------------------------------------


def test_image_power_paths_agree():
    U = power_field(-1.0, 2)
    S = GoodsPrices.constant([1.0, 4.0])
    a = image_utility(U, S).eval(0.0, 0, 1.0)
    n = image_utility(U, S, analytic=False).eval(0.0, 0, 1.0)
    assert a == pytest.approx(-9.0, rel=1e-14)
    assert n == pytest.approx(a, rel=1e-10)


def test_image_cobb_douglas_value():
    # U*(1) from the brute-force allocation at c = (1/2, 1/2)
    Us = image_utility(make_cobb_douglas(-1.0, -1.0), [1.0, 1.0])
    assert float(Us.eval(0.0, 0, 1.0)) == pytest.approx(CD_S11_VALUE, rel=1e-14)
    num = image_utility(make_cobb_douglas(-1.0, -1.0), [1.0, 1.0], analytic=False)
    assert float(num.eval(0.0, 0, 1.0)) == pytest.approx(CD_S11_VALUE, rel=1e-10)


@given(x=budget, S=prices)
@settings(max_examples=30, deadline=None)
def test_image_monotone(x, S):
    Us = image_utility(log_field(len(S)), S)
    assert Us.eval(0.0, 0, 2 * x) > Us.eval(0.0, 0, x)


def test_image_derivative_is_multiplier():
    U = make_additive([LogUtility(), PowerUtility(-0.5)])
    Us = image_utility(U, [2.0, 0.5])
    for x in (0.1, 1.0, 10.0):
        a = allocate(U, [2.0, 0.5], x)
        assert float(Us.derivative(0.0, 0, x)) == pytest.approx(a.multiplier, rel=1e-9)


def test_image_time_dependent_prices():
    prices = GoodsPrices.exponential([1.0, 2.0], [0.1, -0.2])
    Us = image_utility(log_field(2), prices)
    t = np.array([0.0, 1.0])
    S1 = prices(1.0, 0)
    expected = 2 * math.log(1.0 / 2) - np.log(S1).sum()
    assert float(Us.eval(t, 0, 1.0)[1]) == pytest.approx(expected, rel=1e-14)


FAMILIES = {
    "log": log_field(2),
    "power": power_field(-1.0, 2),
    "mixed": make_additive([LogUtility(), PowerUtility(0.5)]),
    "cobb_douglas": make_cobb_douglas(-1.0, -2.0),
}
PRICE_VECTORS = [[1.0, 1.0], [1.0, 4.0], [3.0, 0.2]]


@pytest.mark.parametrize("name", sorted(FAMILIES))
@pytest.mark.parametrize("S", PRICE_VECTORS)
def test_image_checks(name, S):
    rep = check_image_utility(image_utility(FAMILIES[name], S))
    assert rep.all_passed, rep.to_dict()


# -- conjugate ---------------------------------------------------------------


def _grid_sup(f, y):
    xs = np.logspace(-6, 6, 200001)
    return float(np.max(f(xs) - xs * y))


def test_conjugate_log_closed_form():
    V = conjugate(image_utility(log_field(1), [1.0]))
    for y in (0.1, 1.0, 7.0):
        assert float(V.eval(0.0, 0, y)) == pytest.approx(-math.log(y) - 1, abs=1e-14)
        assert float(V.eval(0.0, 0, y)) == pytest.approx(_grid_sup(np.log, y), abs=1e-6)


def test_conjugate_power_closed_form():
    V = conjugate(image_utility(power_field(-1.0, 1), [1.0]))
    for y in (0.1, 1.0, 7.0):
        assert float(V.eval(0.0, 0, y)) == pytest.approx(-2 * math.sqrt(y), rel=1e-14)
        assert float(V.eval(0.0, 0, y)) == pytest.approx(_grid_sup(lambda x: -1 / x, y), rel=1e-6)


@pytest.mark.parametrize("U", list(FAMILIES.values()), ids=list(FAMILIES))
def test_fenchel_identity(U):
    Us = image_utility(U, [1.5, 0.5])
    V = conjugate(Us)
    x = np.logspace(-2, 2, 9)
    y = Us.derivative(0.0, 0, x)
    resid = V.eval(0.0, 0, y) + x * y - Us.eval(0.0, 0, x)
    assert np.max(np.abs(resid) / (np.abs(Us.eval(0.0, 0, x)) + x * y)) < 1e-10


@given(x=budget, y=st.floats(1e-2, 1e2))
@settings(max_examples=40, deadline=None)
def test_fenchel_inequality(x, y):
    Us = image_utility(make_additive([LogUtility(), PowerUtility(-1.0)]), [1.0, 2.0])
    V = conjugate(Us)
    assert V.eval(0.0, 0, y) >= Us.eval(0.0, 0, x) - x * y - 1e-12 * (1 + abs(x * y))


def test_conjugate_curvature_separable_vs_generic():
    U = make_additive([LogUtility(), PowerUtility(-2.0)])
    V = conjugate(image_utility(U, [1.0, 3.0]))
    y = np.array([0.3, 1.0, 4.0])
    h = 1e-4 * y
    fd = (V.derivative(0.0, 0, y + h) - V.derivative(0.0, 0, y - h)) / (2 * h)
    np.testing.assert_allclose(V.second_derivative(0.0, 0, y), fd, rtol=1e-6)


# -- inverse marginal and infimal convolution --------------------------------


def test_inverse_marginal_examples():
    assert float(inverse_marginal(LogUtility(), 4.0)) == pytest.approx(0.25, rel=1e-15)
    assert float(inverse_marginal(PowerUtility(-1.0), 4.0)) == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("u", [LogUtility(), PowerUtility(-1.0), PowerUtility(0.3)], ids=repr)
def test_inverse_marginal_round_trip_six_decades(u):
    z = np.logspace(-3, 3, 61)
    np.testing.assert_allclose(u.derivative(inverse_marginal(u, z)), z, rtol=1e-12)


def test_inverse_marginal_rejects_nonpositive():
    with pytest.raises(ValueError):
        inverse_marginal(LogUtility(), 0.0)


def test_infimal_convolution_examples():
    y = 1.0
    V = conjugate(image_utility(log_field(2), [1.0, 1.0], analytic=False))
    assert float(V.eval(0.0, 0, y)) == pytest.approx(-2.0, rel=1e-12)
    parts = sum(per_good_conjugate(LogUtility(), y) for _ in range(2))
    assert float(parts) == pytest.approx(-2.0, rel=1e-15)
    V = conjugate(image_utility(power_field(-1.0, 2), [1.0, 1.0], analytic=False))
    assert float(V.eval(0.0, 0, y)) == pytest.approx(-4.0, rel=1e-12)
    parts = sum(per_good_conjugate(PowerUtility(-1.0), y) for _ in range(2))
    assert float(parts) == pytest.approx(-4.0, rel=1e-15)


def test_infimal_convolution_grid():
    grid = np.logspace(-3, 3, 100)
    U = make_additive([LogUtility(), PowerUtility(-1.0), PowerUtility(0.5)])
    assert infimal_convolution_check(U, [1.0, 2.0, 0.5], grid) <= 1e-8


def test_infimal_convolution_rejects_non_additive():
    with pytest.raises(ValueError):
        infimal_convolution_check(make_cobb_douglas(-1.0, -1.0), [1.0, 1.0], [1.0])


def test_prices_validation():
    with pytest.raises(ValueError):
        GoodsPrices.constant([1.0, 0.0])
    with pytest.raises(ValueError):
        image_utility(log_field(2), [1.0, 1.0, 1.0])


def test_allocation_error_type():
    assert issubclass(AllocationError, Exception)

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import multigood.closed_form as cf
from multigood.closed_form import (
    KimOmbergParams,
    LogModelParams,
    LogPolicy,
    TehranchiParams,
    image_G_check,
    kim_omberg_solve,
    log_marginal,
    log_perturbations,
    log_policy,
    log_value,
    merton_coefficients,
    tehranchi_policy,
)
from multigood.errors import RiccatiBlowUp
from multigood.image_duality import allocate
from multigood.sim_engine import (
    estimate_budget_identity,
    estimate_policy_value,
    simulate,
)

# -- logarithmic model -------------------------------------------------------


def log_params(b=0.06, **kw):
    base = dict(nu=0.05, T=1.0, b=[b], sigma=[[0.2]], goods_s0=[1.0, 2.0])
    base.update(kw)
    return LogModelParams(**base)


def test_zero_drift_budget_exact():
    P = log_params(b=0.0)
    pol = log_policy(P, 1.0)
    b = simulate(P.model_spec(), P.T, 0.05, 200, 0)
    assert np.all(pol.exponential(b) == 1.0)
    c = pol.c_star(b)
    assert np.all(c == pytest.approx(1.0 * 0.05 / -math.expm1(-0.05)))
    y = log_marginal(P, 1.0)
    est = estimate_budget_identity(pol.consumption, pol.dual, P.prices(), P.clock(), b, 1.0, y)
    assert abs(est.point - 1.0) <= 1e-14 and est.se <= 1e-15


def test_equal_prices_equal_split():
    P = log_params(goods_s0=[1.0, 1.0])
    b = simulate(P.model_spec(), P.T, 0.1, 10, 0)
    c = log_policy(P, 2.0).consumption(b)
    np.testing.assert_array_equal(c[..., 0], c[..., 1])
    np.testing.assert_allclose(c[..., 0], log_policy(P, 2.0).c_star(b) / 2, rtol=1e-15)


def test_gamma_solves_covariance_system():
    P = LogModelParams(nu=0.1, T=1.0, b=[0.05, 0.02], sigma=[[0.2, 0.0], [0.05, 0.3]], goods_s0=[1.0])
    C = P.model_spec().covariance
    np.testing.assert_allclose(C @ P.gamma(), P.b, atol=1e-14)


def test_gamma_unsolvable_raises():
    P = LogModelParams(nu=0.1, T=1.0, b=[0.05, 0.02], sigma=[[0.2], [0.2]], goods_s0=[1.0])
    with pytest.raises(ValueError):
        P.gamma()


def test_log_policy_validation():
    P = log_params()
    with pytest.raises(ValueError):
        LogPolicy(P, -1.0)
    with pytest.raises(ValueError):
        LogPolicy(P, 1.0, scale=1.2)
    with pytest.raises(ValueError):
        LogPolicy(P, 1.0, weights=[0.7, 0.4])


def test_wealth_starts_at_x_ends_at_zero():
    P = log_params()
    b = simulate(P.model_spec(), P.T, 0.1, 5, 0)
    W = log_policy(P, 3.0).wealth(b)
    assert np.all(W[:, 0] == pytest.approx(3.0, rel=1e-15))
    assert np.max(np.abs(W[:, -1])) < 1e-15


def test_log_marginal_is_derivative_of_value():
    P = log_params()
    h = 1e-5
    fd = (log_value(P, 1 + h) - log_value(P, 1 - h)) / (2 * h)
    assert fd == pytest.approx(log_marginal(P, 1.0), rel=1e-8)


def test_log_value_against_mc():
    P = log_params()
    b = simulate(P.model_spec(), P.T, 0.02, 20_000, 5)
    est = estimate_policy_value(log_policy(P, 1.0).consumption, P.utility(), P.clock(), b)
    assert est.consistent(log_value(P, 1.0), n_se=3)


def test_perturbations_are_admissible():
    P = log_params()
    alts = log_perturbations(P, 1.0, 5, np.random.default_rng(0))
    assert len(alts) == 5
    for a in alts:
        assert 0.85 <= a.scale <= 1.0 and a.weights.sum() == pytest.approx(1.0)


def test_perturbed_policy_budget_is_feasible():
    # any perturbation spends at most x in deflated expectation
    P = log_params()
    b = simulate(P.model_spec(), P.T, 0.02, 20_000, 6)
    y = log_marginal(P, 1.0)
    opt = log_policy(P, 1.0)
    for a in log_perturbations(P, 1.0, 3, np.random.default_rng(1)):
        est = estimate_budget_identity(a.consumption, opt.dual, P.prices(), P.clock(), b, 1.0, y)
        assert est.point <= 1.0 + 3 * est.se


# -- Kim-Omberg --------------------------------------------------------------


def ko_params(**kw):
    base = dict(r=0.02, lam=1.5, sig_theta=0.3, theta_bar=0.4, rho=-0.5, theta0=0.1, p=-1.0,
                goods_T=[1.0, 4.0], T=1.0)
    base.update(kw)
    return KimOmbergParams(**base)


def test_ko_split_ratio_two():
    P = ko_params()
    sol = kim_omberg_solve(P)
    c = sol.split(np.array([1.0, 3.0]))
    np.testing.assert_allclose(c[:, 0] / c[:, 1], 2.0, rtol=1e-15)
    assert sol.split_law_error() <= 1e-12
    # the image-side allocation gives the same split
    a = allocate(P.utility(), P.goods_T, 1.0)
    np.testing.assert_allclose(sol.split(np.array([1.0]))[0], a.c, rtol=1e-12)


def test_ko_symmetric_goods():
    P = ko_params(goods_T=[1.0, 1.0, 1.0])
    assert P.A == pytest.approx(3.0)
    c = kim_omberg_solve(P).split(np.array([3.0]))[0]
    np.testing.assert_allclose(c, 1.0, rtol=1e-15)


def test_ko_constant_price_of_risk_reduction():
    P = ko_params(sig_theta=0.0, theta0=0.4)
    sol = kim_omberg_solve(P)
    t = np.linspace(0.0, 1.0, 11)
    # hand solution at theta = theta_bar: exponent log B + p (r + theta^2 / (2 (1 - p))) (T - t)
    merton = math.log(P.B) + P.p * (P.r + 0.4**2 / (2 * (1 - P.p))) * (P.T - t)
    np.testing.assert_allclose(sol.f(t, 0.4), merton, atol=1e-8)
    np.testing.assert_allclose(sol.fraction(t, 0.4), 0.4 / (P.sigma * (1 - P.p)), rtol=1e-12)
    a, b, c = sol.coefficients(t)
    ma, mb, mc = merton_coefficients(P, t)
    assert max(np.max(np.abs(a - ma)), np.max(np.abs(b - mb)), np.max(np.abs(c - mc))) <= 1e-8


def test_ko_hjb_residual_grid():
    sol = kim_omberg_solve(ko_params())
    ts = np.linspace(0.0, 1.0, 20)
    ths = np.linspace(-1.0, 1.0, 20)
    assert sol.hjb_grid_max(ts, ths, [0.1, 0.5, 1.0, 2.0, 10.0]) <= 1e-5


def test_ko_marginal_matches_value():
    sol = kim_omberg_solve(ko_params())
    h = 1e-5
    fd = (sol.u(1 + h) - sol.u(1 - h)) / (2 * h)
    assert fd == pytest.approx(sol.u_prime(1.0), rel=1e-8)


def test_ko_expected_power_against_mc():
    P = ko_params()
    sol = kim_omberg_solve(P)
    b = simulate(P.model_spec(), P.T, 0.01, 20_000, 7)
    v = sol.c_star_T(b, 1.0) ** P.p
    assert abs(v.mean() - sol.expected_cp) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_ko_budget_mc():
    P = ko_params()
    sol = kim_omberg_solve(P)
    b = simulate(P.model_spec(), P.T, 0.01, 20_000, 8)
    y = sol.u_prime(1.0)
    from multigood.image_duality import GoodsPrices
    est = estimate_budget_identity(lambda bb: sol.consumption(bb, 1.0), sol.dual,
                                   GoodsPrices.constant(P.goods_T), P.clock(), b, 1.0, y)
    assert est.consistent(1.0, n_se=3)


def test_ko_blow_up_reported(monkeypatch):
    monkeypatch.setattr(cf, "BLOWUP", 1e-6)
    with pytest.raises(RiccatiBlowUp):
        kim_omberg_solve(ko_params())


@pytest.mark.parametrize("kw", [dict(p=0.5), dict(rho=1.0), dict(lam=0.0), dict(goods_T=[1.0, 0.0])])
def test_ko_validation(kw):
    with pytest.raises(ValueError):
        ko_params(**kw)


# -- Cobb-Douglas model ------------------------------------------------------


def te_params(**kw):
    base = dict(p1=-1.0, p2=-1.0, rho=0.5, mu=0.07, sigma=0.2, r=0.02, goods_T=[1.0, 1.5], T=1.0)
    base.update(kw)
    return TehranchiParams(**base)


def test_te_symmetric_split():
    pol = tehranchi_policy(te_params(goods_T=[1.0, 1.0]))
    c = pol.split(np.array([2.0, 5.0]))
    np.testing.assert_allclose(c, [[1.0, 1.0], [2.5, 2.5]], rtol=1e-15)


def test_te_pathwise_foc():
    P = te_params()
    pol = tehranchi_policy(P)
    b = simulate(P.model_spec(), P.T, 0.02, 10_000, 3)
    goods, image = pol.pathwise_foc(b, 1.0)
    assert goods <= 1e-10 and image <= 1e-10


def test_te_lognormal_moments():
    P = te_params()
    pol = tehranchi_policy(P)
    b = simulate(P.model_spec(), P.T, 0.02, 10_000, 3)
    mc = pol.sample_moments(b, 1.0)
    cf_m = pol.lognormal_moments(1.0)
    assert abs(mc["mean"][0] - cf_m["mean"]) <= 3 * mc["mean"][1]
    assert abs(mc["log_mean"][0] - cf_m["log_mean"]) <= 3 * mc["log_mean"][1]
    assert mc["log_var"] == pytest.approx(cf_m["log_var"], rel=0.05)


def test_te_deflator_prices_stock_and_bond():
    P = te_params()
    pol = tehranchi_policy(P)
    b = simulate(P.model_spec(), P.T, 0.05, 50_000, 4)
    y = pol.u_prime(1.0)
    D = pol.dual_T(b, y) / y
    for v, target in ((D * b.processes["S"][:, -1, 0], P.s0), (D * math.exp(P.r * P.T), 1.0)):
        assert abs(v.mean() - target) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


class _ScaledLoading(TehranchiParams):
    @property
    def K(self):
        return self.p * self.lam / (1 - self.p)


def test_te_scaled_loading_misprices_stock():
    # the alternative loading p lam / (1 - p) does not give a deflator
    P = _ScaledLoading(**dataclasses.asdict(te_params()))
    pol = tehranchi_policy(P)
    b = simulate(P.model_spec(), P.T, 0.05, 50_000, 4)
    D = pol.dual_T(b, 1.0)
    v = D * b.processes["S"][:, -1, 0]
    assert abs(v.mean() - P.s0) > 10 * v.std(ddof=1) / math.sqrt(v.size)


def test_te_image_constant():
    assert image_G_check(te_params(), np.logspace(-2, 2, 9)) <= 1e-10
    assert image_G_check(te_params(p1=-0.5, p2=-2.0, goods_T=[2.0, 0.3]), [0.1, 1.0, 10.0]) <= 1e-10


def test_te_marginal_matches_value():
    pol = tehranchi_policy(te_params())
    h = 1e-5
    assert (pol.u(1 + h) - pol.u(1 - h)) / (2 * h) == pytest.approx(pol.u_prime(1.0), rel=1e-8)


def test_te_stochastic_rate_needs_beta():
    with pytest.raises(ValueError):
        te_params(stochastic_rate=True)


def test_te_beta_zero_matches_constant():
    P0 = te_params()
    P1 = te_params(stochastic_rate=True, beta=lambda b: np.zeros((b.n_paths, b.times.size - 1)))
    b = simulate(P0.model_spec(), P0.T, 0.1, 100, 0)
    np.testing.assert_allclose(tehranchi_policy(P1).log_c1(b), tehranchi_policy(P0).log_c1(b), rtol=1e-14)


@given(p1=st.floats(-3.0, -0.2), p2=st.floats(-3.0, -0.2), rho=st.floats(-0.9, 0.9).filter(lambda r: abs(r) > 0.05))
@settings(max_examples=20)
def test_te_split_spends_total(p1, p2, rho):
    P = te_params(p1=p1, p2=p2, rho=rho)
    c = tehranchi_policy(P).split(np.array([1.7]))
    assert float(c[0] @ P.goods_T) == pytest.approx(1.7, rel=1e-14)

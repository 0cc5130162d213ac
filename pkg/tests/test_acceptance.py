"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a one-line verdict; ``conftest.py`` prints them in the
terminal summary and ``python3 tests/test_acceptance.py`` prints them
directly.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from multigood.closed_form import (
    KimOmbergParams,
    LogModelParams,
    TehranchiParams,
    kim_omberg_solve,
    log_marginal,
    log_perturbations,
    log_policy,
    merton_coefficients,
    tehranchi_policy,
)
from multigood.finite_market import FiniteMarket, check_nupbr, random_market, verify_theorem1
from multigood.image_duality import allocate, check_image_utility, image_utility, infimal_convolution_check
from multigood.sim_engine import estimate_budget_identity, estimate_policy_advantage, simulate
from multigood.utility_fields import LogUtility, PowerUtility, make_additive, make_cobb_douglas

from oracles import simplex_grid_max

ROOT = Path(__file__).resolve().parents[1]
VERDICTS = {}


def record(n, ok, detail):
    VERDICTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, VERDICTS[n]


# -- 1 -------------------------------------------------------------------------

THEOREM_INSTANCES = [
    # (seed, periods, branching, d, m, utility)
    (11, 2, 3, 1, 2, make_additive([LogUtility(), LogUtility()])),
    (12, 3, 3, 1, 2, make_additive([PowerUtility(-1.0), PowerUtility(0.5)])),
    (13, 2, 4, 2, 3, make_additive([LogUtility(), PowerUtility(-2.0), PowerUtility(0.3)])),
    (14, 1, 4, 1, 3, make_additive([PowerUtility(-0.5)] * 3)),
    (15, 2, 4, 1, 2, make_additive([LogUtility(), PowerUtility(-1.0)])),
    (16, 3, 3, 1, 2, make_cobb_douglas(-1.0, -2.0)),
]
THEOREM_KEYS = ("conjugacy", "budget_binding", "foc_goods", "foc_image",
                "uniqueness_value", "uniqueness_optimizer")


def test_criterion_1_theorem_suite():
    start = time.perf_counter()
    worst = {k: 0.0 for k in THEOREM_KEYS}
    failures = []
    for seed, periods, branching, d, m, U in THEOREM_INSTANCES:
        mk = random_market(np.random.default_rng(seed), periods=periods, branching=branching, d=d, m=m,
                           charge_intermediate=True)
        rep = verify_theorem1(mk, U, 1.0, n_restarts=5, seed=seed, tol=1e-6)
        for k in THEOREM_KEYS:
            worst[k] = max(worst[k], rep.diagnostics[k].residual)
        if not rep.passed:
            failures.append((seed, sorted(rep.failures())))
    elapsed = time.perf_counter() - start
    ok = not failures and all(v <= 1e-6 for v in worst.values()) and elapsed <= 60
    detail = (f"{len(THEOREM_INSTANCES)} markets, worst "
              + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")
    if failures:
        detail += f", failed {failures}"
    record(1, ok, detail)


# -- 2 -------------------------------------------------------------------------

FAMILIES = {
    "additive_log": make_additive([LogUtility(), LogUtility()]),
    "additive_power": make_additive([PowerUtility(-1.0), PowerUtility(-1.0)]),
    "cobb_douglas": make_cobb_douglas(-1.0, -2.0),
}
PRICE_VECTORS = ([1.0, 1.0], [1.0, 4.0], [3.0, 0.2])


def test_criterion_2_image_utility_checks():
    start = time.perf_counter()
    failed, worst_path = [], 0.0
    xs = np.logspace(-2, 2, 17)
    for name, U in FAMILIES.items():
        for S in PRICE_VECTORS:
            rep = check_image_utility(image_utility(U, S))
            if not rep.all_passed:
                failed.append((name, S, rep.failed()))
            a = image_utility(U, S).eval(0.0, 0, xs)
            n = image_utility(U, S, analytic=False).eval(0.0, 0, xs)
            worst_path = max(worst_path, float(np.max(np.abs(n - a) / np.abs(a))))
    elapsed = time.perf_counter() - start
    ok = not failed and worst_path <= 1e-10 and elapsed <= 10
    record(2, ok, f"{len(FAMILIES)} families x {len(PRICE_VECTORS)} prices, "
                  f"numeric vs analytic {worst_path:.1e}, {elapsed:.1f}s" + (f", failed {failed}" if failed else ""))


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_infimal_convolution():
    grid = np.logspace(-3, 3, 100)
    cases = [
        (make_additive([LogUtility(), LogUtility()]), [1.0, 1.0]),
        (make_additive([PowerUtility(-1.0), PowerUtility(-1.0)]), [1.0, 4.0]),
        (make_additive([LogUtility(), PowerUtility(-2.0), PowerUtility(0.5)]), [0.5, 2.0, 3.0]),
    ]
    worst = max(infimal_convolution_check(U, S, grid) for U, S in cases)
    record(3, worst <= 1e-8, f"{len(cases)} additive fields on 100-point grid, max rel dev {worst:.1e}")


# -- 4 -------------------------------------------------------------------------


def _random_instance(rng):
    kind = rng.integers(4)
    if kind == 3:
        U = make_cobb_douglas(-rng.uniform(0.2, 3.0), -rng.uniform(0.2, 3.0))
    else:
        m = int(rng.integers(2, 4))
        comps = []
        for _ in range(m):
            if kind == 0 or (kind == 2 and rng.random() < 0.5):
                comps.append(LogUtility())
            else:
                comps.append(PowerUtility(float(rng.choice([-3.0, -1.0, -0.5, 0.3, 0.6]))))
        U = make_additive(comps)
    S = np.exp(rng.normal(0.0, 0.7, U.m))
    x = float(np.exp(rng.normal(0.0, 1.0)))
    return U, S, x


def test_criterion_4_brute_force_allocation():
    rng = np.random.default_rng(2024)
    worst_cell, worst_val = 0.0, 0.0
    for _ in range(20):
        U, S, x = _random_instance(rng)
        a = allocate(U, S, x)
        c_grid, v_grid, cell = simplex_grid_max(lambda c: U.eval(0.0, 0, c), S, x, n=40, levels=3)
        shares_a = S * a.c / x
        shares_g = S * c_grid / x
        worst_cell = max(worst_cell, float(np.max(np.abs(shares_a - shares_g))) / cell)
        worst_val = max(worst_val, abs(a.value - v_grid) / abs(v_grid))
        # the optimiser can never lose to the grid
        assert a.value >= v_grid - 1e-12 * abs(v_grid)
    ok = worst_cell <= 1.0 and worst_val <= 1e-6
    record(4, ok, f"20 instances, worst share gap {worst_cell:.2f} cells, worst value rel {worst_val:.1e}")


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_log_model():
    start = time.perf_counter()
    x = 1.0
    # zero drift: exact identity path by path
    P0 = LogModelParams(nu=0.05, T=1.0, b=[0.0], sigma=[[0.2]], goods_s0=[1.0, 2.0])
    pol0 = log_policy(P0, x)
    b0 = simulate(P0.model_spec(), P0.T, 0.01, 1000, 0)
    est0 = estimate_budget_identity(pol0.consumption, pol0.dual, P0.prices(), P0.clock(), b0, x,
                                    log_marginal(P0, x))
    dev0 = abs(est0.point - x)

    P = LogModelParams(nu=0.05, T=1.0, b=[0.06], sigma=[[0.2]], goods_s0=[1.0, 2.0])
    pol = log_policy(P, x)
    paths = simulate(P.model_spec(), P.T, 0.01, 100_000, 1)
    y = log_marginal(P, x)
    est = estimate_budget_identity(pol.consumption, pol.dual, P.prices(), P.clock(), paths, x, y)
    budget_ok = abs(est.point - x) <= max(3 * est.se, 1e-12 * x)
    worst_z = math.inf
    for alt in log_perturbations(P, x, 20, np.random.default_rng(5)):
        adv = estimate_policy_advantage(pol.consumption, alt.consumption, P.utility(), P.clock(), paths)
        worst_z = min(worst_z, adv.point / adv.se if adv.se > 0 else math.copysign(math.inf, adv.point))
    elapsed = time.perf_counter() - start
    ok = dev0 <= 1e-12 * x and budget_ok and worst_z >= -2.0 and elapsed <= 120
    record(5, ok, f"b=0 deviation {dev0:.1e}; b=0.06 budget {est.point:.6f} (SE {est.se:.1e}); "
                  f"worst perturbation advantage {worst_z:.1f} SE; {elapsed:.1f}s")


# -- 6 -------------------------------------------------------------------------


def test_criterion_6_kim_omberg():
    P = KimOmbergParams(r=0.02, lam=1.5, sig_theta=0.3, theta_bar=0.4, rho=-0.5, theta0=0.1, p=-1.0,
                        goods_T=[1.0, 4.0], T=1.0)
    sol = kim_omberg_solve(P)
    ts = np.linspace(0.0, P.T, 20)
    hjb = sol.hjb_grid_max(ts, np.linspace(-1.0, 1.0, 20), [0.1, 0.5, 1.0, 2.0, 10.0])
    Pm = KimOmbergParams(r=0.02, lam=1.5, sig_theta=0.0, theta_bar=0.4, rho=-0.5, theta0=0.4, p=-1.0,
                         goods_T=[1.0, 4.0], T=1.0)
    sm = kim_omberg_solve(Pm)
    merton = float(np.max(np.abs(np.array(sm.coefficients(ts)) - np.array(merton_coefficients(Pm, ts)))))
    split = sol.split_law_error()
    ok = hjb <= 1e-5 and merton <= 1e-8 and split <= 1e-12
    record(6, ok, f"HJB {hjb:.1e} on 20x20x5, constant-risk-price reduction {merton:.1e}, split law {split:.1e}")


# -- 7 -------------------------------------------------------------------------


def test_criterion_7_cobb_douglas_model():
    P = TehranchiParams(p1=-1.0, p2=-1.0, rho=0.5, mu=0.07, sigma=0.2, r=0.02, goods_T=[1.0, 1.5], T=1.0)
    pol = tehranchi_policy(P)
    paths = simulate(P.model_spec(), P.T, 0.02, 10_000, 3)
    foc_goods, foc_image = pol.pathwise_foc(paths, 1.0)
    mc = pol.sample_moments(paths, 1.0)
    cfm = pol.lognormal_moments(1.0)
    z_mean = abs(mc["mean"][0] - cfm["mean"]) / mc["mean"][1]
    z_log = abs(mc["log_mean"][0] - cfm["log_mean"]) / mc["log_mean"][1]
    ok = max(foc_goods, foc_image) <= 1e-10 and z_mean <= 3 and z_log <= 3
    record(7, ok, f"pathwise FOC {max(foc_goods, foc_image):.1e} on 1e4 paths, "
                  f"mean off by {z_mean:.2f} SE, log-mean off by {z_log:.2f} SE")


# -- 8 -------------------------------------------------------------------------


def _one_period(S1):
    tree = [{"id": "0", "parent": None, "s_tilde": [1.0], "goods": [1.0], "dkappa": 0.0}]
    tree += [{"id": str(k + 1), "parent": "0", "prob": 1 / len(S1), "s_tilde": [s], "goods": [1.0],
              "dkappa": 1.0} for k, s in enumerate(S1)]
    return FiniteMarket.from_dict({"times": [0.0, 1.0], "tree": tree})


def test_criterion_8_nupbr():
    dominated = check_nupbr(_one_period([1.0, 1.1, 1.3]))
    feasible = check_nupbr(_one_period([0.5, 1.0, 2.0]))
    ok = (not dominated.holds) and feasible.holds and bool(np.all(feasible.witness > 0))
    record(8, ok, f"dominated asset holds={dominated.holds}; trinomial holds={feasible.holds}, "
                  f"min witness {float(np.min(feasible.witness)) if feasible.holds else float('nan'):.3f}")


# -- 9 -------------------------------------------------------------------------


def test_criterion_9_cli_determinism(tmp_path):
    cfg = json.loads((ROOT / "configs" / "model_tehranchi.json").read_text())
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        r = subprocess.run([sys.executable, "-m", "multigood", "run", str(path), "--seed", "17", "--out", str(out)],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append((out / "report.json").read_bytes())
    same = outs[0] == outs[1]
    record(9, same, f"two runs with seed 17: report.json {'bitwise identical' if same else 'differs'}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)

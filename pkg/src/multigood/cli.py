"""Batch front end: ``python -m multigood run|validate <config.json>``.

Exit codes: 0 success, 2 schema or invariant error, 3 solver failure,
4 a checked relation failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .closed_form import (
    KimOmbergParams,
    LogModelParams,
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
from .errors import ConfigError, SolverError
from .finite_market import (
    FiniteMarket,
    check_nupbr,
    marginal_utility,
    solve_dual,
    solve_primal,
    value_function_table,
    verify_theorem1,
)
from .image_duality import GoodsPrices, allocate
from .sim_engine import (
    TreeClock,
    estimate_budget_identity,
    estimate_duality_gap,
    estimate_policy_advantage,
    estimate_policy_value,
    finite_market_bundle,
    simulate,
)
from .utility_fields import utility_from_dict

SCHEMA_VERSION = 1
EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4

# ---------------------------------------------------------------------------
# schema

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_posvec = {"type": "array", "items": _pos, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

_utility = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "family": {"const": "additive"},
                "components": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "oneOf": [
                            {"type": "object", "properties": {"type": {"const": "log"}},
                             "required": ["type"], "additionalProperties": False},
                            {"type": "object",
                             "properties": {"type": {"const": "power"}, "p": {"type": "number", "exclusiveMaximum": 1}},
                             "required": ["type", "p"], "additionalProperties": False},
                        ]
                    },
                },
            },
            "required": ["family", "components"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "family": {"const": "cobb_douglas"},
                "p1": {"type": "number", "exclusiveMaximum": 0},
                "p2": {"type": "number", "exclusiveMaximum": 0},
            },
            "required": ["family", "p1", "p2"],
            "additionalProperties": False,
        },
    ]
}

_node = {
    "type": "object",
    "properties": {
        "id": {"type": ["string", "integer"]},
        "parent": {"type": ["string", "integer", "null"]},
        "prob": _num,
        "s_tilde": {"oneOf": [_num, _vec]},
        "goods": {"oneOf": [_num, _vec]},
        "dkappa": _num,
    },
    "required": ["id", "parent", "s_tilde", "goods", "dkappa"],
    "additionalProperties": False,
}

_market = {
    "type": "object",
    "properties": {"times": _vec, "tree": {"type": "array", "items": _node, "minItems": 1}},
    "required": ["times", "tree"],
    "additionalProperties": False,
}

_mc = {
    "type": "object",
    "properties": {
        "paths": {"type": "integer", "minimum": 2},
        "step": _pos,
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

_output = {
    "type": "object",
    "properties": {"dir": {"type": "string"}},
    "additionalProperties": False,
}


def _kind(name, props, required):
    base = {
        "kind": {"const": name},
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "output": _output,
    }
    base.update(props)
    return {
        "if": {"properties": {"kind": {"const": name}}, "required": ["kind"]},
        "then": {"properties": base, "required": ["kind"] + required, "additionalProperties": False},
    }


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "multigood experiment config",
    "type": "object",
    "properties": {
        "kind": {"enum": ["allocate", "oracle", "model_log", "model_ko", "model_tehranchi", "mc_verify"]},
    },
    "required": ["kind"],
    "allOf": [
        _kind("allocate", {
            "utility": _utility, "prices": _posvec, "budgets": _vec,
            "method": {"enum": ["auto", "analytic", "numeric"]},
        }, ["utility", "prices", "budgets"]),
        _kind("oracle", {
            "utility": _utility, "market": _market, "x": _num, "x_grid": _vec,
            "restarts": {"type": "integer", "minimum": 1},
        }, ["utility", "market", "x"]),
        _kind("mc_verify", {
            "utility": _utility, "market": _market, "x": _num,
        }, ["utility", "market", "x"]),
        _kind("model_log", {
            "model": {
                "type": "object",
                "properties": {
                    "nu": _pos, "T": _pos, "b": _vec, "sigma": _mat, "corr": _mat,
                    "goods_s0": _posvec, "goods_growth": _vec, "s0": _posvec,
                },
                "required": ["nu", "T", "b", "sigma", "goods_s0"],
                "additionalProperties": False,
            },
            "x": _num, "mc": _mc, "perturbations": {"type": "integer", "minimum": 0},
        }, ["model", "x"]),
        _kind("model_ko", {
            "model": {
                "type": "object",
                "properties": {
                    "r": _num, "lam": _pos, "sig_theta": _num, "theta_bar": _pos, "rho": _num,
                    "theta0": _num, "p": _num, "goods_T": _posvec, "T": _pos, "sigma": _pos, "s0": _pos,
                },
                "required": ["r", "lam", "sig_theta", "theta_bar", "rho", "theta0", "p", "goods_T", "T"],
                "additionalProperties": False,
            },
            "x": _num, "mc": _mc,
            "hjb_grid": {
                "type": "object",
                "properties": {
                    "n_t": {"type": "integer", "minimum": 2},
                    "n_theta": {"type": "integer", "minimum": 2},
                    "theta_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                    "x": _posvec,
                },
                "additionalProperties": False,
            },
            "riccati_points": {"type": "integer", "minimum": 2},
        }, ["model", "x"]),
        _kind("model_tehranchi", {
            "model": {
                "type": "object",
                "properties": {
                    "p1": _num, "p2": _num, "rho": _num, "mu": _num, "sigma": _pos, "r": _num,
                    "goods_T": _posvec, "T": _pos, "s0": _pos,
                },
                "required": ["p1", "p2", "rho", "mu", "sigma", "r", "goods_T", "T"],
                "additionalProperties": False,
            },
            "x": _num, "mc": _mc,
        }, ["model", "x"]),
    ],
}

DEFAULTS = {
    "allocate": {"method": "auto"},
    "oracle": {"restarts": 5},
    "mc_verify": {},
    "model_log": {"mc": {"paths": 100000, "step": 0.01}, "perturbations": 20},
    "model_ko": {"mc": {"paths": 20000, "step": 0.004},
                 "hjb_grid": {"n_t": 20, "n_theta": 20, "theta_range": [-1.0, 1.0], "x": [0.1, 0.5, 1.0, 2.0, 10.0]},
                 "riccati_points": 101},
    "model_tehranchi": {"mc": {"paths": 10000, "step": 0.02}},
}

TOL = {
    "theorem": 1e-6,
    "hjb": 1e-5,
    "split": 1e-12,
    "foc_path": 1e-10,
    "merton": 1e-8,
    "exhaustive": 1e-10,
    "n_se": 3.0,
    "n_se_perturb": 2.0,
}


# ---------------------------------------------------------------------------
# helpers


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    elif err.validator == "additionalProperties" and "'" in err.message:
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


def schema_errors(config) -> list:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path))):
        # descend into the most specific failure of conditional blocks
        leaves = [err]
        while leaves and leaves[0].context:
            leaves = sorted(leaves[0].context, key=lambda e: -len(e.absolute_path))
        e = leaves[0] if leaves else err
        out.append({"path": _path(e), "message": e.message})
    return out


def resolve(config: dict) -> dict:
    """Config with defaults filled in (the echo stored in the report)."""
    out = copy.deepcopy(config)
    out.setdefault("schema_version", SCHEMA_VERSION)
    out.setdefault("seed", 0)
    for key, val in DEFAULTS.get(config.get("kind"), {}).items():
        if isinstance(val, dict):
            merged = copy.deepcopy(val)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, val)
    return out


def invariant_errors(cfg: dict) -> list:
    """Semantic checks beyond the schema; no solver is run."""
    out = []
    kind = cfg["kind"]
    if kind == "allocate":
        for i, x in enumerate(cfg["budgets"]):
            if not x > 0:
                out.append({"path": f"budgets.{i}", "message": f"budget must be positive, got {x}"})
    if "x" in cfg and not cfg["x"] > 0:
        out.append({"path": "x", "message": f"initial capital must be positive, got {cfg['x']}"})
    for i, x in enumerate(cfg.get("x_grid", [])):
        if not x > 0:
            out.append({"path": f"x_grid.{i}", "message": f"capital must be positive, got {x}"})
    m_util = None
    if "utility" in cfg:
        try:
            U = utility_from_dict(cfg["utility"])
            m_util = U.m
        except ValueError as exc:
            out.append({"path": "utility", "message": str(exc)})
    if kind == "allocate" and m_util is not None and len(cfg["prices"]) != m_util:
        out.append({"path": "prices", "message": f"{len(cfg['prices'])} prices for {m_util} goods"})
    if "market" in cfg:
        try:
            mk = FiniteMarket.from_dict(cfg["market"])
        except (ValueError, KeyError) as exc:
            out.append({"path": "market", "message": str(exc)})
        else:
            out.extend({"path": "market." + d["path"], "message": d["message"]} for d in mk.validate())
            if m_util is not None and mk.m != m_util:
                out.append({"path": "market.tree", "message": f"market has {mk.m} goods, utility has {m_util}"})
    try:
        _params(cfg)
    except ValueError as exc:
        out.append({"path": "model", "message": str(exc)})
    return out


def _params(cfg):
    kind = cfg["kind"]
    m = cfg.get("model")
    if kind == "model_log":
        P = LogModelParams(**m)
        P.model_spec()
        P.gamma()
        return P
    if kind == "model_ko":
        return KimOmbergParams(**m)
    if kind == "model_tehranchi":
        return TehranchiParams(**m)
    return None


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])


def _check(name, residual, tol, **extra):
    return {"name": name, "residual": float(residual), "tolerance": float(tol),
            "passed": bool(residual <= tol), **extra}


# ---------------------------------------------------------------------------
# pipelines; each returns (results, diagnostics, tables)


def _run_allocate(cfg, seed):
    U = utility_from_dict(cfg["utility"])
    S = np.asarray(cfg["prices"], dtype=float)
    rows, results = [], []
    for x in cfg["budgets"]:
        a = allocate(U, S, x, method=cfg["method"])
        rows.append([float(x)] + [float(v) for v in a.c] + [float(a.value), float(a.multiplier)])
        results.append({"x": x, "c": a.c, "value": a.value, "multiplier": a.multiplier, "method": a.method})
    diags = []
    for r in results:
        spend = float(np.dot(S, r["c"]))
        diags.append(_check(f"budget x={r['x']!r}", abs(spend - r["x"]) / r["x"], 1e-12))
    header = ["x"] + [f"c_{i + 1}" for i in range(U.m)] + ["value", "multiplier"]
    return {"allocations": results}, diags, {"allocation.csv": (header, rows)}


def _run_oracle(cfg, seed):
    U = utility_from_dict(cfg["utility"])
    mk = FiniteMarket.from_dict(cfg["market"]).check()
    nup = check_nupbr(mk)
    results = {"nupbr": {"holds": nup.holds, "margin": nup.margin,
                         "witness": None if nup.witness is None else dict(zip(map(str, mk.ids), nup.witness))}}
    if not nup.holds:
        results["nupbr"]["arbitrage_node"] = None if nup.arbitrage_node is None else mk.ids[nup.arbitrage_node]
        return results, [_check("nupbr", 1.0, 0.0)], {}
    rep = verify_theorem1(mk, U, cfg["x"], n_restarts=cfg["restarts"], seed=seed)
    results["theorem"] = rep.to_dict()
    diags = [_check(k, d.residual, d.tolerance, node=d.node) for k, d in rep.diagnostics.items()]
    xs = cfg.get("x_grid") or [cfg["x"] * f for f in (0.25, 0.5, 1.0, 2.0, 4.0)]
    table = value_function_table(mk, U, xs)
    return results, diags, {"value_function.csv": (["x", "u", "u_prime", "y", "v"], table)}


def _run_mc_verify(cfg, seed):
    """Embed a tree as weighted exhaustive paths and run the Monte Carlo
    estimators on it; with no sampling noise they must match the solver."""
    U = utility_from_dict(cfg["utility"])
    mk = FiniteMarket.from_dict(cfg["market"]).check()
    x = cfg["x"]
    primal = solve_primal(mk, U, x)
    y = marginal_utility(mk, U, x)
    dual = solve_dual(mk, U, y)
    paths = finite_market_bundle(mk)
    clock = TreeClock.of(mk)
    policy = lambda b: primal.c[b.state()]
    dual_fn = lambda b, yy: (yy / y) * dual.Y[b.state()]
    prices = mk.prices()
    budget = estimate_budget_identity(policy, dual_fn, prices, clock, paths, x, y)
    gap = estimate_duality_gap(policy, dual_fn, U, prices, clock, paths, x, y)
    value = estimate_policy_value(policy, U, clock, paths)
    scale = max(abs(primal.value), x * y)
    results = {"y": y, "u_solver": primal.value, "v_solver": dual.value,
               "budget": budget.to_dict(), "gap": gap.to_dict(), "value": value.to_dict()}
    diags = [
        _check("budget_binding", abs(budget.point - x) / x, TOL["exhaustive"]),
        _check("duality_gap", abs(gap.gap.point) / scale, TOL["theorem"]),
        _check("value_matches_solver", abs(value.point - primal.value) / scale, TOL["exhaustive"]),
    ]
    return results, diags, {}


def _mc(cfg, seed):
    mc = cfg["mc"]
    return mc["paths"], mc["step"], mc.get("seed", seed)


def _run_model_log(cfg, seed):
    P = LogModelParams(**cfg["model"])
    x = cfg["x"]
    n, h, s = _mc(cfg, seed)
    pol = log_policy(P, x)
    U, clock, prices = P.utility(), P.clock(), P.prices()
    y = log_marginal(P, x)
    paths = simulate(P.model_spec(), P.T, h, n, s)
    budget = estimate_budget_identity(pol.consumption, pol.dual, prices, clock, paths, x, y)
    value = estimate_policy_value(pol.consumption, U, clock, paths)
    gap = estimate_duality_gap(pol.consumption, pol.dual, U, prices, clock, paths, x, y)
    gap_off = estimate_duality_gap(pol.consumption, pol.dual, U, prices, clock, paths, x, 1.5 * y)
    rng = np.random.default_rng(np.random.SeedSequence([s, 1]))
    rows, worst = [], math.inf
    for i, alt in enumerate(log_perturbations(P, x, cfg["perturbations"], rng)):
        adv = estimate_policy_advantage(pol.consumption, alt.consumption, U, clock, paths)
        z = adv.point / adv.se if adv.se > 0 else (math.inf if adv.point >= 0 else -math.inf)
        worst = min(worst, z)
        rows.append([i, float(alt.scale)] + [float(v) for v in alt.gamma_shift]
                    + [float(v) for v in alt.weights] + [adv.point, adv.se])
    u_closed = log_value(P, x)
    results = {
        "gamma": P.gamma(), "y": y, "u_closed_form": u_closed,
        "budget": budget.to_dict(), "value": value.to_dict(),
        "gap": gap.to_dict(), "gap_at_1.5y": gap_off.to_dict(),
        "worst_perturbation_z": worst,
    }
    diags = [
        _check("budget_binding_se", abs(budget.point - x), max(TOL["n_se"] * budget.se, 1e-12 * x)),
        _check("value_vs_closed_form_se", abs(value.point - u_closed), TOL["n_se"] * value.se),
        _check("gap_at_optimum_se", abs(gap.gap.point), max(TOL["n_se"] * gap.gap.se, 1e-12 * x * y)),
        _check("gap_positive_off_optimum", 0.0 if gap_off.gap.point > 2 * gap_off.gap.se else 1.0, 0.0),
        _check("no_perturbation_beats", max(0.0, -TOL["n_se_perturb"] - worst), 0.0),
    ]
    header = (["i", "scale"] + [f"gamma_shift_{j + 1}" for j in range(P.d)]
              + [f"weight_{j + 1}" for j in range(P.m)] + ["advantage", "se"])
    return results, diags, {"perturbations.csv": (header, rows)}


def _run_model_ko(cfg, seed):
    P = KimOmbergParams(**cfg["model"])
    x = cfg["x"]
    sol = kim_omberg_solve(P)
    g = cfg["hjb_grid"]
    ts = np.linspace(0.0, P.T, g["n_t"])
    ths = np.linspace(g["theta_range"][0], g["theta_range"][1], g["n_theta"])
    hjb = sol.hjb_grid_max(ts, ths, g["x"])
    results = {
        "q": P.q, "A": P.A, "B": P.B, "u": sol.u(x), "u_prime": sol.u_prime(x),
        "fraction_t0": float(sol.fraction(0.0, P.theta0)), "terminal_split": sol.split(np.array([x]))[0],
        "hjb_max_residual": hjb, "expected_cp": sol.expected_cp,
    }
    diags = [_check("hjb_residual", hjb, TOL["hjb"]), _check("split_law", sol.split_law_error(x), TOL["split"])]
    if P.sig_theta == 0:
        err = float(np.max(np.abs(np.array(sol.coefficients(ts)) - np.array(merton_coefficients(P, ts)))))
        diags.append(_check("merton_reduction", err, TOL["merton"]))
    n, h, s = _mc(cfg, seed)
    if n:
        paths = simulate(P.model_spec(), P.T, h, n, s)
        y = sol.u_prime(x)
        budget = estimate_budget_identity(lambda b: sol.consumption(b, x), sol.dual,
                                          GoodsPrices.constant(P.goods_T), P.clock(), paths, x, y)
        results["budget"] = budget.to_dict()
        diags.append(_check("budget_binding_se", abs(budget.point - x), TOL["n_se"] * budget.se))
    return results, diags, {"riccati.csv": (["t", "A", "B", "C"], sol.table(cfg["riccati_points"]).tolist())}


def _run_model_tehranchi(cfg, seed):
    P = TehranchiParams(**cfg["model"])
    x = cfg["x"]
    pol = tehranchi_policy(P)
    n, h, s = _mc(cfg, seed)
    paths = simulate(P.model_spec(), P.T, h, n, s)
    foc_goods, foc_image = pol.pathwise_foc(paths, x)
    mc = pol.sample_moments(paths, x)
    cf = pol.lognormal_moments(x)
    results = {
        "p": P.p, "delta": P.delta, "lambda": P.lam, "K": P.K, "G": P.G,
        "mean": {"mc": mc["mean"][0], "se": mc["mean"][1], "closed_form": cf["mean"]},
        "log_mean": {"mc": mc["log_mean"][0], "se": mc["log_mean"][1], "closed_form": cf["log_mean"]},
        "log_var": {"mc": mc["log_var"], "closed_form": cf["log_var"]},
        "u": pol.u(x), "u_prime": pol.u_prime(x),
    }
    diags = [
        _check("foc_goods_pathwise", foc_goods, TOL["foc_path"]),
        _check("foc_image_pathwise", foc_image, TOL["foc_path"]),
        _check("mean_se", abs(mc["mean"][0] - cf["mean"]), TOL["n_se"] * mc["mean"][1]),
        _check("log_mean_se", abs(mc["log_mean"][0] - cf["log_mean"]), TOL["n_se"] * mc["log_mean"][1]),
        _check("image_utility_G", image_G_check(P, np.logspace(-2, 2, 9)), 1e-10),
    ]
    return results, diags, {}


PIPELINES = {
    "allocate": _run_allocate,
    "oracle": _run_oracle,
    "mc_verify": _run_mc_verify,
    "model_log": _run_model_log,
    "model_ko": _run_model_ko,
    "model_tehranchi": _run_model_tehranchi,
}


# ---------------------------------------------------------------------------
# commands


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def validate_config(config) -> list:
    """Schema diagnostics, then semantic invariants if the schema passes."""
    errs = schema_errors(config)
    if errs:
        return errs
    return invariant_errors(resolve(config))


def run_config(config: dict, out_dir=None, seed=None) -> tuple:
    """Execute a config; returns ``(report, exit_code)`` and writes files."""
    errs = validate_config(config)
    if errs:
        raise ConfigError(errs)
    cfg = resolve(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    out = Path(out_dir or cfg.get("output", {}).get("dir") or f"out/{cfg['kind']}")
    results, diags, tables = PIPELINES[cfg["kind"]](cfg, cfg["seed"])
    passed = all(d["passed"] for d in diags)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg["kind"],
        "seed": cfg["seed"],
        "config": cfg,
        "results": results,
        "diagnostics": diags,
        "passed": passed,
        "tables": sorted(tables),
        "versions": {"multigood": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    report = _clean(report)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, (header, rows) in tables.items():
        _write_csv(out / name, header, rows)
    return report, (EXIT_OK if passed else EXIT_ASSERT)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="multigood", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_val = sub.add_parser("validate", help="check a config without running solvers")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except json.JSONDecodeError as exc:
        print(json.dumps([{"path": "<file>", "message": f"invalid JSON: {exc}"}], indent=2))
        return EXIT_SCHEMA

    if args.command == "validate":
        errs = validate_config(config)
        print(json.dumps(errs, indent=2))
        return EXIT_SCHEMA if errs else EXIT_OK

    try:
        report, code = run_config(config, args.out, args.seed)
    except ConfigError as exc:
        print(json.dumps(exc.diagnostics, indent=2), file=sys.stderr)
        return EXIT_SCHEMA
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    failed = [d["name"] for d in report["diagnostics"] if not d["passed"]]
    status = "PASS" if not failed else "FAIL: " + ", ".join(failed)
    print(f"{report['kind']}: {status}")
    return code


if __name__ == "__main__":
    sys.exit(main())

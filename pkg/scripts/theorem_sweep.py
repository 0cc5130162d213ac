"""Duality residuals over random tree markets.

Writes one CSV row per market with the largest residual of each relation,
so that the distribution of solver accuracy can be plotted.

    python3 scripts/theorem_sweep.py --n 20 --out out/theorem_sweep.csv
"""

import argparse
import csv
import time
import warnings
from pathlib import Path

import numpy as np

from scipy.linalg import LinAlgWarning

from multigood.finite_market import random_market, verify_theorem1
from multigood.utility_fields import LogUtility, PowerUtility, make_additive, make_cobb_douglas

KEYS = ["conjugacy", "budget_binding", "foc_goods", "foc_image", "uniqueness_value",
        "uniqueness_optimizer", "two_stage_value"]


def draw_utility(rng, m):
    if m == 2 and rng.random() < 0.25:
        return "cobb_douglas", make_cobb_douglas(-rng.uniform(0.3, 2.5), -rng.uniform(0.3, 2.5))
    comps, names = [], []
    for _ in range(m):
        if rng.random() < 0.4:
            comps.append(LogUtility())
            names.append("log")
        else:
            p = float(rng.choice([-2.0, -1.0, -0.5, 0.3, 0.6]))
            comps.append(PowerUtility(p))
            names.append(f"pow{p:g}")
    return "+".join(names), make_additive(comps)


warnings.filterwarnings("ignore", category=LinAlgWarning)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/theorem_sweep.csv")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["market", "periods", "branching", "m", "utility", *KEYS, "passed", "seconds"])
        for i in range(args.n):
            periods = int(rng.integers(1, 4))
            branching = int(rng.integers(3, 5))
            m = int(rng.integers(2, 4))
            name, U = draw_utility(rng, m)
            mk = random_market(rng, periods=periods, branching=branching, d=1, m=U.m)
            start = time.perf_counter()
            rep = verify_theorem1(mk, U, 1.0, n_restarts=3, seed=i)
            secs = time.perf_counter() - start
            row = [i, periods, branching, U.m, name] + [format(rep.diagnostics[k].residual, ".3e") for k in KEYS]
            w.writerow(row + [rep.passed, f"{secs:.2f}"])
            print(f"market {i:3d}  {name:24s} passed={rep.passed}  {secs:5.1f}s")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()

"""Run every config in a directory and print one status line per run.

    python3 scripts/run_configs.py configs --out out
"""

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

from scipy.linalg import LinAlgWarning

from multigood.cli import run_config
from multigood.errors import ConfigError, SolverError


warnings.filterwarnings("ignore", category=LinAlgWarning)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config_dir", nargs="?", default="configs")
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    worst = 0
    for path in sorted(Path(args.config_dir).glob("*.json")):
        start = time.perf_counter()
        try:
            report, code = run_config(json.loads(path.read_text()), Path(args.out) / path.stem, args.seed)
            failed = [d["name"] for d in report["diagnostics"] if not d["passed"]]
            status = "PASS" if not failed else "FAIL " + ",".join(failed)
        except ConfigError as exc:
            code, status = 2, f"CONFIG {exc}"
        except SolverError as exc:
            code, status = 3, f"SOLVER {exc}"
        worst = max(worst, code)
        print(f"{path.stem:28s} {status:40s} {time.perf_counter() - start:7.1f}s")
    return worst


if __name__ == "__main__":
    sys.exit(main())

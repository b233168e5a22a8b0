"""Run the sphere and bean convergence studies and write one CSV per case.

    python scripts/convergence_studies.py [--out results] [--only laplace,cfie]
"""

import argparse
import logging
import math
from pathlib import Path

from curvebem.harness import StudyConfig, run_study

CASES = {
    "laplace": [
        dict(equation="laplace", formulation="sl", m=m, order=o) for m, o in [(0, 1), (0, 2), (1, 3)]
    ],
    "helmholtz-sl": [
        dict(equation="helmholtz", formulation="sl", m=m, order=o) for m, o in [(0, 1), (1, 1), (0, 2)]
    ],
    "cfie": [
        dict(equation="helmholtz", formulation="cfie", m=m, order=o) for m, o in [(0, 1), (1, 2)]
    ],
    "interpolated": [
        dict(equation="helmholtz", formulation="cfie", m=3, order=1, normal="interpolated")
    ],
    "bean": [
        dict(geometry="bean", equation="helmholtz", formulation="cfie", m=1, order=2, reference="self")
    ],
}


def name(kw):
    parts = [kw.get("geometry", "sphere"), kw["equation"], kw["formulation"], f"m{kw['m']}", f"l{kw['order']}"]
    if kw.get("normal") == "interpolated":
        parts.append("interp")
    return "_".join(parts)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", default=",".join(CASES))
    ap.add_argument("--levels", default="1..4")
    ap.add_argument("--k", type=float, default=math.pi)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    lo, hi = (int(v) for v in args.levels.split(".."))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for group in args.only.split(","):
        for kw in CASES[group]:
            if kw["equation"] == "helmholtz":
                kw = dict(kw, k=args.k)
            report = run_study(StudyConfig(levels=(lo, hi), **kw))
            path = out / f"{name(kw)}.csv"
            report.write_csv(path)
            rate = report.final_eoc
            print(f"{path}: final EOC {'-' if rate is None else f'{rate:.3f}'}")


if __name__ == "__main__":
    main()

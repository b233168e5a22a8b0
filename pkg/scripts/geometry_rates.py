"""Geometric error suprema and their orders on sphere or bean meshes.

    python scripts/geometry_rates.py [--geometry bean] [--out results/geometry.csv]
"""

import argparse
from pathlib import Path

from curvebem.harness import geometry_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--geometry", choices=("sphere", "bean"), default="sphere")
    ap.add_argument("--orders", default="1,2,3,4")
    ap.add_argument("--levels", default="1,2,3,4")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    text = geometry_study(
        args.geometry,
        [int(v) for v in args.orders.split(",")],
        [int(v) for v in args.levels.split(",")],
    )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()

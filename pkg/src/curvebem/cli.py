"""Command line entry point: ``curvebem {study,geom-study,export-mesh}``."""

import argparse
import logging
import sys

from .geometry import build_curved_mesh, make_surface
from .harness import ConfigError, StudyConfig, geometry_study, run_study
from .operators import QuadratureConfig

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


def _levels(text):
    a, sep, b = text.partition("..")
    try:
        return (int(a), int(b)) if sep else (int(a), int(a))
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like 1..4, got {text!r}") from None


def _point(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}") from None


def _orders(text):
    lo, hi = _levels(text)
    return list(range(lo, hi + 1))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="curvebem", description="Curved-mesh Galerkin BEM convergence studies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("study", help="convergence study of one formulation")
    s.add_argument("--geometry", choices=("sphere", "bean"), default="sphere")
    s.add_argument("--equation", choices=("laplace", "helmholtz"), default="laplace")
    s.add_argument("--formulation", choices=("sl", "dl", "cfie"), default="sl")
    s.add_argument("--k", type=float, default=None)
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--m", type=int, choices=range(4), default=0)
    s.add_argument("--order", type=int, choices=range(1, 5), default=1)
    s.add_argument("--normal", choices=("element", "interpolated"), default="element")
    s.add_argument("--levels", type=_levels, default=(1, 4))
    s.add_argument("--eval-point", type=_point, default=None)
    s.add_argument("--reference", choices=("analytic", "self"), default="analytic")
    s.add_argument("--harmonic", choices=("x1", "x1x2", "r2_harmonic"), default="x1")
    s.add_argument("--no-dense-check", action="store_true", help="skip the LU comparison solve")
    s.add_argument("--quad-extra", type=int, default=0, help="raise every quadrature order")
    s.add_argument("--out", required=True)

    g = sub.add_parser("geom-study", help="geometric error suprema and rates")
    g.add_argument("--geometry", choices=("sphere", "bean"), default="sphere")
    g.add_argument("--order", type=_orders, default=[1, 2, 3, 4], help="order or range, e.g. 1..4")
    g.add_argument("--levels", type=_levels, default=(1, 4))
    g.add_argument("--out", required=True)

    e = sub.add_parser("export-mesh", help="write a curved mesh as JSON")
    e.add_argument("--geometry", choices=("sphere", "bean"), default="sphere")
    e.add_argument("--order", type=int, choices=range(1, 5), default=1)
    e.add_argument("--level", type=int, default=1)
    e.add_argument("--out", required=True)
    return p


def _study(args):
    config = StudyConfig(
        geometry=args.geometry,
        equation=args.equation,
        formulation=args.formulation,
        k=args.k,
        eta=args.eta,
        m=args.m,
        order=args.order,
        normal=args.normal,
        levels=args.levels,
        eval_point=args.eval_point,
        reference=args.reference,
        harmonic=args.harmonic,
        dense_check=not args.no_dense_check,
        quad=QuadratureConfig(extra=args.quad_extra),
    )
    report = run_study(config)
    report.write_csv(args.out)
    return EXIT_SOLVER if report.failed else EXIT_OK


def _geom_study(args):
    a, b = args.levels
    text = geometry_study(args.geometry, args.order, range(a, b + 1))
    with open(args.out, "w", newline="") as fh:
        fh.write(text)
    return EXIT_OK


def _export_mesh(args):
    if args.level < 0:
        raise ConfigError(f"negative level {args.level}")
    mesh = build_curved_mesh(make_surface(args.geometry), args.order, args.level)
    with open(args.out, "w") as fh:
        fh.write(mesh.to_json())
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"study": _study, "geom-study": _geom_study, "export-mesh": _export_mesh}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"curvebem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

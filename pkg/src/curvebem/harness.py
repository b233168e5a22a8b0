"""Convergence studies: refine, assemble, solve, evaluate, and estimate orders."""

import csv
import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fe_space import build_space
from .geometry import build_curved_mesh, geometric_error_report, make_surface
from .operators import OperatorSpec, QuadratureConfig, assemble_operator, assemble_rhs
from .reference import (
    MieSeries,
    PlaneWave,
    check_resonance,
    evaluate_potential,
    laplace_harmonic_test,
    mie_scattered_field,
)
from .solve import GmresNotConverged, SingularSystemError, dense_solve, gmres_solve, mass_preconditioner

log = logging.getLogger(__name__)

CSV_HEADER = ("level", "h", "dofs", "error", "eoc", "iters", "seconds")
DOF_CAP = 20_000
LAPLACE_POINT = (0.2, 0.1, 0.1)
HELMHOLTZ_POINT = (1.0, 2.0, 3.0)


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass
class StudyConfig:
    geometry: str = "sphere"
    equation: str = "laplace"
    formulation: str = "single_layer"
    k: float | None = None
    eta: float | None = None
    m: int = 0
    order: int = 1
    normal: str = "element"
    levels: tuple = (1, 4)  # inclusive range
    eval_point: tuple | None = None
    reference: str = "analytic"  # analytic | self | exact-density
    harmonic: str = "x1"
    direction: tuple = (1.0, 0.0, 0.0)
    reference_m: int = 3
    reference_order: int = 4
    reference_level: int | None = None  # default: finest study level
    dense_check: bool = True
    gmres_tol: float = 1e-12  # below the 1e-10 default so GMRES and LU agree to 1e-8
    dof_cap: int = DOF_CAP
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        self.levels = tuple(int(v) for v in self.levels)
        if self.eval_point is None:
            self.eval_point = LAPLACE_POINT if self.equation == "laplace" else HELMHOLTZ_POINT
        self.eval_point = tuple(float(v) for v in self.eval_point)
        if self.equation == "helmholtz" and self.k is None:
            self.k = math.pi
        try:
            self.spec = OperatorSpec(
                self.equation,
                self.formulation,
                self.k if self.equation == "helmholtz" else None,
                self.eta,
                self.normal,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.geometry not in ("sphere", "bean"):
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        if self.m not in (0, 1, 2, 3) or self.order not in (1, 2, 3, 4):
            raise ConfigError(f"unsupported (m, order) = ({self.m}, {self.order})")
        a, b = self.levels
        if a < 0 or b < a:
            raise ConfigError(f"bad level range {self.levels}")
        if self.reference not in ("analytic", "self", "exact-density"):
            raise ConfigError(f"unknown reference {self.reference!r}")
        if self.reference == "analytic" and self.geometry != "sphere":
            raise ConfigError("analytic references exist only on the sphere")
        if self.reference == "exact-density" and not (
            self.geometry == "sphere" and self.equation == "laplace" and self.formulation == "single_layer"
        ):
            raise ConfigError("exact-density reference needs the laplace single layer on the sphere")

    @property
    def level_list(self):
        return list(range(self.levels[0], self.levels[1] + 1))


@dataclass
class LevelRecord:
    level: int
    h: float
    dofs: int
    error: float
    eoc: float | None
    iters: int
    seconds: float
    value: complex = 0j
    dense_difference: float = float("nan")
    true_residual: float = float("nan")
    status: str = "ok"


@dataclass
class ConvergenceReport:
    config: StudyConfig
    records: list = field(default_factory=list)
    reference_value: complex | None = None
    warnings: list = field(default_factory=list)

    @property
    def errors(self):
        return np.array([r.error for r in self.records])

    @property
    def hs(self):
        return np.array([r.h for r in self.records])

    @property
    def eocs(self):
        return [r.eoc for r in self.records]

    @property
    def final_eoc(self):
        return self.records[-1].eoc if self.records else None

    @property
    def failed(self):
        return any(r.status != "ok" for r in self.records)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([
                r.level,
                f"{r.h:.12g}",
                r.dofs,
                f"{r.error:.12g}",
                "" if r.eoc is None else f"{r.eoc:.6f}",
                r.iters,
                f"{r.seconds:.3f}",
            ])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def eoc(e_prev, e_cur, h_prev, h_cur):
    """Estimated order of convergence between two refinement levels."""
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def dof_count(m, level):
    """DOFs of the degree-m space on the level-``level`` icosahedral mesh."""
    n_el = 20 * 4**level
    if m == 0:
        return n_el
    n_v, n_e = 10 * 4**level + 2, 30 * 4**level
    return n_v + n_e * (m - 1) + n_el * (m - 1) * (m - 2) // 2


def _surface(config):
    return make_surface(config.geometry)


def boundary_data(config):
    if config.equation == "laplace":
        if config.reference == "exact-density":
            return lambda x: np.ones(len(np.atleast_2d(x)))
        f, _ = laplace_harmonic_test(config.harmonic)
        return f
    wave = PlaneWave(config.k, np.array(config.direction))
    return lambda x: -wave(x)


def analytic_value(config):
    x = np.array(config.eval_point)
    if config.equation == "laplace":
        _, u = laplace_harmonic_test(config.harmonic)
        return complex(u(x[None])[0])
    return complex(mie_scattered_field(MieSeries(config.k), x, config.direction)[0])


@dataclass
class LevelSolution:
    value: complex
    density: object
    iterations: int
    dense_difference: float
    true_residual: float
    h: float
    dofs: int


def solve_level(config, level, m=None, order=None):
    """Mesh, space, assembly, solve and evaluation at one refinement level."""
    m = config.m if m is None else m
    order = config.order if order is None else order
    mesh = build_curved_mesh(_surface(config), order, level)
    space = build_space(mesh, m)
    spec = config.spec
    A = assemble_operator(spec, space, config.quad)
    b = assemble_rhs(spec, space, boundary_data(config))
    precond = mass_preconditioner(space)
    dense = None
    try:
        report = gmres_solve(A, b, precond=precond, tol=config.gmres_tol)
        x = report.solution
        iters = report.iterations
        true_res = report.true_residual
    except GmresNotConverged as exc:
        log.warning("GMRES did not converge (%s); falling back to LU", exc)
        dense = _dense(A, b)
        x, iters, true_res = dense.solution, len(exc.history) - 1, dense.residual
    diff = float("nan")
    if config.dense_check:
        dense = dense or _dense(A, b)
        diff = float(np.abs(dense.solution - x).max())
    density = space.density(x)
    value = complex(evaluate_potential(spec, density, np.array(config.eval_point))[0])
    return LevelSolution(value, density, iters, diff, true_res, mesh.h, space.n_dofs)


def _dense(A, b):
    try:
        return dense_solve(A, b)
    except SingularSystemError as exc:
        raise SolverFailure(str(exc)) from exc


def _level_error(config, sol, ref_value):
    if config.reference == "exact-density":
        return float(np.abs(sol.density.coeffs - 1.0).max())
    return abs(sol.value - ref_value) / abs(ref_value)


def _capped_levels(config, m, report):
    levels = [L for L in config.level_list if dof_count(m, L) <= config.dof_cap]
    if len(levels) < len(config.level_list):
        msg = (
            f"levels above {levels[-1] if levels else 'none'} exceed the {config.dof_cap} DOF cap "
            f"for m = {m}; truncating"
        )
        warnings.warn(msg)
        report.warnings.append(msg)
    return levels


def run_study(config):
    """Convergence study over the configured levels; returns the report."""
    report = ConvergenceReport(config)
    # the combined field equation is uniquely solvable at every k
    if config.geometry == "sphere" and config.equation == "helmholtz" and config.spec.formulation != "cfie":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            check_resonance(config.k)
        for w in caught:
            log.warning("%s", w.message)
            report.warnings.append(str(w.message))
    levels = _capped_levels(config, config.m, report)
    ref_value = None
    if config.reference == "analytic":
        ref_value = analytic_value(config)
    elif config.reference == "self":
        ref_value = reference_solution(config, report).value
    report.reference_value = ref_value
    prev = None
    for level in levels:
        t0 = time.perf_counter()
        try:
            sol = solve_level(config, level)
        except SolverFailure as exc:
            log.error("level %d: solver failure: %s", level, exc)
            report.records.append(
                LevelRecord(level, float("nan"), dof_count(config.m, level), float("nan"), None, 0,
                            time.perf_counter() - t0, status="solver-failure")
            )
            prev = None
            continue
        err = _level_error(config, sol, ref_value)
        rate = None
        if prev is not None and prev.error > 0 and err > 0:
            rate = eoc(prev.error, err, prev.h, sol.h)
        rec = LevelRecord(
            level, sol.h, sol.dofs, err, rate, sol.iterations, time.perf_counter() - t0,
            sol.value, sol.dense_difference, sol.true_residual,
        )
        report.records.append(rec)
        log.info(
            "level %d: h=%.4g dofs=%d error=%.4e eoc=%s iters=%d (%.1fs)",
            level, rec.h, rec.dofs, err, "-" if rate is None else f"{rate:.3f}", rec.iters, rec.seconds,
        )
        prev = rec
    return report


def reference_solution(config, report=None):
    """Run with the reference discretization on the reference level."""
    level = config.reference_level if config.reference_level is not None else config.levels[1]
    m, order = config.reference_m, config.reference_order
    while level > 0 and dof_count(m, level) > config.dof_cap:
        level -= 1
    if level < config.levels[1] and report is not None:
        report.warnings.append(f"reference level lowered to {level} by the DOF cap")
    ref_config = replace(config, dense_check=False)
    return solve_level(ref_config, level, m, order)


def self_convergence(config):
    """Study against the (reference_m, reference_order) solution on the finest mesh."""
    return run_study(replace(config, reference="self"))


GEOM_HEADER = (
    "order", "level", "h", "jacobian", "distance", "element_normal", "interp_normal",
    "eoc_jacobian", "eoc_distance", "eoc_element_normal", "eoc_interp_normal",
)


def geometry_study(surface, orders, levels):
    """Suprema of the geometric errors and their orders, as CSV text."""
    if isinstance(surface, str):
        surface = make_surface(surface)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GEOM_HEADER)
    rows = []
    for order in orders:
        prev = None
        for level in levels:
            mesh = build_curved_mesh(surface, order, level)
            rep = geometric_error_report(mesh)
            vals = (rep.jacobian, rep.distance, rep.element_normal, rep.interp_normal)
            rates = [""] * 4
            if prev is not None:
                rates = [f"{eoc(p, v, prev[0], mesh.h):.6f}" if p > 0 and v > 0 else "" for p, v in zip(prev[1], vals)]
            w.writerow([order, level, f"{mesh.h:.12g}", *[f"{v:.12g}" for v in vals], *rates])
            rows.append((order, level, mesh.h, vals))
            prev = (mesh.h, vals)
    return buf.getvalue()

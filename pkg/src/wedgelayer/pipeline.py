"""Stage orchestration, CSV emission and the aggregated verification report."""
from __future__ import annotations

import csv
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__, grids
from .crocco_profile import (
    envelope_bounds,
    envelope_fit,
    from_similarity,
    solve_integral_equation,
)
from .errors import InvariantViolation, NoConvergenceError, ValidationError, WedgeLayerError
from .line_method import (
    CroccoField,
    SliceOperator,
    coefficients,
    initial_profile,
    march,
    mu_schedule,
    residual_norm,
    sandwich_check,
    similarity_problem,
)
from .reconstruct import (
    chain_rule_gap,
    continuity_residual,
    decay_check,
    momentum_residual,
    reconstruct,
    similarity_gap,
    station,
)
from .scenario import Scenario, dump_scenario, parse_scenario
from .similarity import asymptotic_fit, similarity_residual, solve_similarity

log = logging.getLogger(__name__)

STAGES = ("similarity", "profile", "march", "reconstruct", "verify")
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

PROFILE_COLUMNS = ("z", "f", "fp", "fpp")
CROCCO_COLUMNS = ("eta", "Y", "Yp", "envelope_lo", "envelope_hi")
FIELD_COLUMNS = ("k", "xi", "eta", "omega")
PHYSICAL_COLUMNS = ("x", "y", "u", "v", "one_minus_u_over_U")
REPORT_COLUMNS = ("check_name", "status", "measured", "threshold")
SLICE_COLUMNS = ("k", "xi", "newton_iterations", "residual", "min_omega", "eps")


# Report -----------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    status: str  # pass | fail | warn | info
    measured: float
    threshold: float = float("nan")


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    def add(self, name, ok, measured, threshold=float("nan"), soft=False):
        status = "pass" if ok else ("warn" if soft else "fail")
        self.checks.append(Check(name, status, float(measured), float(threshold)))

    def info(self, name, measured):
        self.checks.append(Check(name, "info", float(measured)))

    def failures(self, strict: bool = False) -> list:
        bad = {"fail", "warn"} if strict else {"fail"}
        return [c for c in self.checks if c.status in bad]

    def passed(self, strict: bool = False) -> bool:
        return not self.failures(strict)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_rows(self):
        return [(c.name, c.status, _fmt(c.measured), _fmt(c.threshold)) for c in self.checks]

    def write_csv(self, path) -> None:
        _write_csv(path, REPORT_COLUMNS, self.to_rows())

    @classmethod
    def read_csv(cls, path) -> "VerifyReport":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != REPORT_COLUMNS:
                raise ValueError(f"unexpected report header {header}")
            return cls([Check(r[0], r[1], float(r[2]), float(r[3])) for r in reader])

    def summary(self, strict: bool = False) -> str:
        lines = [f"{c.status.upper():5s} {c.name}: {c.measured:.4g}"
                 + ("" if math.isnan(c.threshold) else f" (threshold {c.threshold:.4g})")
                 for c in self.checks]
        verdict = "PASS" if self.passed(strict) else f"FAIL ({len(self.failures(strict))} checks)"
        lines.append(f"overall: {verdict}")
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# CSV emitters -------------------------------------------------------------------

def write_profile_csv(path, sol) -> None:
    """Dimensional similarity profile: f(z) = L g(z/L)."""
    L = sol.scale_L
    rows = zip(L * sol.z_grid, L * sol.f, sol.fp, sol.fpp / L)
    _write_csv(path, PROFILE_COLUMNS, ([_fmt(v) for v in r] for r in rows))


def write_crocco_csv(path, profile, env) -> None:
    lo, hi = envelope_bounds(profile, env)
    rows = zip(profile.eta_grid, profile.Y, profile.Yp, lo, hi)
    _write_csv(path, CROCCO_COLUMNS, ([_fmt(v) for v in r] for r in rows))


def write_field_csv(path, fld: CroccoField) -> None:
    def rows():
        for k, xi in enumerate(fld.xi_nodes):
            for e, w in zip(fld.eta_grid, fld.omega[k]):
                yield (k, _fmt(xi), _fmt(e), _fmt(w))

    _write_csv(path, FIELD_COLUMNS, rows())


def read_field_csv(path):
    """(xi_nodes, eta_grid, omega) from field.csv."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ks = data[:, 0].astype(int)
    n_slices = ks.max() + 1
    n_eta = len(data) // n_slices
    eta = data[:n_eta, 2]
    omega = data[:, 3].reshape(n_slices, n_eta)
    xi = data[::n_eta, 1]
    return xi, eta, omega


def write_physical_csv(path, pf) -> None:
    tail = pf.one_minus_u_over_U

    def rows():
        for i, x in enumerate(pf.x_nodes):
            for j, y in enumerate(pf.y_nodes):
                yield (_fmt(x), _fmt(y), _fmt(pf.u[i, j]), _fmt(pf.v[i, j]), _fmt(tail[i, j]))

    _write_csv(path, PHYSICAL_COLUMNS, rows())


def write_slices_csv(path, fld: CroccoField) -> None:
    rows = ([_fmt(v) if isinstance(v, float) else v for v in d.record().values()] for d in fld.slice_diag)
    _write_csv(path, SLICE_COLUMNS, rows)


def write_manifest(path, items: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v}\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


# Checks -------------------------------------------------------------------------

def check_similarity(report: VerifyReport, scenario: Scenario):
    prob = similarity_problem(scenario)
    sol = solve_similarity(prob)
    report.add("similarity.monotone", bool(np.all(sol.fpp > 0) and np.all(sol.fp[1:] > 0) and np.all(sol.fp < 1)), 1.0)
    res = float(np.max(np.abs(similarity_residual(prob, sol))))
    report.add("similarity.ode_residual", res <= 1e-6, res, 1e-6)
    report.info("similarity.wall_shear", sol.wall_shear)
    fit = asymptotic_fit(sol, 1e-10, 1e-2)
    # sub-leading tail corrections grow with beta; the 0.05 bar is only held hard up to beta = 1
    report.add("similarity.asymptotic_rms", fit.rms_residual <= 0.05, fit.rms_residual, 0.05, soft=sol.beta > 1.0)
    report.add("similarity.asymptotic_c1", fit.c1 > 0, fit.c1, 0.0)
    return sol


def check_profile(report: VerifyReport, scenario: Scenario, sol=None):
    eta = grids.graded_grid(scenario.N, scenario.p)
    prob = similarity_problem(scenario)
    sol = sol or solve_similarity(prob)
    Y = from_similarity(sol, prob, eta)
    opts = scenario.solver
    report.add("profile.robin_residual", Y.robin_residual() <= opts.bc_tol, Y.robin_residual(), opts.bc_tol)
    if scenario.b == 0.0:
        Z = solve_integral_equation(scenario.m, scenario.a, scenario.nu, eta, fp_tol=opts.fp_tol,
                                    variant=scenario.variant, mu=opts.mu_env)
        gap = float(np.max(np.abs(Y.Y - Z.Y)))
        report.add("profile.route_gap", gap <= 5e-3, gap, 5e-3)
    try:
        env = envelope_fit(Y, opts.mu_env)
        report.add("profile.envelope_positive", True, min(env.M5, env.M6, env.M7, env.M8, env.M9, env.M10), 0.0)
    except InvariantViolation as exc:
        env = None
        report.add("profile.envelope_positive", False, float("nan"), 0.0)
        log.warning("envelope fit failed: %s", exc)
    return Y, env


def slice_residuals(fld: CroccoField) -> np.ndarray:
    """Scaled residual of every stored slice k >= 1 at eps = 0 (recomputed)."""
    s = fld.scenario
    op = SliceOperator(fld.eta_grid, s.nu)
    mus = mu_schedule(s, len(fld.xi_nodes) - 1)
    out = np.zeros(len(fld.xi_nodes))
    for k in range(1, len(fld.xi_nodes)):
        c = coefficients(s, float(fld.xi_nodes[k]))
        R, S = op.residual(fld.omega[k], fld.omega[k - 1], c, fld.h, 0.0, mus[k], scale=True)
        out[k] = residual_norm(R, S)
    return out


def check_field(report: VerifyReport, fld: CroccoField, Y=None) -> bool:
    """Field and sandwich checks; returns whether the field is positive."""
    s = fld.scenario
    opts = s.solver
    report.add("march.extent", fld.attained_X >= fld.target_X - 1e-12, fld.attained_X, fld.target_X)
    inner = fld.omega[:, 1:-1]
    bad = [k for k in range(len(fld.xi_nodes)) if np.any(inner[k] <= 0)]
    report.add("march.positivity", not bad, len(bad), 0.0)
    report.add("march.top_dirichlet", bool(np.all(fld.omega[:, -1] == 0.0)), float(np.max(np.abs(fld.omega[:, -1]))), 0.0)
    if bad:
        return False
    res = slice_residuals(fld)
    report.add("march.slice_residual", res.max() <= opts.newton_tol, res.max(), opts.newton_tol)
    if s.self_similar:
        ref = fld.Y_profile.Y if Y is None else Y
        dev = float(np.max(np.abs(fld.omega - ref[None, :])))
        tol = 1e-4 + 10 * opts.newton_tol
        report.add("march.self_similar_fidelity", dev <= tol, dev, tol)
    rep = sandwich_check(fld)
    X = fld.attained_X
    report.add("sandwich.violations", rep.n_violations == 0, rep.n_violations, 0.0)
    report.add("sandwich.M11X", math.isfinite(rep.M11) and rep.M11 * X <= 1, rep.M11 * X, 1.0)
    report.add("sandwich.M12X", math.isfinite(rep.M12) and rep.M12 * X <= 1, rep.M12 * X, 1.0)
    report.add("sandwich.M13", math.isfinite(rep.M13), rep.M13)
    report.add("sandwich.M19", rep.M19 > 0, rep.M19, 0.0)
    return True


def check_physical(report: VerifyReport, fld: CroccoField, pf=None):
    s = fld.scenario
    if len(fld.xi_nodes) < 4:
        report.add("physical.available", False, len(fld.xi_nodes), 4)
        return None
    pf = pf or reconstruct(fld)
    report.add("physical.wall_u", bool(np.all(pf.u[:, 0] == 0.0)), float(np.max(np.abs(pf.u[:, 0]))), 0.0)
    wall = []
    for k in range(1, len(fld.xi_nodes)):
        x = float(fld.xi_nodes[k])
        v_w = float(station(fld, k).v[0])
        v0 = float(s.v0(x))
        wall.append(abs(v_w - v0) / abs(v0) if v0 != 0 else abs(v_w))
    report.add("physical.wall_v", max(wall) <= 1e-4, max(wall), 1e-4)
    inc = bool(np.all(np.diff(pf.u[:, :], axis=1)[pf.mask[:, 1:]] > 0))
    report.add("physical.u_increasing", inc, float(inc), 1.0)
    top = float(np.min(pf.u[:, -1] / pf.U_of_x))
    report.add("physical.far_field", top >= 0.999, top, 0.999)
    c, _ = continuity_residual(pf)
    mo, _ = momentum_residual(pf)
    report.add("physical.continuity", c <= 1e-2, c, 1e-2)
    report.add("physical.momentum", mo <= 1e-2, mo, 1e-2)
    cg = chain_rule_gap(pf)
    report.add("physical.chain_rule", cg <= 0.05, cg, 0.05)
    gap = similarity_gap(fld, 1)
    report.add("physical.similarity_limit", gap <= 0.01, gap, 0.01)
    d = decay_check(pf, s)
    ok = ~np.isnan(d.slope)
    report.add("decay.window", not d.empty, len(d.empty), 0.0, soft=True)
    if np.any(ok):
        report.add("decay.slopes_negative", bool(np.all(d.slope[ok] < 0)), float(np.max(d.slope[ok])), 0.0)
        report.add("decay.r2", float(np.min(d.r2[ok])) >= 0.99, float(np.min(d.r2[ok])), 0.99)
        report.add("decay.ordering", 0 < d.M4 <= d.M2, d.M2 - d.M4, 0.0)
        spread = float((d.M2 - d.M4) / d.M4)
        if s.m == 1.0:
            # x^(m-1) = 1: the exponent is x-independent up to the V(x) perturbation
            report.add("decay.m1_slope_spread", spread <= 0.05, spread, 0.05, soft=not s.self_similar)
        else:
            report.info("decay.slope_spread", spread)
        for name in ("M1", "M2", "M3", "M4"):
            report.info(f"decay.{name}", getattr(d, name))
    return pf


# Pipeline -------------------------------------------------------------------------

@dataclass
class RunResult:
    out_dir: Path
    exit_code: int
    report: Optional[VerifyReport] = None
    manifest: dict = field(default_factory=dict)
    failure: Optional[str] = None


def _closure(stages: Sequence[str]) -> list:
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ValidationError(f"unknown stages {unknown}; choose from {list(STAGES)}")
    last = max(STAGES.index(s) for s in stages)
    return list(STAGES[: last + 1])


def run_pipeline(scenario: Scenario, out_dir, stages: Sequence[str] = STAGES, strict: bool = False) -> RunResult:
    """Run the requested stages (and whatever they depend on); write outputs of requested stages only."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    requested = set(stages)
    todo = _closure(stages)
    t0 = time.perf_counter()
    timings = {}
    manifest = {
        "scenario_hash": scenario.digest(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "stages": ",".join(s for s in STAGES if s in requested),
        "newton_tol": scenario.solver.newton_tol,
        "fp_tol": scenario.solver.fp_tol,
        "bc_tol": scenario.solver.bc_tol,
        "eps_min": scenario.solver.eps_min,
        "target_X": scenario.n_slices * scenario.h,
    }
    (out / "scenario.toml").write_text(dump_scenario(scenario), encoding="utf-8")
    report = VerifyReport()
    result = RunResult(out, EXIT_OK, manifest=manifest)
    sol = Y = env = fld = pf = None

    def stamp(stage, t):
        timings[stage] = time.perf_counter() - t

    try:
        if "similarity" in todo:
            t = time.perf_counter()
            sol = solve_similarity(similarity_problem(scenario))
            if "similarity" in requested:
                write_profile_csv(out / "profile.csv", sol)
            manifest["wall_shear"] = repr(sol.wall_shear)
            stamp("similarity", t)
        if "profile" in todo:
            t = time.perf_counter()
            eta = grids.graded_grid(scenario.N, scenario.p)
            prob = similarity_problem(scenario)
            Y = from_similarity(sol, prob, eta)
            env = envelope_fit(Y, scenario.solver.mu_env)
            if "profile" in requested:
                write_crocco_csv(out / "crocco_profile.csv", Y, env)
            stamp("profile", t)
        if "march" in todo:
            t = time.perf_counter()
            fld = march(scenario)
            manifest["attained_X"] = fld.attained_X
            if "march" in requested:
                write_field_csv(out / "field.csv", fld)
                write_slices_csv(out / "slices.csv", fld)
            stamp("march", t)
            if fld.failure:
                raise NoConvergenceError(fld.failure)
        if "reconstruct" in todo:
            t = time.perf_counter()
            pf = reconstruct(fld)
            if "reconstruct" in requested:
                write_physical_csv(out / "physical.csv", pf)
            stamp("reconstruct", t)
        if "verify" in todo:
            t = time.perf_counter()
            check_similarity(report, scenario)
            check_profile(report, scenario, sol)
            if check_field(report, fld):
                check_physical(report, fld, pf)
            report.write_csv(out / "report.csv")
            (out / "report.txt").write_text(report.summary(strict) + "\n", encoding="utf-8")
            result.report = report
            if not report.passed(strict):
                result.exit_code = EXIT_VERIFY
            stamp("verify", t)
    except WedgeLayerError as exc:
        result.failure = f"{type(exc).__name__}: {exc}"
        result.exit_code = EXIT_VALIDATION if isinstance(exc, ValidationError) else EXIT_SOLVER
        (out / "FAILED").write_text(result.failure + "\n", encoding="utf-8")
        log.error("pipeline failed: %s", result.failure)
    manifest["status"] = {0: "ok", 2: "validation_error", 3: "solver_failure", 4: "verify_failed"}[result.exit_code]
    if result.failure:
        manifest["failure"] = result.failure
    for stage, dt in timings.items():
        manifest[f"time_{stage}_s"] = f"{dt:.3f}"
    manifest["wall_clock_s"] = f"{time.perf_counter() - t0:.3f}"
    write_manifest(out / "manifest.txt", manifest)
    return result


def field_from_artifacts(out_dir) -> CroccoField:
    """Rebuild a CroccoField from scenario.toml + field.csv written by run_pipeline."""
    out = Path(out_dir)
    scenario = parse_scenario((out / "scenario.toml").read_text(encoding="utf-8"))
    xi, eta, omega = read_field_csv(out / "field.csv")
    Y = initial_profile(scenario, eta)
    n = len(xi)
    return CroccoField(
        xi_nodes=xi, eta_grid=eta, omega=omega, slice_diag=[],
        mu_schedule=mu_schedule(scenario, n - 1), scenario=scenario, Y_profile=Y,
        target_X=scenario.n_slices * scenario.h,
    )


def verify(target, strict: bool = False) -> VerifyReport:
    """Run every check on a Scenario (solving it) or on an artifact directory."""
    report = VerifyReport()
    if isinstance(target, Scenario):
        scenario = target
        sol = check_similarity(report, scenario)
        check_profile(report, scenario, sol)
        fld = march(scenario)
        if fld.failure:
            report.add("march.extent", False, fld.attained_X, fld.target_X)
            return report
    else:
        fld = field_from_artifacts(target)
        scenario = fld.scenario
        sol = check_similarity(report, scenario)
        check_profile(report, scenario, sol)
    if check_field(report, fld):
        check_physical(report, fld)
    return report


def _sweep_cell(args):
    scenario, m, scale = args
    try:
        cell = scenario.with_(
            m=m,
            a1_coeffs=tuple(scale * c for c in scenario.a1_coeffs),
            v1_coeffs=tuple(scale * c for c in scenario.v1_coeffs),
            r1_coeffs=tuple(scale * c for c in scenario.r1_coeffs),
        )
        return m, scale, verify(cell), None
    except WedgeLayerError as exc:
        return m, scale, None, f"{type(exc).__name__}: {exc}"


def sweep(template: Scenario, m_values, scales=(0.0,), workers: Optional[int] = None) -> list:
    """verify() over the (m, scale) matrix; cells run in separate processes."""
    m_values = list(m_values)
    if not m_values:
        raise ValidationError("sweep needs at least one m value")
    cells = [(template, float(m), float(s)) for m in m_values for s in scales]
    if workers == 1 or len(cells) == 1:
        return [_sweep_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_cell, cells))

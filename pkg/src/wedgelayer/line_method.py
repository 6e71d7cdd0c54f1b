"""Line-method marching of the Crocco-plane equation in xi.

Each slice k solves the two-point problem

    (nu w^2 + eps) w'' - eta (A + mu_k h)(w - w_prev)/h + (eta^2 - 1) B w' - eta C w = 0,
    w(1) = 0,   nu w w'(0) - v1 w(0) + B = 0,

on a graded eta-grid by damped Newton, with eps driven to zero by continuation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from . import grids
from .crocco_profile import CroccoProfile, from_similarity
from .errors import ContinuationFailure, GeometryError, StepRejection, WedgeLayerError
from .scenario import Scenario, SolverOptions
from .similarity import SimilarityProblem, solve_similarity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Coefficients:
    A: float
    B: float
    C: float
    v1: float


@dataclass
class SliceDiagnostics:
    k: int
    xi: float
    newton_iterations: int
    residual: float
    min_omega: float
    eps: float
    K1: float = float("nan")
    K2: float = float("nan")
    eps_path: list = field(default_factory=list)

    def record(self) -> dict:
        return {
            "k": self.k, "xi": self.xi, "newton_iterations": self.newton_iterations,
            "residual": self.residual, "min_omega": self.min_omega, "eps": self.eps,
        }


@dataclass(frozen=True)
class CroccoField:
    xi_nodes: np.ndarray
    eta_grid: np.ndarray
    omega: np.ndarray  # (K+1, N+1)
    slice_diag: list
    mu_schedule: np.ndarray
    scenario: Scenario
    Y_profile: CroccoProfile
    target_X: float
    failure: Optional[str] = None

    @property
    def attained_X(self) -> float:
        return float(self.xi_nodes[-1])

    @property
    def h(self) -> float:
        return self.scenario.h

    @property
    def complete(self) -> bool:
        return self.failure is None

    def omega_at(self, xi: float) -> np.ndarray:
        """Linear interpolation between slices."""
        if xi < 0 or xi > self.attained_X + 1e-12:
            raise ValueError(f"xi = {xi} outside [0, {self.attained_X}]")
        t = xi / self.h
        k = min(int(math.floor(t)), len(self.xi_nodes) - 2)
        lam = t - k
        return (1.0 - lam) * self.omega[k] + lam * self.omega[k + 1]


@dataclass(frozen=True)
class SandwichReport:
    M11: float
    M12: float
    M13: float
    M14: Optional[float]
    M15: Optional[float]
    M16: Optional[float]
    M17: Optional[float]
    M18: float
    M19: float
    violations: dict
    derivative_branch: str

    @property
    def n_violations(self) -> int:
        return int(sum(len(v) for v in self.violations.values()))


def coefficients(scenario: Scenario, xi: float) -> Coefficients:
    """A, B, C and v1 at station xi for the scenario's variant."""
    s = scenario
    V = float(s.V(xi))
    Vx = float(s.V_x(xi))
    A = xi * V
    B = s.m * V + xi * Vx
    if s.variant == "planar" or s.solver.axisym_c_style == "planar":
        C = 0.5 * (3.0 * s.m - 1.0) * V + xi * Vx
    else:
        C = 1.5 * (s.m - 1.0) * V + xi * Vx
    if s.variant == "axisymmetric":
        r1 = float(s.r1(xi))
        if r1 <= 0:
            raise GeometryError(f"r1({xi}) = {r1} <= 0")
        C -= xi * float(s.r1_x(xi)) / r1 * V
    return Coefficients(A=A, B=B, C=C, v1=float(s.v1(xi)))


class SliceOperator:
    """Discrete slice residual and banded Jacobian on a fixed grid."""

    def __init__(self, eta, nu):
        self.eta = np.asarray(eta, dtype=float)
        self.nu = nu
        self.d1, self.d2 = grids.fd_weights(self.eta)
        self.wall = grids.wall_weights(self.eta)

    def residual(self, w, w_prev, coeffs: Coefficients, h, eps=0.0, mu_k=0.0, source=None, scale=False):
        """Row residuals; with scale=True also the sum of absolute term sizes per row."""
        eta, nu = self.eta, self.nu
        e = eta[1:-1]
        st = np.column_stack((w[:-2], w[1:-1], w[2:]))
        w1 = np.sum(self.d1 * st, axis=1)
        w2 = np.sum(self.d2 * st, axis=1)
        wi = w[1:-1]
        drift = (coeffs.A + mu_k * h) / h if h > 0 else 0.0
        diff = nu * wi**2 + eps
        conv = (e**2 - 1.0) * coeffs.B
        R = np.empty_like(w)
        R[1:-1] = diff * w2 - e * drift * (wi - w_prev[1:-1]) + conv * w1 - e * coeffs.C * wi
        slope = self.wall @ w[:3]
        R[0] = nu * w[0] * slope - coeffs.v1 * w[0] + coeffs.B
        R[-1] = w[-1]
        if source is not None:
            R = R - source
        if not scale:
            return R
        S = np.empty_like(w)
        S[1:-1] = (
            diff * np.sum(np.abs(self.d2 * st), axis=1)
            + e * abs(drift) * (np.abs(wi) + np.abs(w_prev[1:-1]))
            + np.abs(conv) * np.sum(np.abs(self.d1 * st), axis=1)
            + e * abs(coeffs.C) * np.abs(wi)
        )
        S[0] = abs(nu * w[0]) * np.sum(np.abs(self.wall * w[:3])) + abs(coeffs.v1 * w[0]) + abs(coeffs.B)
        S[-1] = 1.0
        if source is not None:
            S = S + np.abs(source)
        return R, S

    def jacobian_banded(self, w, coeffs: Coefficients, h, eps=0.0, mu_k=0.0, lagged=False):
        """Banded storage (l=1, u=2) for scipy.linalg.solve_banded.

        lagged=True drops the derivative of the w**2 diffusivity (and of the
        w factor in the wall row), giving the Picard operator with frozen
        coefficients.
        """
        eta, nu = self.eta, self.nu
        n = len(w)
        e = eta[1:-1]
        st = np.column_stack((w[:-2], w[1:-1], w[2:]))
        w2 = np.sum(self.d2 * st, axis=1)
        wi = w[1:-1]
        drift = (coeffs.A + mu_k * h) / h if h > 0 else 0.0
        diff = nu * wi**2 + eps
        conv = (e**2 - 1.0) * coeffs.B
        lower = diff * self.d2[:, 0] + conv * self.d1[:, 0]
        diag = diff * self.d2[:, 1] + conv * self.d1[:, 1] - e * drift - e * coeffs.C
        if not lagged:
            diag = diag + 2.0 * nu * wi * w2
        upper = diff * self.d2[:, 2] + conv * self.d1[:, 2]

        ab = np.zeros((4, n))
        # row i, column j lives at ab[2 + i - j, j]
        ab[2, 1:-1] = diag
        ab[3, 0:-2] = lower
        ab[1, 2:] = upper
        slope = self.wall @ w[:3]
        ab[2, 0] = nu * w[0] * self.wall[0] - coeffs.v1 + (0.0 if lagged else nu * slope)
        ab[1, 1] = nu * w[0] * self.wall[1]
        ab[0, 2] = nu * w[0] * self.wall[2]
        ab[2, -1] = 1.0
        return ab


def residual_norm(R, S, tiny=1e-300):
    """Sup norm of each row's residual relative to the size of its terms."""
    return float(np.max(np.abs(R) / np.maximum(S, tiny)))


def assemble_slice_residual(omega_k, omega_prev, coeffs, h, eps, mu_k, eta, nu, source=None):
    """Residual of the regularized slice equation with wall Robin and top Dirichlet rows."""
    return SliceOperator(eta, nu).residual(
        np.asarray(omega_k, float), np.asarray(omega_prev, float), coeffs, h, eps, mu_k, source
    )


PICARD_SWITCH = 1e-2


def _newton(op, w, w_prev, coeffs, h, eps, mu_k, tol, max_iter, source=None, polish=False):
    """Picard iterations (frozen diffusivity) while the scaled residual exceeds
    PICARD_SWITCH, then damped Newton.

    A rough start makes the w * w_etaeta term of the Jacobian meaningless, so
    the lagged operator is used until the iterate is smooth.  The Newton line
    search halves the step (at most 11 times) until the l2 norm of R / S
    decreases, with the row scales S frozen at the current iterate so the
    direction is a descent direction.  Convergence is judged in the scaled sup
    norm.
    """

    def evaluate(v):
        return op.residual(v, w_prev, coeffs, h, eps, mu_k, source, scale=True)

    R, S = evaluate(w)
    rn = residual_norm(R, S)
    it = 0
    while it < max_iter:
        if rn <= tol and not polish:
            return w, it, rn
        it += 1
        lagged = rn > PICARD_SWITCH
        ab = op.jacobian_banded(w, coeffs, h, eps, mu_k, lagged=lagged)
        dw = solve_banded((1, 2), ab, -R)
        weights = 1.0 / np.maximum(S, 1e-300)
        merit = float(np.linalg.norm(R * weights))
        lam = 1.0
        accepted = False
        for _ in range(12):
            trial = w + lam * dw
            if np.all(trial[:-1] > 0):
                Rt, St = evaluate(trial)
                # Picard steps only need to keep positivity
                if lagged or np.linalg.norm(Rt * weights) < merit:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if rn <= tol:
                return w, it - 1, rn
            if not np.all(trial[:-1] > 0):
                raise StepRejection(f"positivity lost after damping (eps={eps:.3g})")
            raise ContinuationFailure(f"Newton stagnated at residual {rn:.3e}", eps=eps, residual=rn)
        w, R, S = trial, Rt, St
        rn = residual_norm(R, S)
        if polish and rn <= tol and np.max(np.abs(lam * dw)) <= tol * max(1.0, float(np.max(w))):
            return w, it, rn
    if rn <= tol:
        return w, it, rn
    raise ContinuationFailure(f"Newton did not converge in {max_iter} iterations (res {rn:.3e})", eps=eps, residual=rn)


def eps_schedule(opts: SolverOptions, w_scale: float) -> list:
    eps0 = opts.eps0_factor * w_scale**2
    out = []
    e = eps0
    while e >= opts.eps_min:
        out.append(e)
        e /= opts.eps_factor
    out.append(0.0)
    return out


def solve_slice(
    omega_prev,
    coeffs: Coefficients,
    h: float,
    mu_k: float,
    eta,
    nu: float,
    opts: SolverOptions = SolverOptions(),
    warm_start=None,
    continuation: bool = True,
    source=None,
    k: int = 0,
    xi: float = 0.0,
):
    """Solve one slice; returns (omega_k, SliceDiagnostics)."""
    op = SliceOperator(eta, nu)
    w = np.array(omega_prev if warm_start is None else warm_start, dtype=float)
    w[-1] = 0.0
    w_prev = np.asarray(omega_prev, dtype=float)
    schedule = eps_schedule(opts, float(np.max(w_prev))) if continuation else [0.0]
    total = 0
    path = []
    prev_stage = None
    rn = np.nan
    for eps in schedule:
        tol = opts.newton_tol if eps == 0.0 else max(opts.newton_tol, 1e-8)
        w, its, rn = _newton(op, w, w_prev, coeffs, h, eps, mu_k, tol, opts.max_newton, source, polish=eps == 0.0)
        total += its
        change = float(np.max(np.abs(w - prev_stage))) if prev_stage is not None else float("nan")
        path.append((eps, its, rn, change))
        prev_stage = w.copy()
    eta = op.eta
    inner = slice(1, len(eta) - 1)
    K1 = float(np.min(w[inner] / (1.0 - eta[inner])))
    K2 = float(np.max(w[inner] / ((1.0 - eta[inner]) * grids.sigma(eta[inner], opts.mu_env))))
    diag = SliceDiagnostics(
        k=k, xi=xi, newton_iterations=total, residual=rn, min_omega=float(np.min(w[:-1])),
        eps=schedule[-1], K1=K1, K2=K2, eps_path=path,
    )
    return w, diag


def mu_schedule(scenario: Scenario, K: int) -> np.ndarray:
    """mu_0 = 0; mu_k = 0 for m < 1, else the configured or default 2 sup B."""
    mu = np.zeros(K + 1)
    if scenario.m >= 1 and K > 0:
        if scenario.solver.mu_star is not None:
            mu_star = scenario.solver.mu_star
        else:
            xs = np.linspace(0.0, K * scenario.h, 4 * K + 1)
            mu_star = 2.0 * max(coefficients(scenario, x).B for x in xs)
        mu[1:] = mu_star
    return mu


def similarity_problem(scenario: Scenario) -> SimilarityProblem:
    """Similarity problem at the tip; wall suction b < 0 enters through f0."""
    k_conv = 0.5 * (scenario.m + (1.0 if scenario.variant == "planar" else 3.0))
    f0 = -scenario.b / (k_conv * scenario.a)
    return SimilarityProblem(scenario.variant, scenario.m, scenario.a, scenario.nu, f0=f0)


def initial_profile(scenario: Scenario, eta) -> CroccoProfile:
    """Y on the grid from the similarity route."""
    prob = similarity_problem(scenario)
    return from_similarity(solve_similarity(prob), prob, eta)


def march(
    scenario: Scenario,
    X: Optional[float] = None,
    h: Optional[float] = None,
    on_slice: Optional[Callable[[dict], None]] = None,
    warm_noise: float = 0.0,
) -> CroccoField:
    """March slices k = 0..K; stops at the first failing slice and reports the extent."""
    if X is not None or h is not None:
        scenario = scenario.with_(**{k: v for k, v in (("X", X), ("h", h)) if v is not None})
    opts = scenario.solver
    eta = grids.graded_grid(scenario.N, scenario.p)
    Y = initial_profile(scenario, eta)
    K = scenario.n_slices
    hh = scenario.h
    mus = mu_schedule(scenario, K)
    rng = np.random.default_rng(opts.seed)

    slices = []
    diags = []
    failure = None
    prev = Y.Y
    for k in range(K + 1):
        xi = k * hh
        coeffs = coefficients(scenario, xi)
        warm = prev.copy()
        if warm_noise:
            warm[:-1] *= 1.0 + warm_noise * rng.uniform(-1.0, 1.0, size=len(warm) - 1)
        try:
            w, diag = solve_slice(
                prev, coeffs, hh, mus[k], eta, scenario.nu, opts,
                warm_start=warm, continuation=k > 0 or warm_noise > 0, k=k, xi=xi,
            )
        except WedgeLayerError as exc:
            failure = f"slice {k} (xi={xi:.6g}) failed: {exc}"
            log.warning(failure)
            break
        slices.append(w)
        diags.append(diag)
        if on_slice is not None:
            on_slice(diag.record())
        prev = w
    if not slices:
        raise ContinuationFailure(failure or "no slice converged")
    n = len(slices)
    return CroccoField(
        xi_nodes=hh * np.arange(n),
        eta_grid=eta,
        omega=np.array(slices),
        slice_diag=diags,
        mu_schedule=mus[:n],
        scenario=scenario,
        Y_profile=Y,
        target_X=K * hh,
        failure=failure,
    )


def _fd_eta(eta, w):
    """(w_eta, w_etaeta) with the one-sided wall slope; NaN at eta = 1."""
    return grids.derivatives(eta, w)


def sandwich_check(field: CroccoField, Y=None) -> SandwichReport:
    """Fit the smallest constants in the slice estimates relative to Y.

    Y defaults to the field's own k = 0 slice, which is the discrete
    counterpart of the similarity profile on the same grid.
    """
    eta = field.eta_grid
    Y = field.omega[0] if Y is None else np.asarray(Y, dtype=float)
    s = field.scenario
    h = field.h
    inner = slice(1, len(eta) - 1)
    sig = grids.sigma(eta[:-1], s.solver.mu_env)
    Yp, _ = _fd_eta(eta, Y)

    viol = {"positivity": [], "derivative_sign": [], "curvature_sign": []}
    m11 = m12 = m13 = 0.0
    m14 = m15 = 0.0
    dmin, dmax = np.inf, 0.0
    cmin, cmax = np.inf, -np.inf
    threshold = 1.0 / 3.0 if s.variant == "planar" else 1.0
    branch = "Y_eta" if s.m >= threshold else "sigma"

    for k in range(len(field.xi_nodes)):
        w = field.omega[k]
        wp, wpp = _fd_eta(eta, w)
        if np.any(w[inner] <= 0):
            viol["positivity"].append(k)
        curv = -w[inner] * wpp[inner]
        if np.any(curv <= 0):
            viol["curvature_sign"].append(k)
        cmin = min(cmin, float(np.min(curv)))
        cmax = max(cmax, float(np.max(curv)))
        if branch == "Y_eta":
            rho = wp[:-1] / Yp[:-1]
            if np.any(rho <= 0):
                viol["derivative_sign"].append(k)
        else:
            band = -wp[:-1] / sig
            if np.any(band <= 0):
                viol["derivative_sign"].append(k)
            dmin = min(dmin, float(np.min(band)))
            dmax = max(dmax, float(np.max(band)))
        if k == 0:
            continue
        kh = k * h
        r = w[inner] / Y[inner]
        m11 = max(m11, float(np.max((1.0 - r) / kh)))
        m12 = max(m12, float(np.max((r - 1.0) / kh)))
        m13 = max(m13, float(np.max(np.abs(w[inner] - field.omega[k - 1][inner]) / (h * Y[inner]))))
        if branch == "Y_eta":
            m14 = max(m14, float(np.max((rho - 1.0) / kh)))
            m15 = max(m15, float(np.max((1.0 - rho) / kh)))

    return SandwichReport(
        M11=m11, M12=m12, M13=m13,
        M14=m14 if branch == "Y_eta" else None,
        M15=m15 if branch == "Y_eta" else None,
        M16=dmax if branch == "sigma" else None,
        M17=dmin if branch == "sigma" else None,
        M18=cmax, M19=cmin,
        violations=viol,
        derivative_branch=branch,
    )

"""The xi = 0 slice Y(eta) of the Crocco-plane problem.

Y solves nu Y^2 Y'' + (eta^2 - 1) m a Y' - eta c a Y = 0 on (0, 1) with
Y(1) = 0 and nu Y Y'(0) + m a = 0, where c = (3m-1)/2 (planar) or 3(m-1)/2
(axisymmetric).  Two routes are provided: the similarity profile pushed through
eta = f'(z), and a damped fixed-point iteration on the equivalent integral
equation.  They share nothing but the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from . import grids
from .errors import DomainError, ExtrapolationError, InvariantViolation, NoConvergenceError
from .grids import MU_DEFAULT, sigma
from .similarity import ProfileSolution, SimilarityProblem, _convection_factor

BC_TOL = 1e-6
FP_TOL = 1e-10


@dataclass(frozen=True)
class CroccoProfile:
    eta_grid: np.ndarray
    Y: np.ndarray
    Yp: np.ndarray
    source: Literal["similarity", "integral_equation"]
    m: float
    a: float
    nu: float
    variant: str = "planar"
    iterations: int = 0
    residual: float = 0.0

    def robin_residual(self) -> float:
        """|nu Y(0) Y'(0) + m a| relative to m a."""
        return abs(self.nu * self.Y[0] * self.Yp[0] + self.m * self.a) / (self.m * self.a)


@dataclass(frozen=True)
class SigmaEnvelope:
    mu: float
    M5: float
    M6: float
    M7: float
    M8: float
    M9: float
    M10: float
    K: float
    eta0: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def wall_term_coefficient(variant: str, m: float) -> float:
    """c in the -eta c a Y term: 2m - k with k the similarity convection factor."""
    return 2.0 * m - _convection_factor(variant, m)


def from_similarity(sol: ProfileSolution, problem: SimilarityProblem, eta_grid) -> CroccoProfile:
    """Y(eta) = f''(z(eta)) with z(eta) the inverse of eta = f'(z).

    Inversion uses the shooting trajectory's dense output; values are mapped
    back to dimensional variables with scale_L (f'' = g''/L).
    """
    eta = np.asarray(eta_grid, dtype=float)
    if eta[-1] != 1.0 or eta[0] != 0.0:
        raise DomainError("eta grid must run from 0 to exactly 1")
    L = sol.scale_L
    fp_top = sol.fp[-1]
    inner = eta[:-1]
    if inner.max() > fp_top:
        raise ExtrapolationError(
            f"eta = {inner.max():.12f} beyond attained f' = {fp_top:.12f}; extend z_max"
        )
    if inner.min() < sol.fp[0]:
        raise ExtrapolationError("eta below the wall slip f'(0)")

    z_nodes = sol.z_grid
    fp_nodes = sol.fp
    idx = np.searchsorted(fp_nodes, inner, side="left")
    g = sol.dense
    Y = np.zeros_like(eta)
    Yp = np.empty_like(eta)
    for j, (e, i) in enumerate(zip(inner, idx)):
        if e == fp_nodes[0]:
            z = 0.0
        elif i < len(z_nodes) and fp_nodes[i] == e:
            z = z_nodes[i]
        else:
            z = brentq(lambda t: g(t)[1] - e, z_nodes[i - 1], z_nodes[i], xtol=1e-15, rtol=1e-15)
        g0, g1, g2 = g(z)
        g3 = -g0 * g2 - sol.beta * (1.0 - g1 * g1)
        Y[j] = g2 / L
        Yp[j] = g3 / (L * g2)
    Y[-1] = 0.0
    Yp[-1] = -np.inf
    return CroccoProfile(
        eta_grid=eta, Y=Y, Yp=Yp, source="similarity",
        m=problem.m, a=problem.a, nu=problem.nu, variant=problem.variant,
    )


def _integral_operator(eta, Y, m, a, nu, k, mu):
    """Right-hand side of nu Y = int_eta^1 (1-s)(m + m s + k s) a / Y ds
    + (1 - eta) k a int_0^eta s / Y ds."""
    t1 = grids.tail_integral(eta, Y, g=(m + (m + k) * eta) * a, mu=mu)
    t2 = grids.cumulative_inverse(eta, Y, g=eta, mu=mu)
    out = np.empty_like(Y)
    out[:-1] = (t1[:-1] + (1.0 - eta[:-1]) * k * a * t2[:-1]) / nu
    out[-1] = 0.0
    return out, t2


def derivative_from_integral(profile: CroccoProfile, mu: float = MU_DEFAULT) -> np.ndarray:
    """nu Y' = -m a (1 - eta^2)/Y - k a int_0^eta s/Y ds at every node (-inf at eta = 1)."""
    eta, Y = profile.eta_grid, profile.Y
    if np.any(Y[:-1] <= 0):
        raise DomainError("Y must be positive on [0, 1)")
    k = _convection_factor(profile.variant, profile.m)
    m, a, nu = profile.m, profile.a, profile.nu
    t2 = grids.cumulative_inverse(eta, Y, g=eta, mu=mu)
    Yp = np.empty_like(Y)
    Yp[:-1] = (-m * a * (1.0 - eta[:-1] ** 2) / Y[:-1] - k * a * t2[:-1]) / nu
    Yp[-1] = -np.inf
    return Yp


def solve_integral_equation(
    m: float,
    a: float,
    nu: float,
    eta_grid,
    fp_tol: float = FP_TOL,
    max_iter: int = 5000,
    damping: float = 0.5,
    variant: str = "planar",
    mu: float = MU_DEFAULT,
) -> CroccoProfile:
    """Damped fixed-point iteration Y <- (1 - d) Y + d T(Y) for the integral form."""
    eta = np.asarray(eta_grid, dtype=float)
    if eta[-1] != 1.0 or eta[0] != 0.0:
        raise DomainError("eta grid must run from 0 to exactly 1")
    k = _convection_factor(variant, m)
    Y = math.sqrt(2.0 * m * a * nu) * (1.0 - eta) * np.sqrt(-np.log(0.5 * np.maximum(1.0 - eta, 1e-300)))
    Y[-1] = 0.0
    clamped = 0
    update = np.inf
    for it in range(1, max_iter + 1):
        TY, _ = _integral_operator(eta, Y, m, a, nu, k, mu)
        Y_new = (1.0 - damping) * Y + damping * TY
        if np.any(Y_new[:-1] <= 0):
            clamped += 1
            if clamped > 10:
                raise NoConvergenceError("iterate repeatedly lost positivity", residual=update)
            Y_new[:-1] = np.maximum(Y_new[:-1], 0.5 * Y[:-1])
        update = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        if update <= fp_tol:
            break
    else:
        raise NoConvergenceError(f"no convergence in {max_iter} iterations", residual=update)

    TY, _ = _integral_operator(eta, Y, m, a, nu, k, mu)
    profile = CroccoProfile(
        eta_grid=eta, Y=Y, Yp=np.zeros_like(Y), source="integral_equation",
        m=m, a=a, nu=nu, variant=variant, iterations=it,
        residual=float(np.max(np.abs(TY - Y))),
    )
    return _with_derivative(profile, mu)


def _with_derivative(profile: CroccoProfile, mu: float) -> CroccoProfile:
    from dataclasses import replace

    return replace(profile, Yp=derivative_from_integral(profile, mu))


def integral_equation_residual(profile: CroccoProfile, mu: float = MU_DEFAULT) -> float:
    """Sup-norm of T(Y) - Y for any profile on its own grid."""
    k = _convection_factor(profile.variant, profile.m)
    TY, _ = _integral_operator(profile.eta_grid, profile.Y, profile.m, profile.a, profile.nu, k, mu)
    return float(np.max(np.abs(TY - profile.Y)))


def ode_residual(profile: CroccoProfile, eps_w: float = 1e-12, trim: float = 0.05) -> np.ndarray:
    """Finite-difference residual of the Crocco ODE weighted by 1/(Y + eps_w).

    Returned on interior nodes, excluding the last `trim` fraction of nodes.
    """
    eta, Y = profile.eta_grid, profile.Y
    c = wall_term_coefficient(profile.variant, profile.m)
    d1, d2 = grids.derivatives(eta, Y)
    sl = slice(1, len(eta) - 1)
    res = (
        profile.nu * Y[sl] ** 2 * d2[sl]
        + (eta[sl] ** 2 - 1.0) * profile.m * profile.a * d1[sl]
        - eta[sl] * c * profile.a * Y[sl]
    ) / (Y[sl] + eps_w)
    n_keep = int(round(len(res) * (1.0 - trim)))
    return res[:n_keep]


def envelope_fit(profile: CroccoProfile, mu: float = MU_DEFAULT, eta0: float = 0.5) -> SigmaEnvelope:
    """Tightest constants in the sigma-envelope sandwiches over interior nodes."""
    if not 0.0 < mu < 1.0:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    eta, Y = profile.eta_grid, profile.Y
    inner = slice(1, len(eta) - 1)
    e = eta[inner]
    s = sigma(e, mu)
    ratio = Y[inner] / ((1.0 - e) * s)
    slope = -profile.Yp[inner] / s
    _, d2 = grids.derivatives(eta, Y)
    curv = -Y[inner] * d2[inner]

    consts = {}
    for name, arr, pick in (
        ("M5", ratio, np.min), ("M6", ratio, np.max),
        ("M7", slope, np.max), ("M8", slope, np.min),
        ("M9", curv, np.max), ("M10", curv, np.min),
    ):
        val = float(pick(arr))
        if not np.isfinite(val) or val <= 0:
            node = int(np.argmin(arr) if pick is np.min else np.argmax(arr)) + 1
            raise InvariantViolation(f"{name} = {val:.4g} is not positive (node {node})", node=node)
        consts[name] = val

    upper = e >= eta0
    K = float(max(0.0, np.max(s[upper] - Y[inner][upper] / (consts["M6"] * (1.0 - e[upper])))))
    return SigmaEnvelope(mu=mu, K=K, eta0=eta0, **consts)


def envelope_bounds(profile: CroccoProfile, env: SigmaEnvelope):
    """M5 (1-eta) sigma and M6 (1-eta) sigma on the profile grid (0 at eta = 1)."""
    eta = profile.eta_grid
    lo = np.zeros_like(eta)
    hi = np.zeros_like(eta)
    s = sigma(eta[:-1], env.mu)
    lo[:-1] = env.M5 * (1.0 - eta[:-1]) * s
    hi[:-1] = env.M6 * (1.0 - eta[:-1]) * s
    return lo, hi

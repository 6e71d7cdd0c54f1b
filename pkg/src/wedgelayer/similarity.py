"""Self-similar wedge/cone profiles via the Falkner-Skan equation.

The planar profile solves nu f''' + (m+1)/2 a f f'' + m a (1 - f'^2) = 0 and the
axisymmetric one has (m+3)/2 in place of (m+1)/2.  Both reduce, with
f(z) = L g(z / L), to the normalized form

    g''' + g g'' + beta (1 - g'^2) = 0,

which is solved by shooting on g''(0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, FitWindowError, NoConvergenceError, QualitativeFailure

Variant = Literal["planar", "axisymmetric"]

Z_MAX = 12.0
FAR_FIELD_TOL = 1e-8
ODE_TOL = 1e-12


def _convection_factor(variant: str, m: float) -> float:
    if variant == "planar":
        return 0.5 * (m + 1.0)
    if variant == "axisymmetric":
        return 0.5 * (m + 3.0)
    raise DomainError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class SimilarityProblem:
    variant: Variant = "planar"
    m: float = 1.0
    a: float = 1.0
    nu: float = 1.0
    f0: float = 0.0
    f1: float = 0.0

    def __post_init__(self):
        _convection_factor(self.variant, self.m)
        if not self.m > 0:
            raise DomainError(f"m must be > 0, got {self.m}")
        if not self.a > 0:
            raise DomainError(f"a must be > 0, got {self.a}")
        if not self.nu > 0:
            raise DomainError(f"nu must be > 0, got {self.nu}")
        if not 0.0 <= self.f1 < 1.0:
            raise DomainError(f"f1 must lie in [0, 1), got {self.f1}")

    @property
    def convection(self) -> float:
        """Coefficient k in nu f''' + k a f f'' + m a (1 - f'^2) = 0."""
        return _convection_factor(self.variant, self.m)


@dataclass(frozen=True)
class ProfileSolution:
    z_grid: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    beta: float
    scale_L: float
    wall_shear: float
    f0: float = 0.0
    f1: float = 0.0
    # continuous extension of the final shooting trajectory, normalized variables
    dense: object = field(default=None, repr=False, compare=False)

    @property
    def z_max(self) -> float:
        return float(self.z_grid[-1])

    def fppp(self, z=None):
        """Third derivative from the ODE itself (normalized variables)."""
        if z is None:
            f, fp, fpp = self.f, self.fp, self.fpp
        else:
            f, fp, fpp = eval_profile(self, z)
        return -f * fpp - self.beta * (1.0 - fp**2)


@dataclass(frozen=True)
class AsymptoticFit:
    c1: float
    c2: float
    fit_window: tuple[float, float]
    rms_residual: float
    n_nodes: int


def wedge_angle(m: float) -> float:
    """Wedge opening angle pi * 2m/(m+1) for outer flow U ~ x**m."""
    if not m > 0:
        raise DomainError(f"m must be > 0, got {m}")
    return math.pi * 2.0 * m / (m + 1.0)


def normalize(problem: SimilarityProblem) -> tuple[float, float]:
    """Return (beta, scale_L) mapping the nu-form ODE onto Falkner-Skan form."""
    k = problem.convection
    beta = problem.m / k
    scale_L = math.sqrt(problem.nu / (k * problem.a))
    return beta, scale_L


def similarity_residual(problem: SimilarityProblem, sol: ProfileSolution, step: float = 1e-3) -> np.ndarray:
    """Residual of the dimensional ODE at interior nodes after undoing the normalization.

    f(z) = L g(z/L): f' = g', f'' = g''/L, f''' = g'''/L**2, all at s = z/L.
    g''' comes from a five-point difference of the stored trajectory rather
    than from the ODE, so the check is not circular.  Scaled by L**2/nu.
    """
    s = sol.z_grid[(sol.z_grid >= 2 * step) & (sol.z_grid <= sol.z_max - 2 * step)]

    def g2(t):
        return sol.dense(t)[2]

    g3 = (g2(s - 2 * step) - 8 * g2(s - step) + 8 * g2(s + step) - g2(s + 2 * step)) / (12 * step)
    g0, g1, g2s = sol.dense(s)
    L = sol.scale_L
    f, fp, fpp, fppp = L * g0, g1, g2s / L, g3 / L**2
    k = problem.convection
    res = problem.nu * fppp + k * problem.a * f * fpp + problem.m * problem.a * (1.0 - fp**2)
    return res * L**2 / problem.nu


def _rhs(beta):
    def rhs(z, y):
        return [y[1], y[2], -y[0] * y[2] - beta * (1.0 - y[1] * y[1])]

    return rhs


def _integrate(beta, f0, f1, shear, z_max, ode_tol, dense=False):
    def overshoot(z, y):
        return y[1] - 1.5

    overshoot.terminal = True

    def turned(z, y):
        return y[2]

    turned.terminal = True
    turned.direction = -1
    return solve_ivp(
        _rhs(beta),
        (0.0, z_max),
        [f0, f1, shear],
        method="DOP853",
        rtol=ode_tol,
        atol=ode_tol * 1e-2,
        events=None if dense else [overshoot, turned],
        dense_output=dense,
    )


def _miss(shear, beta, f0, f1, z_max, ode_tol):
    sol = _integrate(beta, f0, f1, shear, z_max, ode_tol)
    return sol.y[1, -1] - 1.0


def solve_falkner_skan(
    beta: float,
    f0: float = 0.0,
    f1: float = 0.0,
    z_max: float = Z_MAX,
    shoot_tol: float = FAR_FIELD_TOL,
    ode_tol: float = ODE_TOL,
    n_nodes: int = 1201,
    scale_L: float = 1.0,
) -> ProfileSolution:
    """Shoot on g''(0) until g'(z_max) -> 1.

    Trial shears that overshoot (g' > 1) or turn back (g'' < 0 while g' < 1)
    bracket the root; Brent's method (bisection-safeguarded secant) refines it.
    """
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if not 0.0 <= f1 < 1.0:
        raise DomainError(f"f1 must lie in [0, 1), got {f1}")

    lo, hi = 0.05, 3.0
    args = (beta, f0, f1, z_max, ode_tol)
    m_lo, m_hi = _miss(lo, *args), _miss(hi, *args)
    for _ in range(5):
        if m_lo < 0 < m_hi:
            break
        if m_lo >= 0:
            lo /= 2.0
            m_lo = _miss(lo, *args)
        if m_hi <= 0:
            hi *= 2.0
            m_hi = _miss(hi, *args)
    if not m_lo < 0 < m_hi:
        raise NoConvergenceError("wall shear not bracketed", bracket=(lo, hi))

    shear = brentq(_miss, lo, hi, args=args, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    traj = _integrate(beta, f0, f1, shear, z_max, ode_tol, dense=True)
    z = np.linspace(0.0, z_max, n_nodes)
    f, fp, fpp = traj.sol(z)

    # The far tail is dominated by round-off once 1 - g' reaches ~1e-14;
    # keep the leading stretch where the qualitative properties still hold.
    bad = (fpp <= 0) | (fp >= 1.0) | np.concatenate(([False], np.diff(fp) <= 0))
    bad[0] = False
    if np.any(bad):
        cut = int(np.argmax(bad))
        z, f, fp, fpp = z[:cut], f[:cut], fp[:cut], fpp[:cut]
    if 1.0 - fp[-1] > shoot_tol:
        raise QualitativeFailure(
            f"profile leaves the admissible band before reaching the far field "
            f"(1 - f' = {1.0 - fp[-1]:.3e} at z = {z[-1]:.3f})"
        )
    if np.any(fp[1:] <= 0) or np.any(fpp <= 0):
        raise QualitativeFailure("converged profile violates f'' > 0 or 0 < f' < 1")

    return ProfileSolution(
        z_grid=z,
        f=f,
        fp=fp,
        fpp=fpp,
        beta=float(beta),
        scale_L=float(scale_L),
        wall_shear=float(shear),
        f0=float(f0),
        f1=float(f1),
        dense=traj.sol,
    )


def solve_similarity(problem: SimilarityProblem, **kwargs) -> ProfileSolution:
    """Normalize the dimensional problem and solve it.

    problem.f0 is the dimensional wall stream-function value; the normalized
    shooting uses f0 / L.
    """
    beta, L = normalize(problem)
    return solve_falkner_skan(beta, f0=problem.f0 / L, f1=problem.f1, scale_L=L, **kwargs)


def eval_profile(sol: ProfileSolution, z):
    """(f, f', f'') at z by monotone cubic interpolation of the stored nodes.

    Beyond the last node the profile continues as f' = 1, f'' = 0.
    """
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0):
        raise DomainError("z must be non-negative")
    zg = sol.z_grid
    inside = z_arr <= zg[-1]
    f = np.empty_like(z_arr)
    fp = np.empty_like(z_arr)
    fpp = np.empty_like(z_arr)
    for src, dst in ((sol.f, f), (sol.fp, fp), (sol.fpp, fpp)):
        dst[inside] = PchipInterpolator(zg, src)(z_arr[inside])
    # exact node hits return the stored values bit for bit
    pos = np.clip(np.searchsorted(zg, z_arr), 0, len(zg) - 1)
    hit = inside & (zg[pos] == z_arr)
    f[hit], fp[hit], fpp[hit] = sol.f[pos[hit]], sol.fp[pos[hit]], sol.fpp[pos[hit]]
    out = ~inside
    f[out] = sol.f[-1] + (z_arr[out] - zg[-1])
    fp[out] = 1.0
    fpp[out] = 0.0
    if np.ndim(z) == 0:
        return float(f[0]), float(fp[0]), float(fpp[0])
    return f, fp, fpp


def asymptotic_fit(sol: ProfileSolution, lo: float = 1e-10, hi: float = 0.1) -> AsymptoticFit:
    """Least-squares fit of ln(1 - f') = ln c1 - (1 + 2 beta) ln z - z^2/2 - c2 z.

    Only nodes with lo < 1 - f' < hi enter; the known part of the model is moved
    to the left-hand side so the fit is linear in (ln c1, c2).
    """
    lo = max(lo, 1e-12)
    tail = 1.0 - sol.fp
    sel = (tail > lo) & (tail < hi) & (sol.z_grid > 0)
    n = int(np.count_nonzero(sel))
    if n < 20:
        raise FitWindowError(f"only {n} tail nodes in ({lo:g}, {hi:g}); need >= 20")
    z = sol.z_grid[sel]
    lhs = np.log(tail[sel]) + (1.0 + 2.0 * sol.beta) * np.log(z) + 0.5 * z**2
    design = np.column_stack((np.ones_like(z), -z))
    coef, *_ = np.linalg.lstsq(design, lhs, rcond=None)
    resid = lhs - design @ coef
    return AsymptoticFit(
        c1=float(np.exp(coef[0])),
        c2=float(coef[1]),
        fit_window=(float(z[0]), float(z[-1])),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        n_nodes=n,
    )

"""Physical velocities from a marched Crocco field.

At a station x with g = x**((m-1)/2), the Crocco map inverts as

    y(eta)  = int_0^eta ds / (g omega(x, s))
    u       = U eta,            u_y  = g U omega,       u_yy = g omega_eta u_y
    u_x     = eta U_x + omega U int_0^eta (omega_xi / omega^2 + (m-1)/(2 x omega)) ds
    v       = (-u u_x + nu u_yy + U U_x) / u_y

All quantities are first formed on the eta nodes of a slice and then carried
to a tensor (x, y) grid by cubic-spline interpolation in y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import grids
from .errors import DomainError
from .line_method import CroccoField
from .similarity import eval_profile

ETA_MASK = 0.999
TAIL_FIT_LEVEL = 1e-3
U_Y_FLOOR = 1e-12


@dataclass(frozen=True)
class Station:
    """Reconstruction on the eta nodes j = 0..N-1 of one slice."""

    x: float
    eta: np.ndarray
    omega: np.ndarray
    y: np.ndarray
    U: float
    U_x: float
    u: np.ndarray
    u_y: np.ndarray
    u_yy: np.ndarray
    u_x: np.ndarray
    v: np.ndarray
    tail: tuple  # ln(1 - eta) ~ polynomial in y (highest power first)


@dataclass(frozen=True)
class PhysicalField:
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    u: np.ndarray  # (nx, ny)
    v: np.ndarray
    eta: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray
    u_yy: np.ndarray
    U_of_x: np.ndarray
    mask: np.ndarray  # True where the cell is reported on
    extrapolated: np.ndarray
    variant: str = "planar"
    nu: float = 1.0
    r_of_x: Optional[np.ndarray] = None

    @property
    def one_minus_u_over_U(self) -> np.ndarray:
        return 1.0 - self.u / self.U_of_x[:, None]


@dataclass(frozen=True)
class DecayReport:
    x: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    r2: np.ndarray
    n_samples: np.ndarray
    M1: float
    M2: float
    M3: float
    M4: float
    empty: list = field(default_factory=list)

    @property
    def all_negative(self) -> bool:
        ok = ~np.isnan(self.slope)
        return bool(np.all(self.slope[ok] < 0)) and not self.empty


def _stretch(field: CroccoField, x: float) -> float:
    return float(x ** (0.5 * (field.scenario.m - 1.0)))


def _check_x(field: CroccoField, x: float) -> None:
    if not 0.0 < x <= field.attained_X + 1e-12:
        raise DomainError(f"x = {x} outside (0, {field.attained_X}]")


def y_of_eta(field: CroccoField, x: float) -> np.ndarray:
    """y at every eta node for station x (inf at eta = 1)."""
    _check_x(field, x)
    omega = field.omega_at(x)
    mu = field.scenario.solver.mu_env
    return grids.cumulative_inverse(field.eta_grid, omega, mu=mu) / _stretch(field, x)


def _omega_xi(field: CroccoField) -> np.ndarray:
    if len(field.xi_nodes) < 3:
        raise DomainError("need at least three slices for omega_xi")
    return np.gradient(field.omega, field.h, axis=0, edge_order=2)


def station(field: CroccoField, k: int, omega_xi=None) -> Station:
    """Reconstruct slice k >= 1 on its eta nodes (eta = 1 excluded)."""
    if not 1 <= k < len(field.xi_nodes):
        raise DomainError(f"slice index {k} outside 1..{len(field.xi_nodes) - 1}")
    s = field.scenario
    x = float(field.xi_nodes[k])
    eta = field.eta_grid
    mu = s.solver.mu_env
    w = field.omega[k]
    wx = (_omega_xi(field) if omega_xi is None else omega_xi)[k]
    g = _stretch(field, x)
    U, Ux = float(s.U(x)), float(s.U_x(x))

    w_eta, _ = grids.derivatives(eta, w)
    y = grids.cumulative_inverse(eta, w, mu=mu) / g

    ratio = np.empty_like(w)
    ratio[:-1] = wx[:-1] / w[:-1]
    ratio[-1] = ratio[-2]
    integrand = ratio + 0.5 * (s.m - 1.0) / x
    integral = grids.cumulative_inverse(eta, w, g=integrand, mu=mu)

    n = len(eta) - 1
    e, wn = eta[:n], w[:n]
    u = U * e
    u_y = g * U * wn
    u_yy = g * w_eta[:n] * u_y
    u_x = e * Ux + wn * U * integral[:n]
    v = (-u * u_x + s.nu * u_yy + U * Ux) / u_y

    sel = (1.0 - e) <= TAIL_FIT_LEVEL
    if np.count_nonzero(sel) < 4:
        sel = np.arange(n) >= n - 4
    tail = tuple(np.polyfit(y[:n][sel], np.log(1.0 - e[sel]), 2))
    return Station(x=x, eta=e, omega=wn, y=y[:n], U=U, U_x=Ux, u=u, u_y=u_y, u_yy=u_yy, u_x=u_x, v=v, tail=tail)


def _r_over(s, x):
    if s.variant != "axisymmetric":
        return 0.0
    return float((s.r1(x) + x * s.r1_x(x)) / s.r(x))


def _to_grid(st: Station, y_nodes: np.ndarray, r_x_over_r: float):
    """Interpolate one station to y_nodes; beyond the last node use the fitted tail."""
    inside = y_nodes <= st.y[-1]
    out = {}
    eta = np.empty_like(y_nodes)
    eta[inside] = CubicSpline(st.y, st.eta)(y_nodes[inside])
    eta[0] = 0.0 if y_nodes[0] == 0.0 else eta[0]
    top = ~inside
    poly = np.poly1d(st.tail)
    if np.any(top):
        # anchor the fitted tail to the last computed node so eta stays continuous
        shift = np.log(1.0 - st.eta[-1]) - poly(st.y[-1])
        eta[top] = 1.0 - np.exp(poly(y_nodes[top]) + shift)
    out["eta"] = eta
    out["u"] = st.U * eta
    for name in ("u_x", "u_y", "u_yy", "v"):
        arr = np.empty_like(y_nodes)
        arr[inside] = CubicSpline(st.y, getattr(st, name))(y_nodes[inside])
        out[name] = arr
    if np.any(top):
        dpoly = poly.deriv()
        one_minus = 1.0 - eta[top]
        out["u_y"][top] = -st.U * one_minus * dpoly(y_nodes[top])
        out["u_yy"][top] = -st.U * one_minus * (dpoly(y_nodes[top]) ** 2 + dpoly.deriv()(y_nodes[top]))
        out["u_x"][top] = st.u_x[-1] + (st.U_x - st.u_x[-1]) * (1.0 - one_minus / (1.0 - st.eta[-1]))
        # in the outer layer u ~ U, so continuity gives v_y ~ -(U_x + U r_x / r)
        out["v"][top] = st.v[-1] - (st.U_x + st.U * r_x_over_r) * (y_nodes[top] - st.y[-1])
    return out, top


def physical_grid(field: CroccoField, per_layer: int = 64, slices=None):
    """Common y spacing: the thinnest layer thickness y(eta=0.99) over per_layer."""
    ks = range(1, len(field.xi_nodes)) if slices is None else slices
    eta = field.eta_grid
    j99 = int(np.searchsorted(eta, 0.99))
    jtop = len(eta) - 2
    thick, top = [], []
    for k in ks:
        y = y_of_eta(field, float(field.xi_nodes[k]))
        thick.append(np.interp(0.99, eta[j99 - 1:j99 + 1], y[j99 - 1:j99 + 1]))
        top.append(y[jtop])
    delta = min(thick) / per_layer
    n = int(np.ceil(max(top) / delta))
    return delta * np.arange(n + 1)


def reconstruct(field: CroccoField, per_layer: int = 64, y_nodes=None, slices=None) -> PhysicalField:
    """PhysicalField on stations x_k = k h (k >= 1) and a common y grid."""
    s = field.scenario
    ks = list(range(1, len(field.xi_nodes))) if slices is None else list(slices)
    if y_nodes is None:
        y_nodes = physical_grid(field, per_layer, ks)
    y_nodes = np.asarray(y_nodes, dtype=float)
    wx = _omega_xi(field)
    names = ("eta", "u", "u_x", "u_y", "u_yy", "v")
    arrays = {n: np.empty((len(ks), len(y_nodes))) for n in names}
    extrap = np.zeros((len(ks), len(y_nodes)), dtype=bool)
    for i, k in enumerate(ks):
        st = station(field, k, wx)
        out, top = _to_grid(st, y_nodes, _r_over(s, st.x))
        for n in names:
            arrays[n][i] = out[n]
        extrap[i] = top
    x_nodes = field.xi_nodes[ks]
    mask = (arrays["eta"] <= ETA_MASK) & ~extrap & (arrays["u_y"] > U_Y_FLOOR)
    return PhysicalField(
        x_nodes=np.asarray(x_nodes, dtype=float),
        y_nodes=y_nodes,
        u=arrays["u"], v=arrays["v"], eta=arrays["eta"],
        u_x=arrays["u_x"], u_y=arrays["u_y"], u_yy=arrays["u_yy"],
        U_of_x=np.asarray(s.U(x_nodes), dtype=float),
        mask=mask,
        extrapolated=extrap,
        variant=s.variant,
        nu=s.nu,
        r_of_x=np.asarray(s.r(x_nodes), dtype=float) if s.variant == "axisymmetric" else None,
    )


def velocity_u(field: CroccoField, x_nodes=None, y_nodes=None) -> np.ndarray:
    """u on the tensor grid; x_nodes must be slice stations of the field."""
    return reconstruct(field, y_nodes=y_nodes, slices=_slice_indices(field, x_nodes)).u


def velocity_v(field: CroccoField, x_nodes=None, y_nodes=None) -> np.ndarray:
    return reconstruct(field, y_nodes=y_nodes, slices=_slice_indices(field, x_nodes)).v


def _slice_indices(field: CroccoField, x_nodes):
    if x_nodes is None:
        return None
    ks = np.rint(np.asarray(x_nodes, dtype=float) / field.h).astype(int)
    if np.any(np.abs(ks * field.h - np.asarray(x_nodes)) > 1e-9 * max(1.0, field.attained_X)):
        raise DomainError("x_nodes must coincide with slice stations k h")
    for k in ks:
        _check_x(field, float(k * field.h))
    return ks


def wall_velocity(field: CroccoField, k: int) -> float:
    """v(x_k, 0) from the Crocco data."""
    return float(station(field, k).v[0])


# Residuals --------------------------------------------------------------------

TIP_FRACTION = 0.25


def _interior(pf: PhysicalField, x_min: Optional[float] = None) -> np.ndarray:
    """Reported cells: unmasked with unmasked neighbours and x >= x_min.

    Near the tip the layer varies on the scale x itself, so a centered
    difference with step h carries a relative error ~ (h/x)^2 that stays O(1)
    at x ~ h under any refinement.  By default the first TIP_FRACTION of the
    extent is left out.
    """
    if x_min is None:
        x_min = TIP_FRACTION * float(pf.x_nodes[-1])
    core = np.zeros_like(pf.mask)
    core[1:-1, 1:-1] = pf.mask[1:-1, 1:-1] & pf.mask[:-2, 1:-1] & pf.mask[2:, 1:-1]
    core[1:-1, 1:-1] &= pf.mask[1:-1, :-2] & pf.mask[1:-1, 2:]
    core &= (pf.x_nodes >= x_min - 1e-12)[:, None]
    return core


def continuity_residual(pf: PhysicalField, scenario=None, x_min: Optional[float] = None):
    """Centered-difference divergence normalized by U(x)/x.

    Planar: u_x + v_y.  Axisymmetric: ((r u)_x + (r v)_y) / r.
    Returns (max over reported interior cells, full residual array with NaN
    outside them).
    """
    x, y = pf.x_nodes, pf.y_nodes
    res = np.full(pf.u.shape, np.nan)
    if pf.u.shape[0] < 3 or pf.u.shape[1] < 3:
        return 0.0, res
    r = pf.r_of_x if pf.variant == "axisymmetric" else np.ones_like(x)
    ru = r[:, None] * pf.u
    dx = x[2:] - x[:-2]
    dy = y[2:] - y[:-2]
    div = (ru[2:, 1:-1] - ru[:-2, 1:-1]) / dx[:, None] / r[1:-1, None]
    div = div + (pf.v[1:-1, 2:] - pf.v[1:-1, :-2]) / dy[None, :]
    scale = np.where(pf.U_of_x[1:-1] > 0, pf.U_of_x[1:-1] / x[1:-1], 1.0)
    res[1:-1, 1:-1] = div / scale[:, None]
    core = _interior(pf, x_min)
    res[~core] = np.nan
    vals = np.abs(res[core])
    return (float(vals.max()) if vals.size else 0.0), res


def momentum_residual(pf: PhysicalField, scenario=None, x_min: Optional[float] = None):
    """u u_x + v u_y - U U_x - nu u_yy by centered differences, over U^2/x."""
    x, y = pf.x_nodes, pf.y_nodes
    res = np.full(pf.u.shape, np.nan)
    if pf.u.shape[0] < 3 or pf.u.shape[1] < 3:
        return 0.0, res
    u = pf.u
    dx = x[2:] - x[:-2]
    hy = y[1] - y[0]
    ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / dx[:, None]
    uy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * hy)
    uyy = (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy**2
    U = pf.U_of_x[1:-1]
    Ux = np.gradient(pf.U_of_x, x, edge_order=2)[1:-1]
    core_u = u[1:-1, 1:-1]
    mom = core_u * ux + pf.v[1:-1, 1:-1] * uy - (U * Ux)[:, None] - pf.nu * uyy
    scale = np.where(U > 0, U**2 / x[1:-1], 1.0)
    res[1:-1, 1:-1] = mom / scale[:, None]
    core = _interior(pf, x_min)
    res[~core] = np.nan
    vals = np.abs(res[core])
    return (float(vals.max()) if vals.size else 0.0), res


def chain_rule_gap(pf: PhysicalField) -> float:
    """sup |u_yy(formula) - D_yy u| / sup |u_yy(formula)| over reported rows."""
    hy = pf.y_nodes[1] - pf.y_nodes[0]
    u = pf.u
    dyy = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / hy**2
    ref = pf.u_yy[:, 1:-1]
    keep = pf.mask[:, 1:-1] & pf.mask[:, 2:] & pf.mask[:, :-2] & (pf.eta[:, 1:-1] <= 0.99)
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(dyy - ref)[keep]) / np.max(np.abs(ref)[keep]))


# asymptotic properties ---------------------------------------------------------

def decay_check(pf: PhysicalField, scenario, lo: float = 1e-8, hi: float = 0.1, min_samples: int = 10) -> DecayReport:
    """Regress ln(1 - u/U) on x^(m-1) y^2 per station over computed (not extrapolated) cells."""
    m = scenario.m
    nx = len(pf.x_nodes)
    slope = np.full(nx, np.nan)
    icpt = np.full(nx, np.nan)
    r2 = np.full(nx, np.nan)
    count = np.zeros(nx, dtype=int)
    empty = []
    tails = pf.one_minus_u_over_U
    samples = []
    for i, x in enumerate(pf.x_nodes):
        t = tails[i]
        sel = (t > lo) & (t < hi) & ~pf.extrapolated[i]
        count[i] = int(np.count_nonzero(sel))
        if count[i] < min_samples:
            empty.append(float(x))
            continue
        s = x ** (m - 1.0) * pf.y_nodes[sel] ** 2
        lt = np.log(t[sel])
        b, c = np.polyfit(s, lt, 1)
        fit = b * s + c
        ss_res = float(np.sum((lt - fit) ** 2))
        ss_tot = float(np.sum((lt - lt.mean()) ** 2))
        slope[i], icpt[i] = b, c
        r2[i] = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        samples.append((s, t[sel]))
    ok = ~np.isnan(slope)
    if not np.any(ok):
        return DecayReport(pf.x_nodes, slope, icpt, r2, count, np.nan, np.nan, np.nan, np.nan, empty)
    M2 = float(np.max(-slope[ok]))
    M4 = float(np.min(-slope[ok]))
    # amplitudes making both Gaussian bounds hold on every sampled cell
    M1 = float(min(np.min(t * np.exp(M2 * s)) for s, t in samples))
    M3 = float(max(np.max(t * np.exp(M4 * s)) for s, t in samples))
    return DecayReport(pf.x_nodes, slope, icpt, r2, count, M1, M2, M3, M4, empty)


def similarity_gap(field: CroccoField, k: int = 1, eta_max: float = 0.99) -> float:
    """sup |u/U - f'(y x^((m-1)/2))| at station x_k over nodes with u/U <= eta_max.

    f' is the normalized similarity profile, so z is divided by its length scale.
    """
    st = station(field, k)
    sol = field_similarity(field)
    z = st.y * _stretch(field, st.x) / sol.scale_L
    keep = st.eta <= eta_max
    _, fp, _ = eval_profile(sol, z[keep])
    return float(np.max(np.abs(st.eta[keep] - fp)))


def field_similarity(field: CroccoField):
    """The similarity solution behind the field's slice-0 profile."""
    from .line_method import similarity_problem
    from .similarity import solve_similarity

    return solve_similarity(similarity_problem(field.scenario))

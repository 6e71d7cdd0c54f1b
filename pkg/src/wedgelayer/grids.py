"""Graded eta-grids, finite-difference stencils and envelope-weighted quadrature.

Near eta = 1 the Crocco unknowns behave like (1 - eta) * sigma(eta) with
sigma = sqrt(-ln(mu (1 - eta))).  Integrals of 1/omega are therefore done by
product integration against the exactly integrable weights

    w1(s) = 1 / ((1 - s) sigma(s)),   int w1 = 2 sigma
    w2(s) = 1 / sigma(s),             int_s^1 w2 = sqrt(pi)/mu * erfc(sigma(s))

with the smooth remainder q = (1 - s) sigma / omega treated as piecewise linear.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from .errors import DomainError

MU_DEFAULT = 0.9 * math.exp(-0.5)


def graded_grid(n: int, p: float = 2.0) -> np.ndarray:
    """Nodes eta_j = 1 - (1 - j/n)**p, j = 0..n, clustered toward eta = 1."""
    if n < 4:
        raise DomainError(f"need at least 4 cells, got n={n}")
    if p < 1.0:
        raise DomainError(f"grading exponent must be >= 1, got p={p}")
    j = np.arange(n + 1, dtype=float)
    eta = 1.0 - (1.0 - j / n) ** p
    eta[0] = 0.0
    eta[-1] = 1.0
    return eta


def sigma(eta, mu: float = MU_DEFAULT):
    """sqrt(-ln(mu * (1 - eta))); diverges at eta = 1."""
    if not 0.0 < mu < 1.0:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(eta_arr < 0.0) or np.any(eta_arr > 1.0):
        raise DomainError("eta must lie in [0, 1)")
    if np.any(eta_arr == 1.0):
        raise DomainError("sigma diverges at eta = 1")
    out = np.sqrt(-np.log(mu * (1.0 - eta_arr)))
    return float(out) if np.ndim(eta) == 0 else out


def _sigma_unchecked(eta, mu):
    with np.errstate(divide="ignore"):
        return np.sqrt(-np.log(mu * (1.0 - eta)))


def tail_weight_integral(eta, mu: float = MU_DEFAULT):
    """int_eta^1 ds / sigma(s), exact."""
    s = _sigma_unchecked(np.asarray(eta, dtype=float), mu)
    return math.sqrt(math.pi) / mu * erfc(s)


def envelope_amplitude(eta, omega, mu: float = MU_DEFAULT):
    """q = (1 - eta) sigma / omega on all nodes; the value at eta = 1 is
    copied from the last interior node."""
    q = np.empty_like(omega, dtype=float)
    inner = slice(0, len(eta) - 1)
    q[inner] = (1.0 - eta[inner]) * _sigma_unchecked(eta[inner], mu) / omega[inner]
    q[-1] = q[-2]
    return q


def cumulative_inverse(eta, omega, g=None, mu: float = MU_DEFAULT):
    """I_j = int_0^{eta_j} g(s) / omega(s) ds for j < n; I_n = inf.

    g defaults to 1.  omega must be positive on [0, 1) nodes.
    """
    q = envelope_amplitude(eta, omega, mu)
    gq = q if g is None else np.asarray(g, dtype=float) * q
    sig = _sigma_unchecked(eta[:-1], mu)
    cell = 0.5 * (gq[:-2] + gq[1:-1]) * 2.0 * np.diff(sig)
    out = np.empty(len(eta))
    out[0] = 0.0
    out[1:-1] = np.cumsum(cell)
    out[-1] = np.inf
    return out


def tail_integral(eta, omega, g=None, mu: float = MU_DEFAULT):
    """T_j = int_{eta_j}^1 (1 - s) g(s) / omega(s) ds, with T_n = 0."""
    q = envelope_amplitude(eta, omega, mu)
    gq = q if g is None else np.asarray(g, dtype=float) * q
    e = tail_weight_integral(eta, mu)
    e[-1] = 0.0
    cell = 0.5 * (gq[:-1] + gq[1:]) * (e[:-1] - e[1:])
    out = np.zeros(len(eta))
    out[:-1] = np.cumsum(cell[::-1])[::-1]
    return out


def fd_weights(eta):
    """Three-point first/second derivative weights at interior nodes.

    Returns (d1, d2), each of shape (n-1, 3), acting on (j-1, j, j+1).
    """
    hm = np.diff(eta)[:-1]
    hp = np.diff(eta)[1:]
    s = hm + hp
    d1 = np.column_stack((-hp / (hm * s), (hp - hm) / (hm * hp), hm / (hp * s)))
    d2 = np.column_stack((2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s)))
    return d1, d2


def wall_weights(eta):
    """Second-order one-sided first-derivative weights at eta_0 on (0, 1, 2)."""
    h1 = eta[1] - eta[0]
    h2 = eta[2] - eta[0]
    return np.array([-(h1 + h2) / (h1 * h2), h2 / (h1 * (h2 - h1)), -h1 / (h2 * (h2 - h1))])


def derivatives(eta, values):
    """First and second derivatives at interior nodes, plus one-sided wall slope."""
    d1, d2 = fd_weights(eta)
    stencil = np.column_stack((values[:-2], values[1:-1], values[2:]))
    first = np.empty(len(eta))
    second = np.full(len(eta), np.nan)
    first[1:-1] = np.sum(d1 * stencil, axis=1)
    second[1:-1] = np.sum(d2 * stencil, axis=1)
    first[0] = wall_weights(eta) @ values[:3]
    first[-1] = np.nan
    return first, second

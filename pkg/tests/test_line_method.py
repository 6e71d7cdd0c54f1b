import numpy as np
import pytest

from wedgelayer import grids
from wedgelayer.crocco_profile import solve_integral_equation
from wedgelayer.errors import GeometryError
from wedgelayer.line_method import (
    Coefficients,
    SliceOperator,
    assemble_slice_residual,
    coefficients,
    march,
    mu_schedule,
    sandwich_check,
    solve_slice,
)
from wedgelayer.scenario import Scenario, SolverOptions

from conftest import PERTURBED, marched

TOL = SolverOptions().newton_tol


# coefficients ----------------------------------------------------------------

@pytest.mark.parametrize("m", [0.2, 0.5, 1.0, 2.0])
def test_coefficients_at_tip(m):
    c = coefficients(Scenario(m=m, a=1.7), 0.0)
    assert (c.A, c.B, c.v1) == (0.0, pytest.approx(m * 1.7), 0.0)
    assert c.C == pytest.approx((3 * m - 1) / 2 * 1.7)


def test_coefficients_linear_a1():
    s = Scenario(m=0.5, a1_coeffs=(0.3,))
    for xi in (0.1, 0.25, 0.5):
        c = coefficients(s, xi)
        assert c.B == pytest.approx(0.5 + (0.5 + 1) * 0.3 * xi, rel=1e-14)
        assert c.A == pytest.approx(xi * (1 + 0.3 * xi), rel=1e-14)


def test_coefficients_axisymmetric_constant_radius():
    s = Scenario(variant="axisymmetric", m=2.0, a1_coeffs=(0.2,), c=0.5)
    xi = 0.3
    V, Vx = 1 + 0.2 * xi, 0.2
    assert coefficients(s, xi).C == pytest.approx(1.5 * (2.0 - 1) * V + xi * Vx, rel=1e-14)


def test_coefficients_axisymmetric_radius_term():
    s = Scenario(variant="axisymmetric", m=1.0, r1_coeffs=(0.4,), c=0.8)
    xi = 0.25
    r1, r1x = 0.8 + 0.4 * xi, 0.4
    assert coefficients(s, xi).C == pytest.approx(0.0 - xi * r1x / r1, rel=1e-14)


def test_coefficients_planar_style_override():
    s = Scenario(variant="axisymmetric", m=2.0).with_(axisym_c_style="planar")
    assert coefficients(s, 0.0).C == pytest.approx(2.5)


def test_coefficients_geometry_error():
    # a valid scenario queried beyond its extent, where r1 turns negative
    s = Scenario(variant="axisymmetric", m=1.0, r1_coeffs=(-1.0,), c=0.5, X=0.4)
    with pytest.raises(GeometryError):
        coefficients(s, 0.6)


# residual assembly -----------------------------------------------------------

@pytest.fixture(scope="module")
def y_profile():
    return marched("planar", 1.0).Y_profile


def test_self_similar_residual_is_crocco_ode(y_profile):
    eta, Y = y_profile.eta_grid, y_profile.Y
    c = coefficients(Scenario(m=1.0), 0.2)
    R = assemble_slice_residual(Y, Y, c, 0.01, 0.0, 3.0, eta, 1.0)
    d1, d2 = grids.derivatives(eta, Y)
    e = eta[1:-1]
    expected = Y[1:-1] ** 2 * d2[1:-1] + (e**2 - 1) * c.B * d1[1:-1] - e * c.C * Y[1:-1]
    np.testing.assert_allclose(R[1:-1], expected, rtol=1e-12, atol=1e-14)
    # and that residual is pure discretization error
    keep = slice(1, int(0.95 * len(eta)))
    assert np.max(np.abs(R[keep]) / Y[keep]) <= 1e-3


def test_c_sign_flips_reaction_term(y_profile):
    eta, Y = y_profile.eta_grid, y_profile.Y
    prev = 0.97 * Y
    base = Coefficients(A=0.1, B=1.1, C=0.0, v1=0.02)
    pos = Coefficients(A=0.1, B=1.1, C=0.7, v1=0.02)
    neg = Coefficients(A=0.1, B=1.1, C=-0.7, v1=0.02)
    r0, rp, rn = (assemble_slice_residual(Y, prev, c, 0.01, 1e-4, 0.0, eta, 1.0) for c in (base, pos, neg))
    np.testing.assert_allclose(rp - r0, -(rn - r0), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose((rp - r0)[1:-1], -eta[1:-1] * 0.7 * Y[1:-1], rtol=1e-12, atol=1e-15)


def test_large_eps_dominates(y_profile):
    eta = y_profile.eta_grid
    w = 1e-4 * (1 - eta) * (1 + eta)
    c = coefficients(Scenario(m=1.0), 0.1)
    eps = 1e8
    R = assemble_slice_residual(w, w, c, 0.01, eps, 0.0, eta, 1.0)
    _, d2 = grids.derivatives(eta, w)
    np.testing.assert_allclose(R[1:-1], eps * d2[1:-1], rtol=1e-6)


def test_boundary_rows(y_profile):
    eta = y_profile.eta_grid
    w = 0.5 * (1 - eta**2) + 0.1
    w[-1] = 0.3
    c = Coefficients(A=0.0, B=0.8, C=0.1, v1=0.05)
    R = assemble_slice_residual(w, w, c, 0.01, 0.0, 0.0, eta, 2.0)
    assert R[-1] == pytest.approx(0.3)
    # w'(0) = 0 exactly for this quadratic, second-order one-sided stencil
    assert R[0] == pytest.approx(-0.05 * 0.6 + 0.8, abs=1e-10)


def test_jacobian_matches_finite_differences():
    eta = grids.graded_grid(24)
    op = SliceOperator(eta, 0.7)
    w = (1 - eta) * (1.2 + 0.3 * eta)
    prev = 0.95 * w
    c = Coefficients(A=0.05, B=0.9, C=0.3, v1=0.1)
    ab = op.jacobian_banded(w, c, 0.01, eps=1e-3, mu_k=2.0)
    n = len(eta)
    J = np.zeros((n, n))
    for j in range(n):
        for i in range(max(0, j - 2), min(n, j + 2)):
            J[i, j] = ab[2 + i - j, j]
    Jfd = np.zeros_like(J)
    for j in range(n):
        d = np.zeros(n)
        d[j] = 1e-7
        Jfd[:, j] = (op.residual(w + d, prev, c, 0.01, 1e-3, 2.0) - op.residual(w - d, prev, c, 0.01, 1e-3, 2.0)) / 2e-7
    np.testing.assert_allclose(J, Jfd, rtol=1e-6, atol=1e-5)


# slice solves ----------------------------------------------------------------

def test_first_slice_is_discrete_crocco_problem(y_profile):
    eta, Y = y_profile.eta_grid, y_profile.Y
    c0 = coefficients(Scenario(m=1.0), 0.0)
    w_sim, d = solve_slice(Y, c0, 0.01, 0.0, eta, 1.0, continuation=False)
    ie = solve_integral_equation(1.0, 1.0, 1.0, eta)
    w_ie, _ = solve_slice(Y, c0, 0.01, 0.0, eta, 1.0, warm_start=ie.Y, continuation=False)
    assert d.residual <= TOL
    assert np.max(np.abs(w_sim - w_ie)) <= 10 * TOL
    # the discrete slice and the continuum profile differ by O(N^-2) only
    assert np.max(np.abs(w_sim - Y)) <= 1.0 / len(eta) ** 2


def _manufactured(target, n, c):
    eta = grids.graded_grid(n)
    w0, w1, w2 = target(eta)
    prev = 0.9 * w0
    h = 0.01
    src = np.zeros_like(eta)
    e = eta[1:-1]
    src[1:-1] = (
        w0[1:-1] ** 2 * w2[1:-1] - e * c.A / h * (w0[1:-1] - prev[1:-1])
        + (e**2 - 1) * c.B * w1[1:-1] - e * c.C * w0[1:-1]
    )
    src[0] = w0[0] * w1[0] - c.v1 * w0[0] + c.B
    w, d = solve_slice(prev, c, h, 0.0, eta, 1.0, warm_start=1.05 * w0, continuation=False, source=src)
    return np.max(np.abs(w - w0))


MMS_COEFFS = Coefficients(A=0.105, B=0.65, C=0.3, v1=0.055)


def test_manufactured_quadratic_is_exact():
    # second-order stencils are exact on (1 - eta)(1 + eta/2)
    target = lambda x: ((1 - x) * (1 + x / 2), -0.5 - x, -np.ones_like(x))
    for n in (64, 256):
        assert _manufactured(target, n, MMS_COEFFS) <= 1e-11


def test_manufactured_second_order():
    target = lambda x: ((1 - x) * np.exp(x), -x * np.exp(x), -(1 + x) * np.exp(x))
    errs = np.array([_manufactured(target, n, MMS_COEFFS) for n in (64, 128, 256, 512)])
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(orders >= 1.8)


# marching --------------------------------------------------------------------

def test_self_similar_march(field_m1):
    assert field_m1.complete and field_m1.attained_X == pytest.approx(0.5)
    drift = np.max(np.abs(field_m1.omega - field_m1.omega[0]))
    assert drift <= 10 * TOL
    assert np.max(np.abs(field_m1.omega[0] - field_m1.Y_profile.Y)) <= 1.0 / 512**2


def test_field_invariants(field_pert_half):
    f = field_pert_half
    assert f.complete and f.attained_X == pytest.approx(0.5)
    assert np.all(f.omega[:, :-1] > 0)
    assert np.all(f.omega[:, -1] == 0)
    assert max(d.residual for d in f.slice_diag) <= TOL
    op = SliceOperator(f.eta_grid, 1.0)
    for k in (1, len(f.xi_nodes) - 1):
        c = coefficients(f.scenario, f.xi_nodes[k])
        R = op.residual(f.omega[k], f.omega[k - 1], c, f.h, 0.0, f.mu_schedule[k])
        w = f.omega[k]
        assert abs(R[0]) <= TOL * max(1.0, c.B)  # wall Robin row


def test_mu_schedule_branches():
    assert np.all(mu_schedule(Scenario(m=0.5), 5) == 0)
    # sup of B = 2 + 0.3 xi over the marched range [0, 5h]
    mu = mu_schedule(Scenario(m=2.0, a1_coeffs=(0.1,)), 5)
    assert mu[0] == 0 and np.all(mu[1:] == pytest.approx(2 * (2.0 + 0.3 * 0.05)))
    mu = mu_schedule(Scenario(m=1.0).with_(mu_star=7.0), 3)
    assert list(mu) == [0.0, 7.0, 7.0, 7.0]


def test_omega_at_interpolates(field_pert_half):
    f = field_pert_half
    mid = f.omega_at(0.105)
    np.testing.assert_allclose(mid, 0.5 * (f.omega[10] + f.omega[11]), rtol=1e-12)
    with pytest.raises(ValueError):
        f.omega_at(0.7)


def test_slice_stream_records():
    seen = []
    march(Scenario(m=0.5, X=0.05, N=128, **PERTURBED), on_slice=seen.append)
    assert [r["k"] for r in seen] == list(range(6))
    assert set(seen[0]) == {"k", "xi", "newton_iterations", "residual", "min_omega", "eps"}


def test_failure_truncates_field():
    f = march(Scenario(m=0.5, a1_coeffs=(-1.9,)))
    assert not f.complete
    assert "slice 23" in f.failure
    assert f.attained_X == pytest.approx(0.22)
    assert len(f.omega) == 23 and np.all(f.omega[:, :-1] > 0)


@pytest.mark.parametrize("variant, m", [("planar", 0.5), ("planar", 2.0), ("axisymmetric", 1.0)])
def test_uniqueness_probe(variant, m):
    base = marched(variant, m, True)
    noisy = march(base.scenario, warm_noise=0.1)
    assert noisy.complete
    assert np.max(np.abs(noisy.omega - base.omega)) <= 10 * TOL


def test_eps_continuation_monotone(field_pert_half):
    f = field_pert_half
    for d in f.slice_diag[1:]:
        eps0 = d.eps_path[0][0]
        changes = [c for e, _, _, c in d.eps_path[1:] if e <= eps0 / 16]
        assert np.all(np.diff(changes) < 0), d.k


def test_consistency_constant_stable():
    scaled = []
    for n in (128, 256, 512):
        f = march(Scenario(m=1.0, N=n, X=0.05))
        scaled.append(np.max(np.abs(f.omega - f.Y_profile.Y)) * n**2)
    assert max(scaled) / min(scaled) <= 1.2


@pytest.mark.slow
def test_h_refinement_perturbed():
    base = Scenario(m=0.5, **PERTURBED)
    runs = {h: march(base.with_(h=h)) for h in (0.02, 0.01, 0.005)}
    X = 0.5

    def at(h):
        return np.array([runs[h].omega_at(x) for x in np.linspace(0, X, 26)])

    d1 = np.max(np.abs(at(0.02) - at(0.01)))
    d2 = np.max(np.abs(at(0.01) - at(0.005)))
    assert d1 / d2 >= 1.8


# sandwich estimates ----------------------------------------------------------

def test_sandwich_self_similar(field_m1):
    rep = sandwich_check(field_m1)
    assert rep.n_violations == 0
    assert max(rep.M11, rep.M12, rep.M13) <= 1e-6
    assert rep.M19 > 0


def test_sandwich_self_similar_shrinks_with_tolerance():
    loose = march(Scenario(m=1.0, X=0.1).with_(newton_tol=1e-6))
    tight = march(Scenario(m=1.0, X=0.1).with_(newton_tol=1e-11))
    a, b = sandwich_check(loose), sandwich_check(tight)
    assert max(b.M11, b.M12) <= max(a.M11, a.M12)


def test_sandwich_perturbed(field_pert_half):
    rep = sandwich_check(field_pert_half)
    assert rep.n_violations == 0
    assert rep.derivative_branch == "Y_eta"
    for val in (rep.M11, rep.M12, rep.M13, rep.M14, rep.M15):
        assert np.isfinite(val) and val >= 0
    assert rep.M12 > 0 and rep.M13 > 0
    assert 0 < rep.M19 <= rep.M18 < np.inf


def test_sandwich_small_m_uses_sigma_band():
    f = marched("planar", 0.2, True)
    rep = sandwich_check(f)
    assert rep.derivative_branch == "sigma"
    assert rep.n_violations == 0
    assert 0 < rep.M17 <= rep.M16 < np.inf


def test_lipschitz_in_xi(field_pert_half):
    f = field_pert_half
    rep = sandwich_check(f)
    Y = f.omega[0]
    inner = slice(1, -1)
    quot = np.abs(np.diff(f.omega, axis=0))[:, inner] / f.h
    assert np.all(quot <= rep.M13 * Y[inner] * (1 + 1e-9))

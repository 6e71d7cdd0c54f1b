import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgelayer import grids
from wedgelayer.errors import DomainError


@given(n=st.integers(4, 400), p=st.floats(1.0, 4.0))
def test_graded_grid_endpoints_and_monotone(n, p):
    eta = grids.graded_grid(n, p)
    assert eta[0] == 0.0 and eta[-1] == 1.0
    assert np.all(np.diff(eta) > 0)


def test_grading_clusters_toward_top():
    eta = grids.graded_grid(64, 2.0)
    d = np.diff(eta)
    assert d[-1] < d[0] / 50


@pytest.mark.parametrize("bad", [dict(n=3), dict(n=10, p=0.5)])
def test_graded_grid_rejects(bad):
    with pytest.raises(DomainError):
        grids.graded_grid(**bad)


def test_sigma_domain():
    with pytest.raises(DomainError):
        grids.sigma(1.0)
    with pytest.raises(DomainError):
        grids.sigma(0.5, mu=1.2)
    assert grids.sigma(0.0, mu=math.exp(-1.0)) == pytest.approx(1.0)


def test_tail_weight_integral_matches_quadrature():
    from scipy.integrate import quad

    mu = grids.MU_DEFAULT
    for e in (0.0, 0.3, 0.9, 0.999):
        ref, _ = quad(lambda s: 1.0 / grids.sigma(s, mu), e, 1.0, limit=200)
        assert grids.tail_weight_integral(e, mu) == pytest.approx(ref, rel=1e-7)


def test_cumulative_inverse_exact_on_envelope():
    # omega = (1 - eta) sigma makes q constant, so the product rule is exact
    mu = grids.MU_DEFAULT
    eta = grids.graded_grid(40)
    omega = np.zeros_like(eta)
    omega[:-1] = (1 - eta[:-1]) * grids.sigma(eta[:-1], mu)
    got = grids.cumulative_inverse(eta, omega, mu=mu)
    want = 2 * (grids.sigma(eta[:-1], mu) - grids.sigma(0.0, mu))
    assert np.allclose(got[:-1], want, rtol=1e-13, atol=1e-14)
    assert np.isinf(got[-1])


def test_tail_integral_converges_second_order():
    from scipy.integrate import quad

    mu = grids.MU_DEFAULT
    f = lambda s: (1 - s) * (1 + s) * grids.sigma(s, mu)  # noqa: E731
    ref, _ = quad(lambda s: (1 - s) / f(s), 0.0, 1.0, limit=400)
    errs = []
    for n in (32, 64, 128):
        eta = grids.graded_grid(n)
        om = np.zeros_like(eta)
        om[:-1] = f(eta[:-1])
        errs.append(abs(grids.tail_integral(eta, om, mu=mu)[0] - ref))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


@settings(max_examples=50)
@given(
    cuts=st.lists(st.floats(0.01, 0.99), min_size=3, max_size=30, unique=True),
    c=st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)),
)
def test_fd_weights_exact_for_quadratics(cuts, c):
    eta = np.concatenate(([0.0], np.sort(cuts), [1.0]))
    if np.min(np.diff(eta)) < 1e-3:
        return
    vals = c[0] + c[1] * eta + c[2] * eta**2
    d1, d2 = grids.derivatives(eta, vals)
    assert np.allclose(d1[:-1], c[1] + 2 * c[2] * eta[:-1], atol=1e-8)
    assert np.allclose(d2[1:-1], 2 * c[2], atol=1e-6)

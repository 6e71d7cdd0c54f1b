import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wedgelayer.errors import GeometryError, ValidationError
from wedgelayer.scenario import Scenario, SolverOptions, dump_scenario, parse_scenario

MINIMAL = """
[flow]
m = 1.0
a = 1.0
nu = 1.0

[grid]
X = 0.5
"""


def test_minimal_config_defaults():
    s = parse_scenario(MINIMAL)
    assert s.variant == "planar" and s.m == 1.0 and s.X == 0.5
    assert s.a1_coeffs == () and s.v1_coeffs == () and s.b == 0.0
    assert s.self_similar
    x = np.linspace(0, 0.5, 7)
    np.testing.assert_array_equal(s.V(x), np.ones_like(x))
    np.testing.assert_array_equal(s.v1(x), np.zeros_like(x))
    assert s.solver == SolverOptions()


def test_perturbation_polynomials():
    s = parse_scenario(MINIMAL + "[perturbation]\na1 = [0.1, -0.2]\nv1 = [0.05]\nb = -0.3\n")
    x = 0.4
    assert s.V(x) == pytest.approx(1 + x * (0.1 - 0.2 * x))
    assert s.V_x(x) == pytest.approx(0.1 - 0.4 * x)
    assert s.v1(x) == pytest.approx(-0.3 + 0.05 * x)
    assert s.v0(x) == pytest.approx(s.v1(x))  # m = 1 removes the x power
    assert s.U_x(x) == pytest.approx(s.V(x) + x * s.V_x(x))


# One fixture per assumption clause, each mapped to its own message.
INVALID = {
    "m_positive": ("[flow]\nm = 0.0\n", ValidationError, "m must be > 0"),
    "a_positive": ("[flow]\na = -1.0\n", ValidationError, "a must be > 0"),
    "nu_positive": ("[flow]\nnu = 0.0\n", ValidationError, "nu must be > 0"),
    "variant": ('[flow]\nvariant = "conical"\n', ValidationError, "variant must be"),
    "X_positive": ("[grid]\nX = 0.0\n", ValidationError, "X must be > 0"),
    "h_range": ("[grid]\nX = 0.5\nh = 0.6\n", ValidationError, "h must satisfy"),
    "N_min": ("[grid]\nN = 4\n", ValidationError, "N must be >= 8"),
    "p_min": ("[grid]\np = 0.5\n", ValidationError, "p must be >= 1"),
    "a1_bound": ("[perturbation]\na1 = [-3.0]\n", ValidationError, "a1 bound N1"),
    "coeff_finite": ("[perturbation]\nv1 = [inf]\n", ValidationError, "v1 coefficients must be finite"),
    "b_sign": ("[perturbation]\nb = 0.1\n", ValidationError, "b must be <= 0"),
    "suction_small_m": ("[flow]\nm = 0.5\n[perturbation]\nb = -0.1\n", ValidationError, "b<0 requires m >= 1"),
    "c_zero": ('[flow]\nvariant = "axisymmetric"\n[perturbation]\nc = 0.0\n', GeometryError, "c must satisfy"),
    "c_large": ('[flow]\nvariant = "axisymmetric"\n[perturbation]\nc = 1.5\n', GeometryError, "c must satisfy"),
    "r1_positive": (
        '[flow]\nvariant = "axisymmetric"\n[perturbation]\nc = 0.2\nr1 = [-1.0]\n',
        GeometryError, "r1 must stay positive",
    ),
    "r1_planar": ("[perturbation]\nr1 = [0.1]\n", ValidationError, "only meaningful for the axisymmetric"),
    "c_style": ('[solver]\naxisym_c_style = "other"\n', ValidationError, "axisym_c_style"),
}


@pytest.mark.parametrize("name", sorted(INVALID))
def test_validation_errors(name):
    text, exc, message = INVALID[name]
    with pytest.raises(exc, match=message.replace("(", r"\(")):
        parse_scenario(text)


def test_validation_messages_are_distinct():
    messages = {(v[1], v[2]) for k, v in INVALID.items() if k not in ("c_large",)}
    assert len(messages) == len(INVALID) - 1


def test_geometry_error_is_a_validation_error():
    assert issubclass(GeometryError, ValidationError)


@pytest.mark.parametrize(
    "text, message",
    [
        ("[flow\nm = 1", "malformed config"),
        ("[mesh]\nN = 10\n", "unknown sections"),
        ("[flow]\nmm = 1.0\n", r"unknown keys in \[flow\]"),
        ("[grid]\ndx = 1.0\n", r"unknown keys in \[grid\]"),
        ("[solver]\nnewton = 1\n", r"unknown keys in \[solver\]"),
    ],
)
def test_parse_rejects_bad_documents(text, message):
    with pytest.raises(ValidationError, match=message):
        parse_scenario(text)


def test_solver_section_parsed():
    s = parse_scenario("[solver]\nnewton_tol = 1e-9\nmu_star = 5.0\nseed = 3\n")
    assert s.solver.newton_tol == 1e-9 and s.solver.mu_star == 5.0 and s.solver.seed == 3


def test_default_envelope_parameter():
    assert SolverOptions().mu_env == pytest.approx(0.9 * math.exp(-0.5))
    assert SolverOptions().mu_env < math.exp(-0.5)


def test_with_routes_solver_keys():
    s = Scenario().with_(m=2.0, newton_tol=1e-8)
    assert s.m == 2.0 and s.solver.newton_tol == 1e-8
    with pytest.raises(ValidationError):
        Scenario().with_(m=-1.0)


def test_digest_depends_on_content_only():
    a = Scenario(m=0.5, a1_coeffs=[0.1])
    b = Scenario(m=0.5, a1_coeffs=(0.1,))
    assert a.digest() == b.digest()
    assert a.digest() != a.with_(seed=1).digest()


def test_n_slices():
    assert Scenario(X=0.5, h=0.01).n_slices == 50
    assert Scenario(X=0.3, h=0.1).n_slices == 3


coeffs = st.lists(st.floats(-0.5, 0.5, allow_nan=False), max_size=3).map(tuple)


@settings(max_examples=60, deadline=None)
@given(
    variant=st.sampled_from(["planar", "axisymmetric"]),
    m=st.floats(1.0, 4.0),
    a=st.floats(0.5, 3.0),
    nu=st.floats(0.1, 3.0),
    a1=coeffs,
    v1=coeffs,
    b=st.floats(-1.0, 0.0),
    c=st.floats(0.2, 1.0),
    X=st.floats(0.1, 0.5),
    N=st.integers(8, 2048),
    seed=st.integers(0, 2**31 - 1),
)
def test_round_trip(variant, m, a, nu, a1, v1, b, c, X, N, seed):
    kw = dict(variant=variant, m=m, a=a, nu=nu, a1_coeffs=a1, v1_coeffs=v1, b=b, X=X, h=X / 10, N=N)
    if variant == "axisymmetric":
        kw["c"] = c
    try:
        s = Scenario(**kw).with_(seed=seed)
    except ValidationError:
        return
    back = parse_scenario(dump_scenario(s))
    assert back == s
    assert back.digest() == s.digest()

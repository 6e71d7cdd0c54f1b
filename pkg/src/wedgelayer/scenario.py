"""Scenario definition and config parsing.

A scenario is one TOML document with dotted sections::

    [flow]
    variant = "planar"      # or "axisymmetric"
    m = 1.0
    a = 1.0
    nu = 1.0

    [perturbation]
    a1 = [0.1]              # a1(x) = x * (0.1)
    v1 = [0.05]             # v1(x) = b + x * (0.05)
    b = 0.0
    r1 = []                 # r1(x) = c + x * (...), axisymmetric only
    c = 1.0

    [grid]
    X = 0.5
    h = 0.01
    N = 512
    p = 2.0

    [solver]
    newton_tol = 1e-10
    ...
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from .errors import GeometryError, ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    max_newton: int = 50
    eps0_factor: float = 1e-2
    eps_factor: float = 4.0
    eps_min: float = 1e-10
    mu_star: Optional[float] = None
    mu_env: float = 0.9 * math.exp(-0.5)
    # "printed" keeps 3(m-1)/2 for the axisymmetric C; "planar" uses (3m-1)/2
    axisym_c_style: str = "printed"
    fp_tol: float = 1e-10
    bc_tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    variant: str = "planar"
    m: float = 1.0
    a: float = 1.0
    nu: float = 1.0
    a1_coeffs: tuple = ()
    v1_coeffs: tuple = ()
    b: float = 0.0
    r1_coeffs: tuple = ()
    c: float = 1.0
    X: float = 0.5
    h: float = 0.01
    N: int = 512
    p: float = 2.0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        for name in ("a1_coeffs", "v1_coeffs", "r1_coeffs"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        validate(self)

    # Perturbation polynomials ------------------------------------------------
    def _xpoly(self, coeffs) -> Polynomial:
        return Polynomial((0.0,) + tuple(coeffs)) if coeffs else Polynomial((0.0,))

    def V(self, x):
        return self.a + self._xpoly(self.a1_coeffs)(x)

    def V_x(self, x):
        return self._xpoly(self.a1_coeffs).deriv()(x)

    def v1(self, x):
        return self.b + self._xpoly(self.v1_coeffs)(x)

    def r1(self, x):
        return self.c + self._xpoly(self.r1_coeffs)(x)

    def r1_x(self, x):
        return self._xpoly(self.r1_coeffs).deriv()(x)

    def U(self, x):
        return np.power(x, self.m) * self.V(x)

    def U_x(self, x):
        x = np.asarray(x, dtype=float)
        return self.m * np.power(x, self.m - 1.0) * self.V(x) + np.power(x, self.m) * self.V_x(x)

    def v0(self, x):
        return np.power(x, 0.5 * (self.m - 1.0)) * self.v1(x)

    def r(self, x):
        return x * self.r1(x)

    @property
    def self_similar(self) -> bool:
        return not any(self.a1_coeffs) and not any(self.v1_coeffs) and self.b == 0.0 and not any(self.r1_coeffs)

    @property
    def n_slices(self) -> int:
        return int(math.floor(self.X / self.h + 1e-9))

    def to_dict(self) -> dict:
        d = asdict(self)
        solver = d.pop("solver")
        return {
            "flow": {k: d[k] for k in ("variant", "m", "a", "nu")},
            "perturbation": {
                "a1": list(d["a1_coeffs"]), "v1": list(d["v1_coeffs"]), "b": d["b"],
                "r1": list(d["r1_coeffs"]), "c": d["c"],
            },
            "grid": {k: d[k] for k in ("X", "h", "N", "p")},
            "solver": {k: v for k, v in solver.items() if v is not None},
        }

    def digest(self) -> str:
        """Stable hash of the canonical scenario content."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_(self, **changes) -> "Scenario":
        solver_changes = {k: changes.pop(k) for k in list(changes) if k in _SOLVER_KEYS}
        out = replace(self, **changes)
        if solver_changes:
            out = replace(out, solver=replace(out.solver, **solver_changes))
        return out


_SOLVER_KEYS = {f.name for f in fields(SolverOptions)}


def _lipschitz_bound(coeffs, X) -> float:
    """N with |x * sum p_i x^i| <= N x on [0, X]."""
    return float(sum(abs(p) * X**i for i, p in enumerate(coeffs)))


def validate(s: Scenario) -> None:
    """Raise ValidationError naming the first violated assumption."""
    if s.variant not in ("planar", "axisymmetric"):
        raise ValidationError(f"variant must be 'planar' or 'axisymmetric', got {s.variant!r}")
    if not s.m > 0:
        raise ValidationError("m must be > 0")
    if not s.a > 0:
        raise ValidationError("a must be > 0")
    if not s.nu > 0:
        raise ValidationError("nu must be > 0")
    if not s.X > 0:
        raise ValidationError("X must be > 0")
    if not 0 < s.h <= s.X:
        raise ValidationError("h must satisfy 0 < h <= X")
    if s.N < 8:
        raise ValidationError("N must be >= 8")
    if s.p < 1:
        raise ValidationError("p must be >= 1")
    for name, coeffs in (("a1", s.a1_coeffs), ("v1", s.v1_coeffs), ("r1", s.r1_coeffs)):
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError(f"{name} coefficients must be finite")
    # a1 = x * poly and v1 - b = x * poly give |a1| <= N1 x, |v1 - b| <= N3 x by construction;
    # the bound must keep V = a + a1 positive on [0, X].
    n1 = _lipschitz_bound(s.a1_coeffs, s.X)
    if s.a - n1 * s.X <= 0:
        raise ValidationError(f"a1 bound N1 = {n1:.4g} allows V = a + a1 <= 0 on [0, X]")
    if s.b > 0:
        raise ValidationError("b must be <= 0 (suction only)")
    if s.b < 0 and s.m < 1:
        raise ValidationError("b<0 requires m >= 1")
    if s.variant == "axisymmetric":
        if not 0 < s.c <= 1:
            raise GeometryError("c must satisfy 0 < c <= 1")
        xs = np.linspace(0.0, s.X, 257)
        if np.any(s.r1(xs) <= 0):
            raise GeometryError("r1 must stay positive on [0, X]")
    elif any(s.r1_coeffs):
        raise ValidationError("r1 perturbation is only meaningful for the axisymmetric variant")
    if s.solver.axisym_c_style not in ("printed", "planar"):
        raise ValidationError("axisym_c_style must be 'printed' or 'planar'")


def parse_scenario(text: str) -> Scenario:
    """Parse a TOML scenario document; unknown keys are rejected."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    allowed = {"flow", "perturbation", "grid", "solver"}
    extra = set(doc) - allowed
    if extra:
        raise ValidationError(f"unknown sections: {sorted(extra)}")
    flow = dict(doc.get("flow", {}))
    pert = dict(doc.get("perturbation", {}))
    grid = dict(doc.get("grid", {}))
    solver = dict(doc.get("solver", {}))
    kw = {}
    for key in ("variant", "m", "a", "nu"):
        if key in flow:
            kw[key] = flow.pop(key)
    for src, dst in (("a1", "a1_coeffs"), ("v1", "v1_coeffs"), ("r1", "r1_coeffs")):
        if src in pert:
            kw[dst] = tuple(pert.pop(src))
    for key in ("b", "c"):
        if key in pert:
            kw[key] = pert.pop(key)
    for key in ("X", "h", "N", "p"):
        if key in grid:
            kw[key] = grid.pop(key)
    for section, rest in (("flow", flow), ("perturbation", pert), ("grid", grid)):
        if rest:
            raise ValidationError(f"unknown keys in [{section}]: {sorted(rest)}")
    unknown = set(solver) - _SOLVER_KEYS
    if unknown:
        raise ValidationError(f"unknown keys in [solver]: {sorted(unknown)}")
    try:
        kw["solver"] = SolverOptions(**solver)
        return Scenario(**kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def dump_scenario(s: Scenario) -> str:
    """Serialize back to the TOML layout accepted by parse_scenario."""
    lines = []
    for section, body in s.to_dict().items():
        lines.append(f"[{section}]")
        for key, val in body.items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(val) -> str:
    if isinstance(val, str):
        return json.dumps(val)
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    if isinstance(val, float):
        return repr(val)
    return str(val)

"""Scenario files: a complete problem description in key=value form.

The on-disk format is flat UTF-8 ``key = value`` lines grouped under
``[section]`` headers (sections: problem, grid, time, exponents,
quadrature, solver); matrix and vector values are comma-separated,
row-major.  Parsing and serialization round-trip every field exactly
(floats are written with ``repr``).

Loading a scenario validates it: the generator family must commute at
sampled time pairs, the initial data must decay below 1e-10 at the box
boundary (exactly periodic families are exempt, their truncation error
is zero), and the norm exponents must be admissible.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .field_grid import Grid, QuadParams, ScalarField, SolverParams, VectorField, read_field
from .fields import (gaussian_stream_field, gradient_bump, random_solenoidal,
                     taylor_green)
from .ou_kernel import OUEvolution
from .propagator import (MatrixFunSpec, VectorFunSpec, commutation_check,
                         outflow_drift)

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario"]

BOUNDARY_SHELL_TOL = 1e-10
COMMUTATION_TOL = 1e-12

_PERIODIC_FAMILIES = {"taylor-green"}
_U0_FAMILIES = {"gaussian-bump", "taylor-green", "random-solenoidal", "file"}


class ScenarioError(ValueError):
    """Validation failure; ``problems`` lists every offending item."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _profile_callable(name: str, params: dict):
    if name == "sin":
        a = params.get("amplitude", 1.0)
        w = params.get("omega", 1.0)
        ph = params.get("phase", 0.0)
        return lambda t: a * math.sin(w * t + ph)
    if name == "cos":
        a = params.get("amplitude", 1.0)
        w = params.get("omega", 1.0)
        ph = params.get("phase", 0.0)
        return lambda t: a * math.cos(w * t + ph)
    if name == "poly":
        coeffs = tuple(params.get("coeffs", (1.0,)))
        return lambda t: sum(c * t ** i for i, c in enumerate(coeffs))
    raise ScenarioError([f"unknown time profile {name!r}"])


@dataclass(eq=False)
class Scenario:
    """Everything needed to run one problem: operators, grid, data, knobs."""

    grid: Grid
    M: MatrixFunSpec
    f: VectorFunSpec
    u0_family: str
    u0_params: dict
    s0: float = 0.0
    T0: float = 1.0
    time_steps: int = 64
    p: float | None = None
    q: float | None = None
    quad: QuadParams = field(default_factory=QuadParams)
    solver: SolverParams = field(default_factory=SolverParams)
    seed: int = 0

    def __post_init__(self):
        if self.p is None:
            self.p = float(self.grid.d)
        if self.q is None:
            self.q = 2.0 * self.grid.d
        if self.u0_family not in _U0_FAMILIES:
            raise ScenarioError([f"unknown initial-data family {self.u0_family!r}"])

    @property
    def d(self) -> int:
        return self.grid.d

    def evolution(self) -> OUEvolution:
        return OUEvolution(self.M, self.f, self.quad, self.solver)

    def initial_data(self) -> VectorField:
        prm = self.u0_params
        if self.u0_family == "gaussian-bump":
            return gaussian_stream_field(
                self.grid, sigma=prm.get("sigma", self.grid.L / 8.0),
                center=prm.get("center"), amplitude=prm.get("amplitude", 1.0))
        if self.u0_family == "taylor-green":
            return taylor_green(self.grid, mode=int(prm.get("mode", 1)),
                                amplitude=prm.get("amplitude", 1.0))
        if self.u0_family == "random-solenoidal":
            return random_solenoidal(self.grid, seed=self.seed,
                                     amplitude=prm.get("amplitude", 1.0),
                                     slope=prm.get("slope", 0.0))
        f = read_field(prm["path"])
        if isinstance(f, ScalarField):
            raise ScenarioError(["initial-data file holds a scalar field"])
        if f.grid != self.grid:
            raise ScenarioError(["initial-data file grid does not match scenario"])
        return f

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        problems = []
        if self.M.dim != self.d or self.f.dim != self.d:
            problems.append("operator dimensions do not match the grid")
        if not (1 < self.p <= self.q):
            problems.append(f"exponents must satisfy 1 < p <= q, got p={self.p}, q={self.q}")
        if not (self.T0 > self.s0):
            problems.append("time window must satisfy T0 > s0")

        times = np.linspace(self.s0, max(self.T0, self.s0 + 1.0), 6)
        pairs = [(t, s) for i, t in enumerate(times) for s in times[:i]]
        report = commutation_check(self.M, pairs, COMMUTATION_TOL)
        if not report.ok:
            worst = report.max_residual
            problems.append(
                f"generator family does not commute (max relative commutator "
                f"{worst:.3e} over {len(pairs)} sampled pairs)")

        try:
            u0 = self.initial_data()
        except ScenarioError as exc:
            problems.extend(exc.problems)
            u0 = None
        if u0 is not None and self.u0_family not in _PERIODIC_FAMILIES:
            shell = _boundary_shell_level(u0)
            if shell > BOUNDARY_SHELL_TOL:
                problems.append(
                    f"initial data is {shell:.3e} of its peak on the box "
                    f"boundary (limit {BOUNDARY_SHELL_TOL:.0e}); enlarge L")
        if problems:
            raise ScenarioError(problems)

    def validate_for_solve(self) -> None:
        self.validate()
        if self.p < self.d:
            raise ScenarioError(
                [f"mild-solution runs need p >= d, got p={self.p}, d={self.d}"])

    # -- serialization ------------------------------------------------------
    def to_text(self) -> str:
        out = io.StringIO()

        def sec(name):
            out.write(f"[{name}]\n")

        def kv(key, value):
            out.write(f"{key} = {value}\n")

        def vec(v):
            return ", ".join(repr(float(x)) for x in np.asarray(v).ravel())

        sec("problem")
        kv("d", self.d)
        kv("M_kind", self.M.kind)
        if self.M.kind in ("constant", "time-scaled-constant"):
            kv("M", vec(self.M.base_matrix))
        if self.M.kind == "time-scaled-constant":
            if self.M.profile_name is None:
                raise ScenarioError(
                    ["only named time profiles can be serialized"])
            kv("M_profile", self.M.profile_name)
            for k in sorted(self.M.profile_params):
                v = self.M.profile_params[k]
                kv(f"M_profile_{k}", vec(v) if isinstance(v, (tuple, list)) else repr(float(v)))
        if self.M.kind == "tabulated":
            kv("M_times", vec(self.M.table_times))
            kv("M_values", vec(self.M.table_matrices))
        kv("f_kind", self.f.kind)
        if self.f.kind == "constant":
            kv("f", vec(self.f.value))
        elif self.f.kind == "tabulated":
            kv("f_times", vec(self.f.table_times))
            kv("f_values", vec(self.f.table_values))
        else:
            kv("v_infinity", vec(self.f.v_infinity))
        kv("u0", self.u0_family)
        for k in sorted(self.u0_params):
            v = self.u0_params[k]
            if k == "path":
                kv("u0_path", v)
            elif k == "center":
                kv("u0_center", vec(v))
            elif k == "mode":
                kv("u0_mode", int(v))
            else:
                kv(f"u0_{k}", repr(float(v)))
        kv("seed", self.seed)
        sec("grid")
        kv("L", repr(float(self.grid.L)))
        kv("n", self.grid.n)
        sec("time")
        kv("s0", repr(float(self.s0)))
        kv("T0", repr(float(self.T0)))
        kv("steps", self.time_steps)
        sec("exponents")
        kv("p", repr(float(self.p)))
        kv("q", repr(float(self.q)))
        sec("quadrature")
        kv("tol", repr(float(self.quad.tol)))
        kv("max_depth", self.quad.max_depth)
        sec("solver")
        kv("interpolation_order", self.solver.interpolation_order)
        kv("picard_max_iter", self.solver.picard_max_iter)
        kv("picard_tol", repr(float(self.solver.picard_tol)))
        kv("dealias", "true" if self.solver.dealias else "false")
        return out.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _boundary_shell_level(u: VectorField) -> float:
    mag = np.sqrt(np.sum(u.values * u.values, axis=0))
    peak = float(mag.max())
    if peak == 0.0:
        return 0.0
    shell = 0.0
    for ax in range(u.grid.d):
        shell = max(shell, float(np.take(mag, 0, axis=ax).max()),
                    float(np.take(mag, -1, axis=ax).max()))
    return shell / peak


def _floats(raw: str) -> np.ndarray:
    return np.array([float(tok) for tok in raw.split(",") if tok.strip() != ""])


def parse_scenario(text: str, validate: bool = True) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    problems = []

    def need(section, key):
        if not cp.has_option(section, key):
            problems.append(f"missing {section}.{key}")
            return None
        return cp.get(section, key)

    d_raw = need("problem", "d")
    L_raw = need("grid", "L")
    n_raw = need("grid", "n")
    if problems:
        raise ScenarioError(problems)
    d = int(d_raw)
    try:
        grid = Grid(d, float(L_raw), int(n_raw))
    except ValueError as exc:
        raise ScenarioError([str(exc)]) from exc

    get = lambda s, k, fb: cp.get(s, k, fallback=fb)

    m_kind = get("problem", "M_kind", "constant")
    if m_kind == "constant":
        raw = get("problem", "M", None)
        M0 = (_floats(raw).reshape(d, d) if raw is not None
              else np.zeros((d, d)))
        M = MatrixFunSpec.constant(M0)
    elif m_kind == "time-scaled-constant":
        M0 = _floats(cp.get("problem", "M")).reshape(d, d)
        pname = get("problem", "M_profile", "sin")
        pparams = {}
        for key in ("amplitude", "omega", "phase"):
            raw = get("problem", f"M_profile_{key}", None)
            if raw is not None:
                pparams[key] = float(raw)
        raw = get("problem", "M_profile_coeffs", None)
        if raw is not None:
            pparams["coeffs"] = tuple(_floats(raw))
        M = MatrixFunSpec.time_scaled(M0, _profile_callable(pname, pparams),
                                      name=pname, params=pparams)
    elif m_kind == "tabulated":
        times = _floats(cp.get("problem", "M_times"))
        mats = _floats(cp.get("problem", "M_values")).reshape(len(times), d, d)
        M = MatrixFunSpec.tabulated(times, mats)
    else:
        raise ScenarioError([f"unknown M_kind {m_kind!r}"])

    f_kind = get("problem", "f_kind", "constant")
    if f_kind == "constant":
        raw = get("problem", "f", None)
        fvec = _floats(raw) if raw is not None else np.zeros(d)
        f = VectorFunSpec.constant(fvec)
    elif f_kind == "tabulated":
        times = _floats(cp.get("problem", "f_times"))
        vals = _floats(cp.get("problem", "f_values")).reshape(len(times), d)
        f = VectorFunSpec.tabulated(times, vals)
    elif f_kind == "outflow":
        f = outflow_drift(M, _floats(cp.get("problem", "v_infinity")))
    else:
        raise ScenarioError([f"unknown f_kind {f_kind!r}"])

    u0_family = get("problem", "u0", "gaussian-bump")
    u0_params = {}
    for key in ("sigma", "amplitude", "slope"):
        raw = get("problem", f"u0_{key}", None)
        if raw is not None:
            u0_params[key] = float(raw)
    raw = get("problem", "u0_center", None)
    if raw is not None:
        u0_params["center"] = tuple(_floats(raw))
    raw = get("problem", "u0_mode", None)
    if raw is not None:
        u0_params["mode"] = int(raw)
    raw = get("problem", "u0_path", None)
    if raw is not None:
        u0_params["path"] = raw

    try:
        quad = QuadParams(tol=float(get("quadrature", "tol", "1e-10")),
                          max_depth=int(get("quadrature", "max_depth", "28")))
        solver = SolverParams(
            interpolation_order=int(get("solver", "interpolation_order", "6")),
            picard_max_iter=int(get("solver", "picard_max_iter", "40")),
            picard_tol=float(get("solver", "picard_tol", "1e-8")),
            duhamel_steps=int(get("time", "steps", "64")),
            dealias=get("solver", "dealias", "true").strip().lower()
            in ("1", "true", "yes", "on"))
    except ValueError as exc:
        raise ScenarioError([str(exc)]) from exc

    scn = Scenario(
        grid=grid, M=M, f=f, u0_family=u0_family, u0_params=u0_params,
        s0=float(get("time", "s0", "0.0")), T0=float(get("time", "T0", "1.0")),
        time_steps=int(get("time", "steps", "64")),
        p=float(get("exponents", "p", str(float(d)))),
        q=float(get("exponents", "q", str(2.0 * d))),
        quad=quad, solver=solver, seed=int(get("problem", "seed", "0")))
    if validate:
        scn.validate()
    return scn


def load_scenario(path, validate: bool = True) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), validate=validate)

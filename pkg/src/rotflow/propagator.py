"""Matrix propagators for commuting time-dependent generator families.

For a continuous family ``t -> M(t)`` of d x d matrices whose values
commute pairwise, the two-parameter solution operator of
``dU/dt = M(t) U`` is the matrix exponential of the integrated family,

    U(t, s) = exp( integral_s^t M(tau) dtau ).

This module computes that propagator together with the two accumulated
quantities the evolution operators need:

* the drift vector ``integral_s^t U(r, s) f(r) dr`` collecting the effect
  of a time-dependent forcing ``f``;
* the covariance matrix ``integral_s^t U(r, s) U(r, s)^T dr`` describing
  the anisotropic diffusion picked up between times ``s`` and ``t``.

Skew-symmetric families get fast paths: the propagator is orthogonal and
the covariance is exactly ``(t - s) I``, which downstream code relies on.
Commutation is an assumption, not a theorem, for tabulated input, so a
diagnostic check is provided and should be run at scenario load.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .field_grid import QuadParams
from .quadrature import adaptive_quadrature

__all__ = [
    "MatrixFunSpec", "VectorFunSpec", "PropagatorBundle", "CommutationReport",
    "matrix_exp", "propagator_matrix", "drift_vector", "covariance_matrix",
    "outflow_drift", "commutation_check", "make_bundle",
]

_DEFAULT_QUAD = QuadParams()
_SKEW_TOL = 1e-12


def matrix_exp(A: np.ndarray) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring with Pade approximants."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exp expects a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exp expects finite entries")
    return scipy.linalg.expm(A)


@dataclass(eq=False)
class MatrixFunSpec:
    """Parametric description of a matrix-valued function of time.

    Kinds:
      ``constant``              M(t) = M0
      ``time-scaled-constant``  M(t) = a(t) * M0 (commuting by construction)
      ``tabulated``             cubic-spline interpolation of (t_i, M_i)
    """

    kind: str
    base_matrix: np.ndarray | None = None
    time_profile: object = None
    table_times: np.ndarray | None = None
    table_matrices: np.ndarray | None = None
    profile_name: str | None = None
    profile_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("constant", "time-scaled-constant", "tabulated"):
            raise ValueError(f"unknown MatrixFunSpec kind {self.kind!r}")
        if self.kind == "tabulated":
            t = np.asarray(self.table_times, dtype=float)
            m = np.asarray(self.table_matrices, dtype=float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("table times must be strictly increasing, >= 2 samples")
            if m.shape != (len(t), m.shape[1], m.shape[1]):
                raise ValueError("table matrices must be (n_times, d, d)")
            self.table_times, self.table_matrices = t, m
            self._spline = CubicSpline(t, m, axis=0)
            self._antideriv = self._spline.antiderivative()
        else:
            M0 = np.asarray(self.base_matrix, dtype=float)
            if M0.ndim != 2 or M0.shape[0] != M0.shape[1]:
                raise ValueError("base matrix must be square")
            if not np.all(np.isfinite(M0)):
                raise ValueError("base matrix must be finite")
            self.base_matrix = M0
        if self.kind == "time-scaled-constant" and not callable(self.time_profile):
            raise ValueError("time-scaled-constant needs a scalar time profile")

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, M0) -> "MatrixFunSpec":
        return cls("constant", base_matrix=np.asarray(M0, dtype=float))

    @classmethod
    def zero(cls, d: int) -> "MatrixFunSpec":
        return cls.constant(np.zeros((d, d)))

    @classmethod
    def time_scaled(cls, M0, profile, name: str | None = None,
                    params: dict | None = None) -> "MatrixFunSpec":
        return cls("time-scaled-constant", base_matrix=np.asarray(M0, dtype=float),
                   time_profile=profile, profile_name=name,
                   profile_params=dict(params or {}))

    @classmethod
    def tabulated(cls, times, matrices) -> "MatrixFunSpec":
        return cls("tabulated", table_times=np.asarray(times, dtype=float),
                   table_matrices=np.asarray(matrices, dtype=float))

    # -- evaluation ----------------------------------------------------
    @property
    def dim(self) -> int:
        if self.kind == "tabulated":
            return self.table_matrices.shape[1]
        return self.base_matrix.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.base_matrix
        if self.kind == "time-scaled-constant":
            return float(self.time_profile(t)) * self.base_matrix
        return self._spline(t)

    def integral(self, s: float, t: float,
                 quad: QuadParams = _DEFAULT_QUAD) -> np.ndarray:
        """``integral_s^t M(tau) dtau`` (exact for constant and tabulated kinds)."""
        if self.kind == "constant":
            return (t - s) * self.base_matrix
        if self.kind == "time-scaled-constant":
            a = adaptive_quadrature(lambda r: float(self.time_profile(r)),
                                    s, t, tol=quad.tol, max_depth=quad.max_depth)
            return a * self.base_matrix
        # tabulated: integrate the spline interpolant exactly
        return self._antideriv(t) - self._antideriv(s)

    def is_zero(self) -> bool:
        if self.kind == "tabulated":
            return not self.table_matrices.any()
        return not self.base_matrix.any()

    def is_skew(self, tol: float = _SKEW_TOL) -> bool:
        """True when every evaluated matrix is skew-symmetric (zero counts)."""
        if self.kind == "tabulated":
            mats = self.table_matrices
        else:
            mats = self.base_matrix[None]
        for M in mats:
            scale = max(np.linalg.norm(M), 1.0)
            if np.linalg.norm(M + M.T) > tol * scale:
                return False
        return True


@dataclass(eq=False)
class VectorFunSpec:
    """Parametric description of a continuous forcing ``t -> f(t)``.

    The ``outflow`` kind represents ``f(t) = -U(t, 0)^T v_inf`` for a free
    stream ``v_inf`` seen from the co-moving frame of the generator family;
    build it with :func:`outflow_drift`.
    """

    kind: str
    value: np.ndarray | None = None
    table_times: np.ndarray | None = None
    table_values: np.ndarray | None = None
    v_infinity: np.ndarray | None = None
    matrix_spec: MatrixFunSpec | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "tabulated", "outflow"):
            raise ValueError(f"unknown VectorFunSpec kind {self.kind!r}")
        if self.kind == "constant":
            self.value = np.asarray(self.value, dtype=float)
            if self.value.ndim != 1:
                raise ValueError("constant forcing must be a vector")
        elif self.kind == "tabulated":
            t = np.asarray(self.table_times, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("table times must be strictly increasing, >= 2 samples")
            if v.shape != (len(t), v.shape[1]):
                raise ValueError("table values must be (n_times, d)")
            self.table_times, self.table_values = t, v
            self._spline = CubicSpline(t, v, axis=0)
        else:
            self.v_infinity = np.asarray(self.v_infinity, dtype=float)
            if self.matrix_spec is None:
                raise ValueError("outflow forcing needs the matrix family")

    @classmethod
    def constant(cls, value) -> "VectorFunSpec":
        return cls("constant", value=np.asarray(value, dtype=float))

    @classmethod
    def zero(cls, d: int) -> "VectorFunSpec":
        return cls.constant(np.zeros(d))

    @classmethod
    def tabulated(cls, times, values) -> "VectorFunSpec":
        return cls("tabulated", table_times=np.asarray(times, dtype=float),
                   table_values=np.asarray(values, dtype=float))

    @property
    def dim(self) -> int:
        if self.kind == "constant":
            return len(self.value)
        if self.kind == "tabulated":
            return self.table_values.shape[1]
        return len(self.v_infinity)

    def is_zero(self) -> bool:
        if self.kind == "constant":
            return not self.value.any()
        if self.kind == "tabulated":
            return not self.table_values.any()
        return not self.v_infinity.any()

    def eval(self, t: float, quad: QuadParams = _DEFAULT_QUAD) -> np.ndarray:
        if self.kind == "constant":
            return self.value
        if self.kind == "tabulated":
            return self._spline(t)
        U = propagator_matrix(self.matrix_spec, t, 0.0, quad)
        return -U.T @ self.v_infinity


def outflow_drift(M: MatrixFunSpec, v_inf) -> VectorFunSpec:
    """Forcing induced by a free-stream velocity in the co-moving frame."""
    return VectorFunSpec("outflow", v_infinity=np.asarray(v_inf, dtype=float),
                         matrix_spec=M)


@dataclass(frozen=True)
class PropagatorBundle:
    """Propagator, accumulated drift and covariance for one time pair."""

    s: float
    t: float
    propagator: np.ndarray
    drift: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.propagator.shape[0]


def propagator_matrix(M: MatrixFunSpec, t: float, s: float,
                      quad: QuadParams = _DEFAULT_QUAD) -> np.ndarray:
    """Solution operator ``U(t, s)``; either time order is allowed."""
    if not (np.isfinite(t) and np.isfinite(s)):
        raise ValueError("times must be finite")
    if t == s:
        return np.eye(M.dim)
    return matrix_exp(M.integral(s, t, quad))


def drift_vector(M: MatrixFunSpec, f: VectorFunSpec, t: float, s: float,
                 quad: QuadParams = _DEFAULT_QUAD) -> np.ndarray:
    """``integral_s^t U(r, s) f(r) dr`` by adaptive quadrature, ``t >= s``."""
    if t < s:
        raise ValueError("drift_vector requires t >= s")
    d = M.dim
    if t == s or f.is_zero():
        return np.zeros(d)
    if M.is_zero() and f.kind == "constant":
        return (t - s) * f.value

    def integrand(r):
        return propagator_matrix(M, r, s, quad) @ f.eval(r, quad)

    return np.asarray(adaptive_quadrature(integrand, s, t, tol=quad.tol,
                                          max_depth=quad.max_depth))


def covariance_matrix(M: MatrixFunSpec, t: float, s: float,
                      quad: QuadParams = _DEFAULT_QUAD) -> np.ndarray:
    """``integral_s^t U(r, s) U(r, s)^T dr``, ``t >= s``.

    Skew-symmetric families short-circuit to the exact value ``(t - s) I``.
    """
    if t < s:
        raise ValueError("covariance_matrix requires t >= s")
    d = M.dim
    if t == s:
        return np.zeros((d, d))
    if M.is_skew():
        return (t - s) * np.eye(d)

    def integrand(r):
        U = propagator_matrix(M, r, s, quad)
        return U @ U.T

    Q = np.asarray(adaptive_quadrature(integrand, s, t, tol=quad.tol,
                                       max_depth=quad.max_depth))
    return 0.5 * (Q + Q.T)


def make_bundle(M: MatrixFunSpec, f: VectorFunSpec, t: float, s: float,
                quad: QuadParams = _DEFAULT_QUAD) -> PropagatorBundle:
    """Compute the (propagator, drift, covariance) triple for ``t >= s``."""
    if t < s:
        raise ValueError("make_bundle requires t >= s")
    U = propagator_matrix(M, t, s, quad)
    g = drift_vector(M, f, t, s, quad)
    Q = covariance_matrix(M, t, s, quad)
    if t > s:
        if np.min(np.linalg.eigvalsh(Q)) <= 0.0:
            raise ArithmeticError("covariance lost positive definiteness")
    return PropagatorBundle(s=float(s), t=float(t), propagator=U,
                            drift=g, covariance=Q)


@dataclass(frozen=True)
class CommutationReport:
    """Outcome of sampling the pairwise commutators of a matrix family."""

    pairs: tuple
    residuals: tuple
    tol: float

    @property
    def violations(self) -> tuple:
        return tuple((p, r) for p, r in zip(self.pairs, self.residuals)
                     if r > self.tol)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def commutation_check(M: MatrixFunSpec, time_pairs, tol: float = 1e-12
                      ) -> CommutationReport:
    """Relative Frobenius norms of ``[M(t), M(s)]`` over the given pairs.

    Report-only: violations above ``tol`` are listed, nothing is raised.
    """
    pairs = []
    residuals = []
    for (t, s) in time_pairs:
        Mt, Ms = M(t), M(s)
        scale = np.linalg.norm(Mt) * np.linalg.norm(Ms)
        comm = np.linalg.norm(Mt @ Ms - Ms @ Mt)
        rel = comm / scale if scale > 0 else 0.0
        pairs.append((float(t), float(s)))
        residuals.append(float(rel))
    return CommutationReport(pairs=tuple(pairs), residuals=tuple(residuals),
                             tol=tol)

"""Mild-solution construction by Picard iteration on the Duhamel equation.

The velocity trajectory is represented on a uniform output grid
``0 = t_0 < ... < t_N = T0``.  Each iterate maps the previous trajectory
through

    u_new(t) = E(t, 0) u0 - integral_0^t E(t, s) P[(u . grad) u](s) ds,

with the integral evaluated by composite Simpson over the stored time
samples (a trailing three-eighths panel handles odd counts) and the
convective term projected onto divergence-free fields.  The nonlinear
term is kept spectrally, so evolution operators whose affine part is a
translation accumulate without leaving Fourier space.

Per-iterate convergence bookkeeping follows the classical time-weighted
scheme: with ``gamma = (d/2)(1/p - 1/q)``, the supremum over the time
grid (excluding t = 0) of ``t^gamma ||u_j(t)||_q`` and of
``t^(1/2) ||grad u_j(t)||_p`` is tracked along with the analogous
weighted norms of consecutive differences; their maximum drives the
contraction diagnostics reported to the caller.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .field_grid import (Grid, ScalarField, SolverParams, VectorField,
                         VectorFieldStack, gradient, lp_norm)
from .ou_kernel import OUEvolution
from .vector_evolution import (NotSolenoidalError, evolve_vector,
                               leray_project_spectrum, relative_divergence)

__all__ = [
    "Trajectory", "IterateConstants", "KatoReport", "nonlinear_term",
    "convective_term", "picard_iterate", "solve_mild", "kato_constants",
    "duhamel_residual",
]

NONLINEAR_DIV_TOL = 1e-6

KATO_CSV_HEADER = ["iterate", "weighted_q_norm", "weighted_grad_norm",
                   "diff_q_norm", "diff_grad_norm", "radius"]


@dataclass(eq=False)
class Trajectory:
    """Velocity fields on an increasing time grid, plus norm exponents."""

    times: np.ndarray
    fields: list
    p: float
    q: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.fields):
            raise ValueError("need one field per time sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise ValueError("all fields must share one grid")
        if not (1 < self.p <= self.q):
            raise ValueError("need 1 < p <= q")

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def gamma(self) -> float:
        return 0.5 * self.grid.d * (1.0 / self.p - 1.0 / self.q)

    @classmethod
    def zero(cls, grid: Grid, times, p: float, q: float) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        fields = [VectorField(grid, np.zeros((grid.d,) + grid.shape))
                  for _ in times]
        return cls(times=times, fields=fields, p=p, q=q)


@dataclass(frozen=True)
class IterateConstants:
    """Weighted-norm diagnostics of one Picard iterate.

    ``weighted_q_norm`` / ``weighted_grad_norm`` measure the iterate
    itself, the ``diff_*`` entries measure the gap to the next iterate,
    and ``radius`` is the larger of the first two.
    """

    iterate: int
    weighted_q_norm: float
    weighted_grad_norm: float
    diff_q_norm: float
    diff_grad_norm: float

    @property
    def radius(self) -> float:
        return max(self.weighted_q_norm, self.weighted_grad_norm)


@dataclass(eq=False)
class KatoReport:
    """Convergence record of one mild-solution run."""

    constants: list
    iterations: int
    converged: bool
    duhamel_residual: float

    def csv_rows(self) -> list:
        rows = [list(KATO_CSV_HEADER)]
        for c in self.constants:
            rows.append([str(c.iterate), repr(float(c.weighted_q_norm)),
                         repr(float(c.weighted_grad_norm)),
                         repr(float(c.diff_q_norm)),
                         repr(float(c.diff_grad_norm)),
                         repr(float(c.radius))])
        return rows


# ---------------------------------------------------------------------------
# convective term

def _convective_spectrum(u: VectorField, dealias: bool) -> np.ndarray:
    """Spectra of ``(u . grad) u`` with optional two-thirds-rule dealiasing."""
    grid = u.grid
    d = grid.d
    ks = grid.deriv_freqs()
    mask = grid.dealias_mask() if dealias else None
    hats = np.stack([np.fft.fftn(u.values[c]) for c in range(d)])
    if mask is not None:
        hats = hats * mask
    vel = np.stack([np.fft.ifftn(hats[c]).real for c in range(d)])
    conv_hat = np.empty_like(hats)
    for c in range(d):
        acc = np.zeros(grid.shape)
        for j in range(d):
            acc += vel[j] * np.fft.ifftn(1j * ks[j] * hats[c]).real
        conv_hat[c] = np.fft.fftn(acc)
    if mask is not None:
        conv_hat = conv_hat * mask
    return conv_hat


def convective_term(u: VectorField, dealias: bool = True) -> VectorField:
    """``(u . grad) u`` from spectral gradients, before projection."""
    grid = u.grid
    chat = _convective_spectrum(u, dealias)
    out = np.empty_like(u.values)
    for c in range(grid.d):
        out[c] = np.fft.ifftn(chat[c]).real
    return VectorField(grid, out)


def nonlinear_term(u: VectorField, dealias: bool = True) -> VectorField:
    """Divergence-free projection of the convective term.

    Requires the input to be solenoidal within the module tolerance.
    """
    rel = relative_divergence(u)
    if rel > NONLINEAR_DIV_TOL:
        raise NotSolenoidalError(
            f"nonlinear_term input has relative divergence {rel:.3e}")
    return _spectrum_to_vector(_nonlinear_spectrum(u, dealias), u.grid)


def _nonlinear_spectrum(u: VectorField, dealias: bool) -> np.ndarray:
    return leray_project_spectrum(_convective_spectrum(u, dealias), u.grid)


def _spectrum_to_vector(hats: np.ndarray, grid: Grid) -> VectorField:
    out = np.empty((grid.d,) + grid.shape)
    for c in range(grid.d):
        out[c] = np.fft.ifftn(hats[c]).real
    return VectorField(grid, out)


# ---------------------------------------------------------------------------
# quadrature over the trajectory grid

@functools.lru_cache(maxsize=None)
def _simpson_weights(panels: int) -> np.ndarray:
    """Composite Simpson weights (unit spacing) for ``panels`` equal panels.

    Odd panel counts finish with a three-eighths panel; a single panel
    falls back to the trapezoid rule.
    """
    if panels < 0:
        raise ValueError("panel count must be nonnegative")
    if panels == 0:
        return np.zeros(1)
    if panels == 1:
        return np.array([0.5, 0.5])
    w = np.zeros(panels + 1)
    even_part = panels if panels % 2 == 0 else panels - 3
    if even_part >= 2:
        w[0] += 1.0 / 3.0
        w[even_part] += 1.0 / 3.0
        w[1:even_part:2] += 4.0 / 3.0
        w[2:even_part:2] += 2.0 / 3.0
    if panels % 2 == 1:
        start = even_part
        w[start] += 3.0 / 8.0
        w[start + 1] += 9.0 / 8.0
        w[start + 2] += 9.0 / 8.0
        w[start + 3] += 3.0 / 8.0
    return w


def _evolved_spectrum(evo: OUEvolution, hats: np.ndarray, grid: Grid,
                      s: float, t: float):
    """Vector evolution of component spectra, including the matrix factor."""
    kind, stack = evo.evolve_spectrum(hats, grid, s, t)
    if t != s:
        factor = evo.inverse_propagator(evo.bundle(s, t))
        stack = np.einsum("ij,j...->i...", factor, stack)
    return kind, stack


class _DuhamelAccumulator:
    """Weighted sum of evolved terms, kept spectral as long as possible."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._hat = None
        self._real = None

    def add(self, kind: str, stack: np.ndarray, weight: float) -> None:
        if kind == "hat":
            if self._hat is None:
                self._hat = weight * stack
            else:
                self._hat += weight * stack
        else:
            if self._real is None:
                self._real = weight * stack
            else:
                self._real += weight * stack

    def total(self) -> np.ndarray:
        grid = self.grid
        out = np.zeros((grid.d,) + grid.shape)
        if self._real is not None:
            out += self._real
        if self._hat is not None:
            for c in range(grid.d):
                out[c] += np.fft.ifftn(self._hat[c]).real
        return out


def picard_iterate(evo: OUEvolution, prev: Trajectory, u0: VectorField,
                   dealias: bool = True) -> Trajectory:
    """One Picard update of the whole trajectory.

    The Duhamel integral for output time ``t_i`` runs composite Simpson
    over the stored samples ``t_0 .. t_i``, evolving the stored nonlinear
    term of the previous iterate from each sample to ``t_i``.
    """
    grid = u0.grid
    times = prev.times
    dt = times[1] - times[0]
    spectra = [_nonlinear_spectrum(f, dealias) for f in prev.fields]
    fields = [u0.copy()]
    for i in range(1, len(times)):
        linear = evolve_vector(evo, u0, times[0], times[i])
        weights = _simpson_weights(i) * dt
        acc = _DuhamelAccumulator(grid)
        for k in range(i + 1):
            if weights[k] == 0.0:
                continue
            kind, stack = _evolved_spectrum(evo, spectra[k], grid,
                                            times[k], times[i])
            acc.add(kind, stack, weights[k])
        values = linear.values - acc.total()
        if not np.all(np.isfinite(values)):
            raise ArithmeticError(
                f"Picard update produced non-finite values at t={times[i]:g}; "
                "the Duhamel quadrature is unstable for this scenario")
        fields.append(VectorField(grid, values))
    return Trajectory(times=times, fields=fields, p=prev.p, q=prev.q)


# ---------------------------------------------------------------------------
# weighted-norm bookkeeping

def _gradient_stack(u: VectorField) -> VectorFieldStack:
    grid = u.grid
    out = np.empty((grid.d * grid.d,) + grid.shape)
    for c in range(grid.d):
        out[c * grid.d:(c + 1) * grid.d] = gradient(u.components[c]).values
    return VectorFieldStack(grid, out)


def kato_constants(traj_pair) -> IterateConstants:
    """Weighted supremum norms of an iterate and of its gap to the next.

    The ``t = 0`` sample is excluded from every supremum.
    """
    cur, nxt = traj_pair
    if cur.fields[0].grid != nxt.fields[0].grid or len(cur.times) != len(nxt.times):
        raise ValueError("trajectories must share grid and time samples")
    gamma = cur.gamma
    k = kp = el = elp = 0.0
    for i in range(1, len(cur.times)):
        t = cur.times[i]
        wq, wg = t ** gamma, np.sqrt(t)
        k = max(k, wq * lp_norm(cur.fields[i], cur.q))
        kp = max(kp, wg * lp_norm(_gradient_stack(cur.fields[i]), cur.p))
        diff = VectorField(cur.grid, nxt.fields[i].values - cur.fields[i].values)
        el = max(el, wq * lp_norm(diff, cur.q))
        elp = max(elp, wg * lp_norm(_gradient_stack(diff), cur.p))
    return IterateConstants(iterate=0, weighted_q_norm=k, weighted_grad_norm=kp,
                            diff_q_norm=el, diff_grad_norm=elp)


def _sup_p_norm(traj: Trajectory) -> float:
    return max(lp_norm(f, traj.p) for f in traj.fields)


def _sup_p_diff(a: Trajectory, b: Trajectory) -> float:
    grid = a.grid
    return max(lp_norm(VectorField(grid, fb.values - fa.values), a.p)
               for fa, fb in zip(a.fields, b.fields))


def solve_mild(evo: OUEvolution, u0: VectorField, T0: float,
               params: SolverParams | None = None, p: float | None = None,
               q: float | None = None):
    """Iterate the Picard map until the trajectory is a fixed point.

    Stops when the supremum-in-time p-norm of the update falls below
    ``picard_tol`` relative to the previous iterate, or flags
    non-convergence after ``picard_max_iter`` sweeps (the last trajectory
    is returned either way).  Returns ``(trajectory, report)``.
    """
    params = params or evo.solver
    grid = u0.grid
    if p is None:
        p = float(grid.d)
    if q is None:
        q = 2.0 * grid.d
    if T0 <= 0:
        raise ValueError("T0 must be positive")
    rel = relative_divergence(u0)
    if rel > NONLINEAR_DIV_TOL:
        raise NotSolenoidalError(
            f"initial data has relative divergence {rel:.3e}")

    times = np.linspace(0.0, T0, params.duhamel_steps + 1)
    prev = Trajectory.zero(grid, times, p, q)
    constants = []
    converged = False
    iterations = 0
    for j in range(1, params.picard_max_iter + 1):
        cur = picard_iterate(evo, prev, u0, params.dealias)
        iterations = j
        if j >= 2:
            c = kato_constants((prev, cur))
            constants.append(IterateConstants(
                iterate=j - 1, weighted_q_norm=c.weighted_q_norm,
                weighted_grad_norm=c.weighted_grad_norm,
                diff_q_norm=c.diff_q_norm, diff_grad_norm=c.diff_grad_norm))
        diff = _sup_p_diff(prev, cur)
        base = _sup_p_norm(prev)
        prev = cur
        if j >= 2 and diff <= params.picard_tol * base:
            converged = True
            break
        if j == 1 and base == 0.0 and diff == 0.0:
            converged = True  # zero data is an exact fixed point
            break
    residual = duhamel_residual(evo, prev, u0, params.dealias)
    report = KatoReport(constants=constants, iterations=iterations,
                        converged=converged, duhamel_residual=residual)
    return prev, report


# ---------------------------------------------------------------------------
# a-posteriori residual

def _midpoint_spectra(spectra: list) -> list:
    """Spectra of the nonlinear term at panel midpoints.

    Cubic interpolation in time across four neighbouring samples (one-sided
    at the ends); for very short trajectories degrades to quadratic/linear.
    """
    n = len(spectra) - 1
    mids = []
    for k in range(n):
        if n >= 3:
            if 1 <= k <= n - 2:
                stencil = (k - 1, k, k + 1, k + 2)
                wts = (-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0)
            elif k == 0:
                stencil = (0, 1, 2, 3)
                wts = (0.3125, 0.9375, -0.3125, 0.0625)
            else:
                stencil = (n - 3, n - 2, n - 1, n)
                wts = (0.0625, -0.3125, 0.9375, 0.3125)
        elif n == 2:
            x = k + 0.5
            wts = ((x - 1) * (x - 2) / 2.0, -x * (x - 2), x * (x - 1) / 2.0)
            stencil = (0, 1, 2)
        else:
            stencil, wts = (0, 1), (0.5, 0.5)
        acc = wts[0] * spectra[stencil[0]]
        for idx, w in zip(stencil[1:], wts[1:]):
            acc = acc + w * spectra[idx]
        mids.append(acc)
    return mids


def duhamel_residual(evo: OUEvolution, traj: Trajectory, u0: VectorField,
                     dealias: bool = True) -> float:
    """Defect of the trajectory in the integral equation, re-quadratured.

    The Duhamel integral is recomputed at doubled time resolution (panel
    midpoints filled by cubic interpolation of the stored spectral
    nonlinear term) and the worst relative p-norm gap over the output
    times is returned, normalized by the p-norm of the initial data.
    """
    norm0 = lp_norm(u0, traj.p)
    if norm0 == 0.0:
        return 0.0
    grid = traj.grid
    times = traj.times
    dt = times[1] - times[0]
    spectra = [_nonlinear_spectrum(f, dealias) for f in traj.fields]
    mids = _midpoint_spectra(spectra)
    worst = 0.0
    for i in range(1, len(times)):
        linear = evolve_vector(evo, u0, times[0], times[i])
        weights = _simpson_weights(2 * i) * (0.5 * dt)
        acc = _DuhamelAccumulator(grid)
        for node in range(2 * i + 1):
            w = weights[node]
            if w == 0.0:
                continue
            k, is_mid = divmod(node, 2)
            hats = mids[k] if is_mid else spectra[k]
            s = times[0] + 0.5 * dt * node
            kind, stack = _evolved_spectrum(evo, hats, grid, s, times[i])
            acc.add(kind, stack, w)
        rhs = linear.values - acc.total()
        gap = VectorField(grid, traj.fields[i].values - rhs)
        worst = max(worst, lp_norm(gap, traj.p) / norm0)
    return worst

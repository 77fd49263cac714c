"""Adaptive composite Gauss-Legendre quadrature for array-valued integrands.

Panels use an 8-point Gauss-Legendre rule and are bisected until the
whole-panel estimate agrees with the two-half-panel estimate to within the
panel's share of the requested absolute tolerance.
"""

from __future__ import annotations

import numpy as np

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(8)


class QuadratureError(RuntimeError):
    """Raised when panel bisection fails to converge within the depth limit."""


def _panel(f, a: float, b: float) -> np.ndarray:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    acc = None
    for x, w in zip(_NODES, _WEIGHTS):
        v = np.asarray(f(mid + half * x), dtype=float)
        acc = w * v if acc is None else acc + w * v
    return half * acc


def adaptive_quadrature(f, a: float, b: float, tol: float = 1e-10,
                        max_depth: int = 28):
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    ``f`` may return a scalar or an ndarray of fixed shape; the error of a
    panel is measured in the max-abs norm.  ``b < a`` flips the sign.
    Returns a float for scalar integrands, otherwise an ndarray.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if a == b:
        return np.zeros_like(np.asarray(f(a), dtype=float)) * 0.0

    sign = 1.0
    lo, hi = a, b
    if hi < lo:
        lo, hi = hi, lo
        sign = -1.0
    width = hi - lo

    total = None
    stack = [(lo, hi, _panel(f, lo, hi), 0)]
    while stack:
        x0, x1, coarse, depth = stack.pop()
        mid = 0.5 * (x0 + x1)
        left = _panel(f, x0, mid)
        right = _panel(f, mid, x1)
        fine = left + right
        err = np.max(np.abs(fine - coarse))
        if err <= tol * (x1 - x0) / width:
            total = fine if total is None else total + fine
        else:
            if depth >= max_depth:
                raise QuadratureError(
                    f"quadrature panel [{x0}, {x1}] did not converge after "
                    f"{max_depth} bisections (err={err:.3e})")
            stack.append((x0, mid, left, depth + 1))
            stack.append((mid, x1, right, depth + 1))

    result = sign * total
    if result.ndim == 0:
        return float(result)
    return result

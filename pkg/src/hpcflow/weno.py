"""Fifth-order WENO derivative approximations for Hamilton-Jacobi equations.

Jiang-Peng form: the upwind-biased first derivative at a node is a nonlinear
convex combination of three third-order candidates built from first
differences, weighted by Jiang-Shu smoothness indicators.
"""

from __future__ import annotations

import numpy as np

WENO_EPS = 1e-12
GHOST = 3


def weno5_combine(v1, v2, v3, v4, v5, eps=WENO_EPS):
    """WENO5 value from five consecutive first differences, biased toward ``v3``."""
    p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0

    s1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3) ** 2 + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3) ** 2
    s2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5) ** 2 + 0.25 * (3.0 * v3 - 4.0 * v4 + v5) ** 2

    a1 = 0.1 / (eps + s1) ** 2
    a2 = 0.6 / (eps + s2) ** 2
    a3 = 0.3 / (eps + s3) ** 2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


def _take(d, start, count, axis):
    idx = [slice(None)] * d.ndim
    idx[axis] = slice(start, start + count)
    return d[tuple(idx)]


def weno5_biased_derivatives(P, h, axis=0, ghost=GHOST, eps=WENO_EPS):
    """Left- and right-biased derivative approximations along ``axis``.

    ``P`` carries ``ghost`` (>= 3) filled ghost layers on both ends of
    ``axis``; the result covers the interior nodes only.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[axis] - 2 * ghost
    if ghost < 3 or n < 1:
        raise ValueError("need at least 3 ghost layers and one interior node")
    d = np.diff(P, axis=axis) / h
    # d[j] = (P[j+1] - P[j]) / h; interior node i sits at padded index ghost + i
    g = ghost
    minus = weno5_combine(
        _take(d, g - 3, n, axis),
        _take(d, g - 2, n, axis),
        _take(d, g - 1, n, axis),
        _take(d, g, n, axis),
        _take(d, g + 1, n, axis),
        eps,
    )
    plus = weno5_combine(
        _take(d, g + 2, n, axis),
        _take(d, g + 1, n, axis),
        _take(d, g, n, axis),
        _take(d, g - 1, n, axis),
        _take(d, g - 2, n, axis),
        eps,
    )
    return minus, plus


def second_derivative_central(P, h, axis=0, ghost=GHOST):
    """Three-point second difference along ``axis`` at interior nodes."""
    P = np.asarray(P, dtype=float)
    n = P.shape[axis] - 2 * ghost
    return (_take(P, ghost + 1, n, axis) - 2.0 * _take(P, ghost, n, axis) + _take(P, ghost - 1, n, axis)) / (h * h)

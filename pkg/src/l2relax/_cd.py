"""Coordinate descent for ``min_x 0.5 x'Qx - b'x + pen * ||x||_1``.

Both the L2-relaxation dual (Q = S'S, b = eta) and the gram-form LASSO
(Q = S, b = eta) have this shape, so they share one kernel.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def cd_l1_quadratic(Q, b, pen, x, tol, max_sweeps, order):
    """Cyclic coordinate descent with active-set cycling, in place on ``x``.

    Sweeps run over ``order``; after any full sweep that moved a coordinate
    the solver cycles over the nonzero coordinates only until they settle,
    then re-checks with a full sweep. Coordinates with ``Q[i, i] <= 0`` stay
    at zero. Returns ``(sweeps, converged)``.
    """
    n = b.shape[0]
    g = b - Q @ x  # b - Qx
    sweeps = 0
    active_only = False
    converged = False
    while sweeps < max_sweeps:
        maxdelta = 0.0
        for k in range(n):
            i = order[k]
            xi = x[i]
            if active_only and xi == 0.0:
                continue
            qii = Q[i, i]
            if qii <= 0.0:
                if xi != 0.0:
                    for j in range(n):
                        g[j] += xi * Q[i, j]
                    x[i] = 0.0
                continue
            new = _soft(g[i] + qii * xi, pen) / qii
            d = new - xi
            if d != 0.0:
                for j in range(n):
                    g[j] -= d * Q[i, j]
                x[i] = new
                ad = abs(d)
                if ad > maxdelta:
                    maxdelta = ad
        sweeps += 1
        if maxdelta < tol:
            if active_only:
                active_only = False
            else:
                converged = True
                break
        else:
            active_only = True
    return sweeps, converged


@njit(cache=True)
def cd_l1_quadratic_lazy(S, b, pen, x, tol, max_sweeps, order):
    """Same problem with Q = S'S never formed (S symmetric, large N).

    Column i of Q is rebuilt as ``S @ S[:, i]`` whenever coordinate i moves.
    """
    n = b.shape[0]
    diag = np.empty(n)
    for i in range(n):
        diag[i] = S[i] @ S[i]
    g = b - S @ (S @ x)
    sweeps = 0
    active_only = False
    converged = False
    while sweeps < max_sweeps:
        maxdelta = 0.0
        for k in range(n):
            i = order[k]
            xi = x[i]
            if active_only and xi == 0.0:
                continue
            qii = diag[i]
            if qii <= 0.0:
                continue
            new = _soft(g[i] + qii * xi, pen) / qii
            d = new - xi
            if d != 0.0:
                col = S @ S[i]
                for j in range(n):
                    g[j] -= d * col[j]
                x[i] = new
                ad = abs(d)
                if ad > maxdelta:
                    maxdelta = ad
        sweeps += 1
        if maxdelta < tol:
            if active_only:
                active_only = False
            else:
                converged = True
                break
        else:
            active_only = True
    return sweeps, converged


def l1_quadratic_objective(Q: np.ndarray, b: np.ndarray, pen: float, x: np.ndarray) -> float:
    return float(0.5 * x @ Q @ x - b @ x + pen * np.abs(x).sum())


def polish(Q, b, pen, x, slack=1e-9):
    """Re-solve exactly on the support and sign pattern found by descent.

    Returns the refined point when it keeps the sign pattern, satisfies the
    subgradient condition off the support and does not raise the objective;
    otherwise returns ``x`` unchanged.
    """
    support = np.flatnonzero(x)
    if support.size == 0:
        return x
    s = np.sign(x[support])
    rhs = b[support] - pen * s
    Qss = Q[np.ix_(support, support)]
    xs, *_ = np.linalg.lstsq(Qss, rhs, rcond=None)
    if np.any(np.sign(xs) != s):
        return x
    cand = np.zeros_like(x)
    cand[support] = xs
    g = b - Q @ cand
    off = np.ones(x.shape[0], dtype=bool)
    off[support] = False
    scale = max(pen, float(np.max(np.abs(b))) if b.size else 0.0, 1.0)
    if off.any() and np.max(np.abs(g[off])) > pen + slack * scale:
        return x
    if l1_quadratic_objective(Q, b, pen, cand) > l1_quadratic_objective(Q, b, pen, x) + 1e-14 * scale:
        return x
    return cand

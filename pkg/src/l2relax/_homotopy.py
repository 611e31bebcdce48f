"""Exact solution path of ``min_x 0.5 x'Qx - b'x + pen ||x||_1`` in ``pen``.

The path is piecewise linear. Starting from ``pen = max|b|`` (where x = 0),
the active set grows or shrinks at breakpoints; between breakpoints
``x_W = Q_WW^{-1} (b_W - pen * s_W)``. The Cholesky factor of ``Q_WW`` is
extended when a coordinate enters and rebuilt when one leaves. Stops early
when ``Q_WW`` becomes numerically singular; the caller finishes those grid
values another way.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_COND_LIMIT = 1e12


@njit(cache=True)
def _chol_rebuild(Q, act, w, L):
    """Cholesky of Q[act[:w], act[:w]] into L[:w, :w]; False if not PD."""
    for i in range(w):
        for j in range(i + 1):
            s = Q[act[i], act[j]]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return True


@njit(cache=True)
def _chol_solve(L, w, rhs, out, tmp):
    for i in range(w):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * tmp[k]
        tmp[i] = s / L[i, i]
    for i in range(w - 1, -1, -1):
        s = tmp[i]
        for k in range(i + 1, w):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _cond_ok(L, w, limit):
    lo = np.inf
    hi = 0.0
    for i in range(w):
        d = L[i, i]
        if d < lo:
            lo = d
        if d > hi:
            hi = d
    return lo > 0.0 and (hi / lo) ** 2 <= limit


@njit(cache=True)
def _path_kernel(Q, b, pens_desc, max_events, cond_limit):
    """Solutions at ``pens_desc`` (descending). Returns ``(X, n_done)``."""
    n = b.shape[0]
    m = pens_desc.shape[0]
    X = np.zeros((m, n))
    top = 0.0
    j0 = 0
    for i in range(n):
        if abs(b[i]) > top:
            top = abs(b[i])
            j0 = i
    k = 0
    while k < m and pens_desc[k] >= top:
        k += 1
    if k == m or top == 0.0:
        return X, k

    act = np.empty(n, dtype=np.int64)
    sgn = np.empty(n)
    inW = np.zeros(n, dtype=np.bool_)
    L = np.zeros((n, n))
    rhs = np.empty(n)
    xw = np.empty(n)
    d = np.empty(n)
    tmp = np.empty(n)
    c = np.empty(n)
    a = np.empty(n)

    act[0] = j0
    sgn[0] = 1.0 if b[j0] > 0 else -1.0
    inW[j0] = True
    w = 1
    if Q[j0, j0] <= 0.0:
        return X, k
    L[0, 0] = np.sqrt(Q[j0, j0])
    pen = top
    eps = 1e-13 * max(1.0, top)

    for _ in range(max_events):
        if not _cond_ok(L, w, cond_limit):
            break
        for i in range(w):
            rhs[i] = b[act[i]] - pen * sgn[i]
        _chol_solve(L, w, rhs, xw, tmp)
        _chol_solve(L, w, sgn, d, tmp)

        # Q symmetric: walk rows of the active coordinates for contiguous reads
        for j in range(n):
            c[j] = b[j]
            a[j] = 0.0
        for i in range(w):
            row = Q[act[i]]
            xi = xw[i]
            di = d[i]
            for j in range(n):
                c[j] -= row[j] * xi
                a[j] += row[j] * di

        step = np.inf
        event = -1
        enter_sign = 0.0
        for j in range(n):
            if inW[j]:
                continue
            if 1.0 - a[j] > 1e-12:
                up = (pen - c[j]) / (1.0 - a[j])
                if up > eps and up < step:
                    step = up
                    event = j
                    enter_sign = 1.0
            if 1.0 + a[j] > 1e-12:
                dn = (pen + c[j]) / (1.0 + a[j])
                if dn > eps and dn < step:
                    step = dn
                    event = j
                    enter_sign = -1.0
        drop = -1
        for i in range(w):
            # only coordinates heading toward zero from their sign can leave;
            # a fresh entrant sitting at rounding level on the wrong side stays
            if d[i] * sgn[i] < 0.0:
                cr = -xw[i] / d[i]
                if cr > eps and cr < step:
                    step = cr
                    drop = i
        if drop >= 0:
            event = -1

        # grid values passed before the next breakpoint
        while k < m and pen - pens_desc[k] <= step:
            delta = pen - pens_desc[k]
            for i in range(w):
                X[k, act[i]] = xw[i] + delta * d[i]
            k += 1
        if k == m or not np.isfinite(step):
            break
        pen -= step

        if drop >= 0:
            inW[act[drop]] = False
            for i in range(drop, w - 1):
                act[i] = act[i + 1]
                sgn[i] = sgn[i + 1]
            w -= 1
            if w == 0:
                break
            if not _chol_rebuild(Q, act, w, L):
                break
        elif event >= 0:
            # extend the factor by one row
            for i in range(w):
                s = Q[act[i], event]
                for kk in range(i):
                    s -= L[i, kk] * tmp[kk]
                tmp[i] = s / L[i, i]
            s = Q[event, event]
            for i in range(w):
                s -= tmp[i] * tmp[i]
            if not s > 0.0:
                break
            for i in range(w):
                L[w, i] = tmp[i]
            L[w, w] = np.sqrt(s)
            act[w] = event
            sgn[w] = enter_sign
            inW[event] = True
            w += 1
    return X, k


def l1_path(Q: np.ndarray, b: np.ndarray, pens, max_events: int | None = None):
    """Solutions at each value of ``pens`` (any order).

    Returns ``(X, done)``: ``X[k]`` is the solution at ``pens[k]`` and
    ``done[k]`` is False where the path stopped before reaching it.
    """
    pens = np.asarray(pens, dtype=float)
    n = b.shape[0]
    X = np.zeros((pens.size, n))
    done = np.zeros(pens.size, dtype=bool)
    if n == 0:
        done[:] = True
        return X, done
    order = np.argsort(-pens, kind="stable")
    max_events = max_events if max_events is not None else 20 * n + 100
    Xs, k = _path_kernel(
        np.ascontiguousarray(Q, dtype=float),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(pens[order]),
        int(max_events),
        _COND_LIMIT,
    )
    X[order] = Xs
    done[order[:k]] = True
    return X, done

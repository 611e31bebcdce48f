"""L2-relaxation estimator.

The primal problem is

    min_b 0.5 * ||b||^2   s.t.   ||eta - Sigma b||_inf <= tau,

solved through its dual ``min_g 0.5 g'Sigma'Sigma g - eta'g + tau ||g||_1``
with the primal recovered as ``b = Sigma g``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from ._homotopy import l1_path
from ._cd import cd_l1_quadratic, cd_l1_quadratic_lazy, l1_quadratic_objective, polish
from .panel import GramPair, StandardizationParams, TimePanel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_sweeps: int = 100_000
    feasibility_slack: float = 1e-6
    polish: bool = True
    order: Sequence[int] | None = None  # coordinate visiting order, default 0..N-1
    dense_limit: int = 2000  # above this N the dual curvature matrix is never formed

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True)
class RelaxationFit:
    """Fitted L2-relaxation coefficients.

    ``scale`` is ``"raw"`` when the coefficients live in the same units as
    the gram they were fitted on; ``"original"`` after mapping back from
    standardized data (the dual vector then stays in standardized units).
    """

    tau: float
    beta: np.ndarray
    alpha: float
    gamma: np.ndarray
    kkt_residual: float
    sweeps_used: int = 0
    converged: bool = True
    scale: str = "raw"
    method: str = field(default="l2relax", repr=False)

    @property
    def hyper(self) -> float:
        return self.tau

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tau": float(self.tau),
            "alpha": float(self.alpha),
            "beta": np.asarray(self.beta).tolist(),
            "gamma": np.asarray(self.gamma).tolist(),
            "kkt_residual": float(self.kkt_residual),
            "converged": bool(self.converged),
            "sweeps_used": int(self.sweeps_used),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelaxationFit":
        return cls(
            tau=float(d["tau"]),
            beta=np.asarray(d["beta"], dtype=float),
            alpha=float(d["alpha"]),
            gamma=np.asarray(d.get("gamma", []), dtype=float),
            kkt_residual=float(d.get("kkt_residual", 0.0)),
            sweeps_used=int(d.get("sweeps_used", 0)),
            converged=bool(d.get("converged", True)),
            scale=d.get("scale", "raw"),
        )


class DualSolution(NamedTuple):
    gamma: np.ndarray
    sweeps: int
    converged: bool
    objective: float


def dual_objective(gram: GramPair, gamma: np.ndarray, tau: float) -> float:
    s_gamma = gram.sigma @ gamma
    return float(0.5 * s_gamma @ s_gamma - gram.eta @ gamma + tau * np.abs(gamma).sum())


def dual_curvature(gram: GramPair) -> np.ndarray:
    """``Sigma' Sigma`` as a C-contiguous array."""
    return np.ascontiguousarray(gram.sigma.T @ gram.sigma)


def _pinv_apply(sigma: np.ndarray, v: np.ndarray, power: int = 1, rel_cut: float = 1e-10) -> np.ndarray:
    w, V = np.linalg.eigh(sigma)
    top = w.max() if w.size else 0.0
    if top <= 0:
        return np.zeros_like(v)
    keep = w > rel_cut * top
    Vk = V[:, keep]
    return Vk @ ((Vk.T @ v) / w[keep] ** power)


def _order(settings: SolverSettings, n: int) -> np.ndarray:
    if settings.order is None:
        return np.arange(n, dtype=np.int64)
    order = np.asarray(settings.order, dtype=np.int64)
    if order.shape != (n,) or np.unique(order).size != n:
        raise ValueError("order must be a permutation of range(N)")
    return order


def solve_dual(
    gram: GramPair,
    tau: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
    *,
    gamma0: np.ndarray | None = None,
    curvature: np.ndarray | None = None,
) -> DualSolution:
    """Minimize the dual objective by cyclic coordinate descent.

    ``tau == 0`` has no penalty and is solved in closed form with the
    pseudo-inverse, giving the minimum-norm dual point. ``curvature`` may
    carry a precomputed ``Sigma'Sigma`` to share across calls.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    n = gram.N
    if tau == 0:
        gamma = _pinv_apply(gram.sigma, gram.eta, power=2)
        return DualSolution(gamma, 0, True, dual_objective(gram, gamma, 0.0))
    if tau >= gram.eta_sup:
        gamma = np.zeros(n)
        return DualSolution(gamma, 0, True, 0.0)

    gamma = np.zeros(n) if gamma0 is None else np.array(gamma0, dtype=float)
    order = _order(settings, n)
    if n > settings.dense_limit and curvature is None:
        S = np.ascontiguousarray(gram.sigma)
        sweeps, conv = cd_l1_quadratic_lazy(S, gram.eta, float(tau), gamma, settings.tol, settings.max_sweeps, order)
        if settings.polish:
            log.debug("polish skipped for N=%d above dense limit", n)
        return DualSolution(gamma, int(sweeps), bool(conv), dual_objective(gram, gamma, tau))

    A = dual_curvature(gram) if curvature is None else curvature
    if not settings.polish:
        sweeps, conv = cd_l1_quadratic(A, gram.eta, float(tau), gamma, settings.tol, settings.max_sweeps, order)
        if not conv:
            log.warning("dual coordinate descent hit max_sweeps=%d at tau=%g", settings.max_sweeps, tau)
        return DualSolution(gamma, int(sweeps), bool(conv), l1_quadratic_objective(A, gram.eta, tau, gamma))

    # descent in growing chunks; after each chunk try the exact re-solve on
    # the current support, which ends the search once the signs are right
    used, chunk, conv = 0, 16, False
    while used < settings.max_sweeps:
        sweeps, conv = cd_l1_quadratic(
            A, gram.eta, float(tau), gamma, settings.tol, min(chunk, settings.max_sweeps - used), order
        )
        used += int(sweeps)
        refined = polish(A, gram.eta, float(tau), gamma)
        if refined is not gamma:
            gamma, conv = refined, True
            break
        if conv:
            break
        chunk *= 2
    if not conv:
        log.warning("dual coordinate descent hit max_sweeps=%d at tau=%g", settings.max_sweeps, tau)
    return DualSolution(gamma, used, bool(conv), l1_quadratic_objective(A, gram.eta, tau, gamma))


def _kkt_residual(gram: GramPair, beta: np.ndarray, tau: float) -> float:
    if gram.N == 0:
        return 0.0
    return max(float(np.max(np.abs(gram.eta - gram.sigma @ beta))) - tau, 0.0)


def fit_ridgeless(gram: GramPair) -> RelaxationFit:
    """Minimum-norm solution ``pinv(Sigma) @ eta`` (tau recorded as 0)."""
    beta = _pinv_apply(gram.sigma, gram.eta)
    gamma = _pinv_apply(gram.sigma, beta)
    alpha = gram.y_mean - float(gram.x_means @ beta)
    return RelaxationFit(
        tau=0.0,
        beta=beta,
        alpha=alpha,
        gamma=gamma,
        kkt_residual=_kkt_residual(gram, beta, 0.0),
        method="ridgeless",
    )


def fit(
    gram: GramPair,
    tau: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
    *,
    gamma0: np.ndarray | None = None,
    curvature: np.ndarray | None = None,
    method: str = "auto",
) -> RelaxationFit:
    """L2-relaxation coefficients and intercept at a given ``tau``.

    ``method="auto"`` first follows the exact dual path down to ``tau`` and
    keeps it when the optimality conditions check out; otherwise, and with
    ``method="cd"``, the dual is solved by coordinate descent.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return replace(fit_ridgeless(gram), method="l2relax")
    if tau >= gram.eta_sup:
        beta = np.zeros(gram.N)
        return RelaxationFit(
            tau=float(tau), beta=beta, alpha=gram.y_mean, gamma=np.zeros(gram.N), kkt_residual=0.0
        )
    if method == "auto" and gram.N <= settings.dense_limit:
        A = dual_curvature(gram) if curvature is None else curvature
        G, done = l1_path(A, gram.eta, [tau])
        if done[0] and _kkt_ok(A, gram.eta, float(tau), G[0], settings.feasibility_slack * 1e-2):
            return _fit_from_gamma(gram, float(tau), G[0])
        curvature = A
    elif method not in ("auto", "cd"):
        raise ValueError(f"unknown fit method {method!r}")
    sol = solve_dual(gram, tau, settings, gamma0=gamma0, curvature=curvature)
    beta = gram.sigma @ sol.gamma
    alpha = gram.y_mean - float(gram.x_means @ beta)
    return RelaxationFit(
        tau=float(tau),
        beta=beta,
        alpha=alpha,
        gamma=sol.gamma,
        kkt_residual=_kkt_residual(gram, beta, tau),
        sweeps_used=sol.sweeps,
        converged=sol.converged,
    )


def _kkt_ok(A: np.ndarray, eta: np.ndarray, pen: float, x: np.ndarray, slack: float) -> bool:
    g = eta - A @ x
    scale = max(pen, float(np.max(np.abs(eta))) if eta.size else 0.0)
    if np.max(np.abs(g)) > pen + slack * scale + 1e-12:
        return False
    on = x != 0
    return bool(np.all(np.abs(g[on] - pen * np.sign(x[on])) <= slack * scale + 1e-12))


def fit_path(
    gram: GramPair, taus, settings: SolverSettings = DEFAULT_SETTINGS, *, method: str = "homotopy"
) -> list[RelaxationFit]:
    """Fits for every value in ``taus`` (returned in input order).

    ``method="homotopy"`` follows the exact piecewise-linear dual path and
    verifies the optimality conditions at each grid value; any value it
    cannot certify is re-solved by coordinate descent. ``method="cd"``
    visits the values in descending order with warm starts.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise ValueError("tau must be nonnegative")
    dense = gram.N <= settings.dense_limit
    A = dual_curvature(gram) if dense else None
    out: list[RelaxationFit | None] = [None] * taus.size
    certified = np.zeros(taus.size, dtype=bool)
    if method == "homotopy" and dense:
        positive = taus > 0
        G, done = l1_path(A, gram.eta, np.where(positive, taus, gram.eta_sup))
        for k in np.flatnonzero(positive & done):
            g = G[k]
            if _kkt_ok(A, gram.eta, float(taus[k]), g, settings.feasibility_slack * 1e-2):
                out[k] = _fit_from_gamma(gram, float(taus[k]), g)
                certified[k] = True
    elif method not in ("homotopy", "cd"):
        raise ValueError(f"unknown path method {method!r}")
    gamma = np.zeros(gram.N)
    for k in np.argsort(-taus, kind="stable"):
        if certified[k]:
            gamma = out[k].gamma  # type: ignore[union-attr]
            continue
        f = fit(gram, float(taus[k]), settings, gamma0=gamma, curvature=A, method="cd")
        out[k] = f
        gamma = f.gamma
    return out  # type: ignore[return-value]


def _fit_from_gamma(gram: GramPair, tau: float, gamma: np.ndarray, sweeps: int = 0, converged: bool = True):
    beta = gram.sigma @ gamma
    return RelaxationFit(
        tau=tau,
        beta=beta,
        alpha=gram.y_mean - float(gram.x_means @ beta),
        gamma=gamma,
        kkt_residual=_kkt_residual(gram, beta, tau),
        sweeps_used=sweeps,
        converged=converged,
    )


# ------------------------------------------------------------- prediction


def predict(fit, x_new, gram: GramPair | None = None):
    """Out-of-sample prediction ``ybar + (x - xbar)'beta`` (= alpha + x'beta).

    ``x_new`` is a length-N vector or an N x k block of periods (columns).
    Works for any fit exposing ``beta`` and ``alpha``.
    """
    x_new = np.asarray(x_new, dtype=float)
    beta = np.asarray(fit.beta)
    if gram is not None:
        centered = x_new - (gram.x_means if x_new.ndim == 1 else gram.x_means[:, None])
        out = gram.y_mean + centered.T @ beta
    else:
        out = fit.alpha + x_new.T @ beta
    return float(out) if np.ndim(out) == 0 else out


def residuals(fit, panel: TimePanel, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.intp)
    return panel.y[idx] - predict(fit, panel.X[:, idx])


def mpse(fit, panel: TimePanel, idx) -> float:
    """Mean squared prediction error over ``idx``."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("mpse needs a nonempty index set")
    e = residuals(fit, panel, idx)
    return float(np.mean(e * e))


def to_original_units(fit, params: StandardizationParams):
    """Map a fit on standardized data back to the original data scale.

    Predictions of the returned fit on raw data equal the de-standardized
    predictions of the input fit on standardized data.
    """
    beta = np.asarray(fit.beta) * params.y_sd / params.x_sds
    alpha = params.y_mean + params.y_sd * fit.alpha - float(params.x_means @ beta)
    return replace(fit, beta=beta, alpha=alpha, scale="original")


def fit_to_json_dict(fit) -> dict:
    if hasattr(fit, "to_dict"):
        return fit.to_dict()
    return asdict(fit)

"""Comparator estimators: OLS, ridge, LASSO and principal-component regression.

Every fit exposes ``beta`` and ``alpha`` so the common prediction rule
``alpha + x'beta`` applies. Intercepts are never penalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._cd import cd_l1_quadratic, l1_quadratic_objective, polish
from ._homotopy import l1_path
from .panel import GramPair, TimePanel, compute_gram
from .solver import DEFAULT_SETTINGS, SolverSettings

METHODS = ("ols", "ridge", "lasso", "pca")


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class BaselineFit:
    method: str
    hyper: float | int | None
    beta: np.ndarray
    alpha: float
    extras: dict = field(default_factory=dict, repr=False)
    converged: bool = True
    scale: str = "raw"

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "hyper": self.hyper,
            "alpha": float(self.alpha),
            "beta": np.asarray(self.beta).tolist(),
            "converged": bool(self.converged),
            "scale": self.scale,
        }
        if "n_factors" in self.extras:
            out["n_factors"] = int(self.extras["n_factors"])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineFit":
        return cls(
            method=d["method"],
            hyper=d.get("hyper"),
            beta=np.asarray(d["beta"], dtype=float),
            alpha=float(d["alpha"]),
            converged=bool(d.get("converged", True)),
            scale=d.get("scale", "raw"),
        )


def _intercept(gram: GramPair, beta: np.ndarray) -> float:
    return gram.y_mean - float(gram.x_means @ beta)


def fit_ols(gram: GramPair, *, max_cond: float = 1e12) -> BaselineFit:
    """``Sigma^{-1} eta``; refuses singular or badly conditioned grams."""
    n = gram.N
    if gram.n_obs and n >= gram.n_obs:
        raise RankDeficientError(f"rank-deficient gram: N={n} >= T1={gram.n_obs}")
    w = np.linalg.eigvalsh(gram.sigma)
    if w.size and (w[0] <= 0 or w[-1] / w[0] > max_cond):
        raise RankDeficientError("rank-deficient or near-singular gram")
    beta = np.linalg.solve(gram.sigma, gram.eta)
    return BaselineFit("ols", None, beta, _intercept(gram, beta))


def fit_ridge(gram: GramPair, lam: float) -> BaselineFit:
    """Ridge with loss scaled by 1/(2n): ``(Sigma + 2 lam I)^{-1} eta``."""
    if not lam > 0:
        raise ValueError("ridge penalty must be positive")
    beta = np.linalg.solve(gram.sigma + 2.0 * lam * np.eye(gram.N), gram.eta)
    return BaselineFit("ridge", float(lam), beta, _intercept(gram, beta))


def ridge_path(gram: GramPair, lams) -> list[BaselineFit]:
    """Ridge fits over a penalty grid from one eigendecomposition."""
    w, V = np.linalg.eigh(gram.sigma)
    proj = V.T @ gram.eta
    out = []
    for lam in np.asarray(lams, dtype=float):
        if not lam > 0:
            raise ValueError("ridge penalty must be positive")
        beta = V @ (proj / (w + 2.0 * lam))
        out.append(BaselineFit("ridge", float(lam), beta, _intercept(gram, beta)))
    return out


def lasso_objective(gram: GramPair, beta: np.ndarray, lam: float) -> float:
    """Gram form of ``(1/2n)||y - Xb||^2 + lam ||b||_1`` up to a constant."""
    return l1_quadratic_objective(gram.sigma, gram.eta, lam, beta)


def fit_lasso(
    gram: GramPair,
    lam: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
    *,
    beta0: np.ndarray | None = None,
) -> BaselineFit:
    """LASSO by coordinate descent on the gram form."""
    if not lam > 0:
        raise ValueError("lasso penalty must be positive")
    beta = np.zeros(gram.N) if beta0 is None else np.array(beta0, dtype=float)
    if lam >= gram.eta_sup:
        beta[:] = 0.0
        return BaselineFit("lasso", float(lam), beta, gram.y_mean)
    S = np.ascontiguousarray(gram.sigma)
    order = np.arange(gram.N, dtype=np.int64) if settings.order is None else np.asarray(settings.order, np.int64)
    used, chunk, conv = 0, 16, False
    while used < settings.max_sweeps:
        sweeps, conv = cd_l1_quadratic(S, gram.eta, float(lam), beta, settings.tol, min(chunk, settings.max_sweeps - used), order)
        used += int(sweeps)
        if settings.polish:
            refined = polish(S, gram.eta, float(lam), beta)
            if refined is not beta:
                beta, conv = refined, True
                break
        if conv:
            break
        chunk *= 2
    return BaselineFit("lasso", float(lam), beta, _intercept(gram, beta), {"sweeps": used}, converged=bool(conv))


def lasso_path(gram: GramPair, lams, settings: SolverSettings = DEFAULT_SETTINGS) -> list[BaselineFit]:
    """LASSO over a penalty grid: exact homotopy, CD where it stops short."""
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0):
        raise ValueError("lasso penalty must be positive")
    S = np.ascontiguousarray(gram.sigma)
    B, done = l1_path(S, gram.eta, lams)
    out: list[BaselineFit | None] = [None] * lams.size
    beta = np.zeros(gram.N)
    for k in np.argsort(-lams, kind="stable"):
        if done[k]:
            beta = B[k]
            out[k] = BaselineFit("lasso", float(lams[k]), beta, _intercept(gram, beta))
        else:
            f = fit_lasso(gram, float(lams[k]), settings, beta0=beta)
            out[k] = f
            beta = f.beta
    return out  # type: ignore[return-value]


# ------------------------------------------------------------------- PCA


def _centered_train(panel: TimePanel) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    tr = panel.train_idx
    Xt = panel.X[:, tr].T  # T1 x N
    x_means = Xt.mean(axis=0)
    y_mean = float(panel.y[tr].mean())
    return Xt - x_means, panel.y[tr] - y_mean, x_means, y_mean


def fit_pca(panel: TimePanel, k: int) -> BaselineFit:
    """Principal-component regression with ``k`` estimated factors.

    Factors are the top-k principal components of the demeaned training
    controls, normalized so ``F'F / T1 = I``; loadings are ``X'F / T1``. The
    target is regressed on the factors; new periods get factor estimates by
    regressing ``x_t - xbar`` on the loadings. The composite linear map is
    returned as ``beta``.
    """
    Xc, yc, x_means, y_mean = _centered_train(panel)
    T1, N = Xc.shape
    if not 1 <= k <= min(N, T1):
        raise ValueError(f"number of factors {k} outside 1..{min(N, T1)}")
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    if s[k - 1] <= 1e-12 * s[0]:
        raise ValueError(f"training controls have rank below {k}")
    Uk, sk, Vk = U[:, :k], s[:k], Vt[:k].T
    factors = math.sqrt(T1) * Uk
    loadings = Vk * sk / math.sqrt(T1)
    coef = factors.T @ yc / T1
    beta = Vk @ ((Uk.T @ yc) / sk)
    alpha = y_mean - float(x_means @ beta)
    extras = {"n_factors": k, "loadings": loadings, "factors": factors, "factor_coef": coef}
    return BaselineFit("pca", int(k), beta, alpha, extras)


def pcp1_values(panel: TimePanel, k_max: int) -> np.ndarray:
    """PC_p1 criterion for k = 1..k_max (index 0 holds k = 1)."""
    Xc, _, _, _ = _centered_train(panel)
    T1, N = Xc.shape
    if not 1 <= k_max <= min(N, T1):
        raise ValueError(f"k_max {k_max} outside 1..{min(N, T1)}")
    s2 = np.linalg.svd(Xc, compute_uv=False) ** 2
    # residual mean square after removing k components
    V = np.array([s2[k:].sum() for k in range(1, k_max + 1)]) / (N * T1)
    sigma2 = V[-1]
    ks = np.arange(1, k_max + 1)
    penalty = ks * sigma2 * ((N + T1) / (N * T1)) * math.log(N * T1 / (N + T1))
    return V + penalty


def select_factors_pcp1(panel: TimePanel, k_max: int = 8) -> int:
    """Number of factors minimizing PC_p1 (ties go to the smaller k)."""
    ic = pcp1_values(panel, k_max)
    Xc = _centered_train(panel)[0]
    # differences at rounding level of the data scale count as ties
    tie = 1e-10 * float(np.mean(Xc * Xc))
    return int(np.flatnonzero(ic <= ic.min() + tie)[0]) + 1


def fit_pca_pcp1(panel: TimePanel, k_max: int = 8) -> BaselineFit:
    k_max = min(k_max, panel.N, panel.train_idx.size)
    return fit_pca(panel, select_factors_pcp1(panel, k_max))


def fit_method(method: str, panel: TimePanel, hyper=None, settings: SolverSettings = DEFAULT_SETTINGS, gram=None):
    """Dispatch by estimator id (``l2relax``, ``ridgeless``, ``ols``, ``ridge``, ``lasso``, ``pca``)."""
    from . import solver

    if method == "pca":
        if hyper is None:
            return fit_pca_pcp1(panel)
        return fit_pca(panel, int(hyper))
    gram = compute_gram(panel) if gram is None else gram
    if method == "l2relax":
        return solver.fit(gram, float(hyper), settings)
    if method == "ridgeless":
        return solver.fit_ridgeless(gram)
    if method == "ols":
        return fit_ols(gram)
    if method == "ridge":
        return fit_ridge(gram, float(hyper))
    if method == "lasso":
        return fit_lasso(gram, float(hyper), settings)
    raise ValueError(f"unknown method {method!r}")

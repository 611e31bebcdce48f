"""Treatment-effect estimation and inference for the panel data approach.

A fit trained on the pre-treatment periods predicts the untreated outcome
after treatment; the gaps between observed and predicted outcomes estimate
the effects. Inference uses long-run variances of the pre-treatment
residuals and of the post-treatment gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import solver
from .panel import TimePanel

VARIANCE_FLOOR = 1e-12


class DegenerateVarianceError(ValueError):
    """The variance in the t-statistic denominator is not positive."""


def default_lag(L: int) -> int:
    """Truncation lag ``floor(L ** (1/5))``."""
    if L < 2:
        raise ValueError("series length must be >= 2")
    h = int(math.floor(L**0.2))
    # guard against 243 ** 0.2 = 2.9999999999999996
    while (h + 1) ** 5 <= L:
        h += 1
    return h


def hac_lrv(series, h: int, kernel: str = "uniform", demean: bool = True) -> float:
    """Truncated long-run variance ``sum_{|l| <= h} w_l * gamma_l``.

    ``gamma_l`` sums the products of lag-``l`` pairs that fall inside the
    series and divides by the full length L at every lag. ``w_l`` is 1 for
    the uniform kernel and ``1 - |l| / (h + 1)`` for Bartlett. Negative
    values are returned as is.
    """
    s = np.asarray(series, dtype=float).reshape(-1)
    L = s.size
    if L < 2:
        raise ValueError("series length must be >= 2")
    if h < 0 or h >= L:
        raise ValueError(f"lag h={h} must satisfy 0 <= h < L={L}")
    if kernel not in ("uniform", "bartlett"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if demean:
        s = s - s.mean()
    total = float(s @ s) / L
    for lag in range(1, h + 1):
        w = 1.0 if kernel == "uniform" else 1.0 - lag / (h + 1)
        total += 2.0 * w * float(s[:-lag] @ s[lag:]) / L
    return total


def two_sided_p(z: float) -> float:
    return float(2.0 * norm.sf(abs(z)))


@dataclass(frozen=True)
class SingleUnitResult:
    delta_hat: np.ndarray
    ate: float
    rho1_sq: float
    rho2_sq: float
    h1: int
    h2: int
    z: float
    p_value: float
    method: str = "l2relax"
    tau: float | None = None
    kernel: str = "uniform"

    def report(self) -> dict:
        return {
            "method": self.method,
            "tau": self.tau,
            "ate": self.ate,
            "z": self.z,
            "p_value": self.p_value,
            "rho1_sq": self.rho1_sq,
            "rho2_sq": self.rho2_sq,
            "h1": self.h1,
            "h2": self.h2,
            "kernel": self.kernel,
            "delta_hat": self.delta_hat.tolist(),
        }


@dataclass(frozen=True)
class MultiUnitResult:
    delta_hat: np.ndarray  # M x T2
    ate_t: np.ndarray
    v_hat_sq: float
    z_t: np.ndarray
    p_values: np.ndarray
    method: str = "l2relax"
    taus: tuple | None = None

    @property
    def M(self) -> int:
        return self.delta_hat.shape[0]

    def report(self) -> dict:
        return {
            "method": self.method,
            "tau": list(self.taus) if self.taus is not None else None,
            "M": self.M,
            "v_hat_sq": self.v_hat_sq,
            "ate_t": self.ate_t.tolist(),
            "z_t": self.z_t.tolist(),
            "p_values": self.p_values.tolist(),
            "delta_hat": self.delta_hat.tolist(),
        }


def ate_single(
    fit,
    panel: TimePanel,
    h1: int | None = None,
    h2: int | None = None,
    *,
    kernel: str = "uniform",
) -> SingleUnitResult:
    """Average effect over ``panel.eval_idx`` and its normal t-test of zero.

    ``fit`` must be trained on ``panel.train_idx`` in the units of ``panel``.
    The pre-treatment residuals enter their long-run variance without
    re-demeaning; the post-treatment gaps are demeaned by their average.
    """
    T1, T2 = panel.train_idx.size, panel.eval_idx.size
    if T2 < 2:
        raise ValueError("need at least 2 post-treatment periods")
    h1 = default_lag(T1) if h1 is None else int(h1)
    h2 = default_lag(T2) if h2 is None else int(h2)
    e = solver.residuals(fit, panel, panel.train_idx)
    delta = solver.residuals(fit, panel, panel.eval_idx)
    ate = float(delta.mean())
    rho1 = hac_lrv(e, h1, kernel, demean=False)
    rho2 = hac_lrv(delta, h2, kernel, demean=True)
    var = rho1 / T1 + rho2 / T2
    if not var > VARIANCE_FLOOR:
        raise DegenerateVarianceError(
            f"degenerate variance ({var:.3g}) in the t-statistic; try smaller h1/h2 (now {h1}, {h2})"
        )
    z = ate / math.sqrt(var)
    tau = getattr(fit, "tau", getattr(fit, "hyper", None))
    return SingleUnitResult(
        delta_hat=delta,
        ate=ate,
        rho1_sq=rho1,
        rho2_sq=rho2,
        h1=h1,
        h2=h2,
        z=z,
        p_value=two_sided_p(z),
        method=getattr(fit, "method", "l2relax"),
        tau=None if tau is None else float(tau),
        kernel=kernel,
    )


def multi_variance(resid: np.ndarray) -> float:
    """``(1/M) sum_i sum_j mean_t(e_it e_jt)`` for an M x T1 residual block."""
    resid = np.atleast_2d(resid)
    tot = resid.sum(axis=0)
    return float(np.mean(tot * tot) / resid.shape[0])


def ate_multi(fits, panel: TimePanel, treated) -> MultiUnitResult:
    """Per-period cross-sectional average effect over M treated units.

    ``treated`` is an M x T block of treated outcomes on the time axis of
    ``panel`` (whose ``X`` holds the controls); ``fits[i]`` predicts row i
    and was trained on ``panel.train_idx``.
    """
    Y = np.atleast_2d(np.asarray(treated, dtype=float))
    M = Y.shape[0]
    if len(fits) != M:
        raise ValueError(f"{len(fits)} fits for {M} treated units")
    if panel.eval_idx.size < 1:
        raise ValueError("need at least 1 post-treatment period")
    tr, ev = panel.train_idx, panel.eval_idx
    resid = np.empty((M, tr.size))
    delta = np.empty((M, ev.size))
    for i, f in enumerate(fits):
        resid[i] = Y[i, tr] - solver.predict(f, panel.X[:, tr])
        delta[i] = Y[i, ev] - solver.predict(f, panel.X[:, ev])
    v2 = multi_variance(resid)
    if not v2 > VARIANCE_FLOOR:
        raise DegenerateVarianceError(f"degenerate variance ({v2:.3g}) across treated units")
    ate_t = delta.mean(axis=0)
    z = math.sqrt(M) * ate_t / math.sqrt(v2)
    taus = tuple(float(getattr(f, "tau", getattr(f, "hyper", float("nan"))) or 0.0) for f in fits)
    return MultiUnitResult(
        delta_hat=delta,
        ate_t=ate_t,
        v_hat_sq=v2,
        z_t=z,
        p_values=np.array([two_sided_p(v) for v in z]),
        method=getattr(fits[0], "method", "l2relax"),
        taus=taus,
    )


def placebo_split(panel: TimePanel, pre_split: int) -> TimePanel:
    """Pre-treatment periods split into pseudo-training and pseudo-post sets."""
    tr = panel.train_idx
    if pre_split < 3 or tr.size - pre_split < 3:
        raise ValueError(
            f"placebo split {pre_split} leaves fewer than 3 periods on one side of {tr.size} pre-treatment periods"
        )
    return panel.with_split(tr[:pre_split], tr[pre_split:])


def placebo_test(
    panel: TimePanel,
    pre_split: int,
    method: str = "l2relax",
    scheme=None,
    *,
    hyper=None,
    n_grid: int = 50,
    standardize: bool = True,
    h1: int | None = None,
    h2: int | None = None,
    kernel: str = "uniform",
    seed: int = 0,
) -> SingleUnitResult:
    """Zero-effect test on a hold-out inside the pre-treatment sample.

    The first ``pre_split`` pre-treatment periods train the method (with a
    validated hyperparameter unless ``hyper`` is given); the remaining
    pre-treatment periods play the post-treatment role.
    """
    from .tuning import ValidationScheme, fit_tuned

    pseudo = placebo_split(panel, pre_split)
    scheme = ValidationScheme() if scheme is None else scheme
    f, _ = fit_tuned(pseudo, method, scheme, hyper=hyper, n_grid=n_grid, standardize=standardize, seed=seed)
    return ate_single(f, pseudo, h1, h2, kernel=kernel)

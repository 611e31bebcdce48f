"""Tuning-parameter grids and validation over the training sample."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import baselines, solver
from .panel import GramPair, TimePanel, compute_gram
from .solver import DEFAULT_SETTINGS, SolverSettings

# larger hyperparameter means more shrinkage for these; for pca fewer factors does
_SHRINK_UP = {"l2relax": True, "ridge": True, "lasso": True, "pca": False}


@dataclass(frozen=True)
class ValidationScheme:
    """``kind`` is one of ``holdout`` (sequential tail), ``block`` or ``kfold``."""

    kind: str = "holdout"
    K: int = 5
    fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in ("holdout", "block", "kfold"):
            raise ValueError(f"unknown validation scheme {self.kind!r}")
        if self.kind == "holdout" and not 0 < self.fraction < 1:
            raise ValueError("holdout fraction must lie in (0, 1)")
        if self.kind != "holdout" and self.K < 2:
            raise ValueError("K must be at least 2")

    @classmethod
    def parse(cls, text: str) -> "ValidationScheme":
        """``holdout[:0.2]``, ``block[:5]`` or ``kfold[:5]``."""
        kind, _, arg = text.strip().lower().partition(":")
        if kind in ("holdout", "oos", "sequential"):
            return cls("holdout", fraction=float(arg) if arg else 0.2)
        if kind in ("block", "kfold"):
            return cls(kind, K=int(arg) if arg else 5)
        raise ValueError(f"cannot parse validation scheme {text!r}")

    def __str__(self) -> str:
        return f"holdout:{self.fraction:g}" if self.kind == "holdout" else f"{self.kind}:{self.K}"

    def splits(self, train_idx: np.ndarray, seed: int = 0) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """``(label, fit_idx, score_idx)`` triples partitioning ``train_idx``."""
        train_idx = np.asarray(train_idx)
        n = train_idx.size
        if self.kind == "holdout":
            n_val = int(round(self.fraction * n))
            if n_val < 2 or n - n_val < 2:
                raise ValueError(f"holdout fraction {self.fraction} infeasible for {n} training periods")
            return [("holdout", train_idx[: n - n_val], train_idx[n - n_val :])]
        if self.K > n or n - -(-n // self.K) < 2:
            raise ValueError(f"{self.K} folds infeasible for {n} training periods")
        if self.kind == "block":
            groups = np.array_split(np.arange(n), self.K)
        else:
            perm = np.random.default_rng(seed).permutation(n)
            groups = [np.sort(g) for g in np.array_split(perm, self.K)]
        out = []
        for k, g in enumerate(groups, start=1):
            mask = np.ones(n, dtype=bool)
            mask[g] = False
            out.append((str(k), train_idx[mask], train_idx[g]))
        return out


@dataclass(frozen=True)
class TauGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValueError("grid is empty")
        if np.any(v < 0) or np.any(np.diff(v) <= 0):
            raise ValueError("grid must be nonnegative and strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def __iter__(self):
        return iter(self.values)


def default_grid(gram: GramPair, n_points: int = 50, lower: float = 1e-4) -> TauGrid:
    """Log-spaced grid from ``lower * ||eta||_inf`` up to ``||eta||_inf``."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    top = gram.eta_sup
    if top <= 0:
        raise ValueError("eta is zero; every tau gives the zero fit")
    vals = np.logspace(np.log10(lower * top), np.log10(top), n_points)
    vals[0], vals[-1] = lower * top, top
    return TauGrid(vals)


def default_penalty_grid(method: str, gram: GramPair | None = None, n_points: int = 50, panel: TimePanel | None = None):
    """Default hyperparameter grid for each estimator id."""
    if method == "l2relax":
        return default_grid(gram, n_points).values
    if method == "lasso":
        return default_grid(gram, n_points).values
    if method == "ridge":
        scale = float(np.trace(gram.sigma)) / max(gram.N, 1)
        return np.logspace(-4, 2, n_points) * scale
    if method == "pca":
        kmax = min(8, panel.N, panel.train_idx.size - 1)
        return np.arange(1, kmax + 1)
    raise ValueError(f"no tuning grid for method {method!r}")


def fit_grid(method: str, panel: TimePanel, grid, settings: SolverSettings = DEFAULT_SETTINGS, gram=None) -> list:
    """Fits on ``panel.train_idx`` for every grid value."""
    if method == "pca":
        return [baselines.fit_pca(panel, int(k)) for k in grid]
    gram = compute_gram(panel) if gram is None else gram
    if method == "l2relax":
        return solver.fit_path(gram, grid, settings)
    if method == "ridge":
        return baselines.ridge_path(gram, grid)
    if method == "lasso":
        return baselines.lasso_path(gram, grid, settings)
    raise ValueError(f"method {method!r} has no hyperparameter to tune")


def pick(values, scores, method: str, rtol: float = 1e-12) -> int:
    """Index of the best score; near-ties go to the most-shrinking value."""
    scores = np.asarray(scores, dtype=float)
    best = np.nanmin(scores)
    ok = np.flatnonzero(scores <= best + rtol * max(abs(best), 1e-300))
    vals = np.asarray(values)[ok]
    return int(ok[np.argmax(vals)] if _SHRINK_UP.get(method, True) else ok[np.argmin(vals)])


@dataclass
class ValidationResult:
    method: str
    chosen: float
    scores: np.ndarray
    grid: np.ndarray
    table: list[tuple[float, str, float]] = field(repr=False)
    fit: object = field(default=None, repr=False)

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hyper", "fold_or_holdout", "mpse"])
        for h, lab, m in self.table:
            w.writerow([repr(float(h)), lab, repr(float(m))])
        return buf.getvalue()


def validate(
    panel: TimePanel,
    grid,
    scheme: ValidationScheme = ValidationScheme(),
    method: str = "l2relax",
    settings: SolverSettings = DEFAULT_SETTINGS,
    *,
    seed: int = 0,
    refit: bool = True,
) -> ValidationResult:
    """Choose a hyperparameter by out-of-sample error inside the training set.

    Only ``panel.train_idx`` is read; evaluation periods never enter. The
    chosen value is refit on the whole training set when ``refit`` is set.
    """
    values = np.asarray(grid.values if isinstance(grid, TauGrid) else grid, dtype=float)
    if values.size == 0:
        raise ValueError("empty grid")
    folds = scheme.splits(panel.train_idx, seed)
    table: list[tuple[float, str, float]] = []
    per_fold = np.empty((len(folds), values.size))
    for f, (label, fit_idx, score_idx) in enumerate(folds):
        sub = panel.with_split(fit_idx, score_idx)
        fits = fit_grid(method, sub, values, settings)
        for k, ft in enumerate(fits):
            m = solver.mpse(ft, sub, score_idx)
            per_fold[f, k] = m
            table.append((float(values[k]), label, m))
    scores = per_fold.mean(axis=0)
    k = pick(values, scores, method)
    chosen = float(values[k])
    final = None
    if refit:
        final = baselines.fit_method(method, panel, int(chosen) if method == "pca" else chosen, settings)
    return ValidationResult(method, chosen, scores, values, table, final)


TUNABLE = ("l2relax", "ridge", "lasso", "pca")


def fit_tuned(
    panel: TimePanel,
    method: str = "l2relax",
    scheme: ValidationScheme = ValidationScheme(),
    *,
    hyper=None,
    n_grid: int = 50,
    standardize: bool = True,
    settings: SolverSettings = DEFAULT_SETTINGS,
    seed: int = 0,
):
    """Fit ``method`` on the training periods, validating its hyperparameter.

    With ``standardize`` the fit runs on in-sample standardized data and is
    mapped back, so the returned fit always predicts in the units of
    ``panel``. Returns ``(fit, validation result or None)``.
    """
    work, params = (panel, None)
    if standardize:
        from .panel import standardize_in_sample

        work, params = standardize_in_sample(panel)
    result = None
    if hyper is None and method in TUNABLE:
        gram = compute_gram(work) if method != "pca" else None
        grid = default_penalty_grid(method, gram, n_grid, work)
        result = validate(work, grid, scheme, method, settings, seed=seed)
        f = result.fit
    else:
        f = baselines.fit_method(method, work, hyper, settings)
    if params is not None:
        f = solver.to_original_units(f, params)
    return f, result

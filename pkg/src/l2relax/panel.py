"""Panel containers, CSV ingestion, in-sample standardization and gram objects.

A panel holds one target series ``y`` (length T) and N control series stacked
as the rows of ``X`` (N x T). The time axis is positional; labels are carried
along for reporting only. All averages over an index set use divisor |S|.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class PanelError(ValueError):
    """Raised for malformed panels and CSV inputs."""


def _as_index(idx) -> np.ndarray:
    return np.asarray(idx if idx is not None else [], dtype=np.intp).reshape(-1)


@dataclass(frozen=True)
class TimePanel:
    """Target series plus N control series on a shared time axis.

    Attributes
    ----------
    y : ndarray, shape (T,)
    X : ndarray, shape (N, T)
        One row per control unit.
    train_idx, eval_idx : ndarray of int
        Disjoint positional index sets inside ``range(T)``.
    time_labels : tuple of str, optional
    names : tuple of str, optional
        Control series names, one per row of ``X``.
    target_name : str
    """

    y: np.ndarray
    X: np.ndarray
    train_idx: np.ndarray
    eval_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    time_labels: tuple[str, ...] | None = None
    names: tuple[str, ...] | None = None
    target_name: str = "y"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != y.shape[0]:
            raise PanelError(f"X must be N x T with T={y.shape[0]}, got {X.shape}")
        tr = _as_index(self.train_idx)
        ev = _as_index(self.eval_idx)
        T = y.shape[0]
        for name, idx in (("train_idx", tr), ("eval_idx", ev)):
            if idx.size and (idx.min() < 0 or idx.max() >= T):
                raise PanelError(f"{name} outside [0, {T})")
        if np.intersect1d(tr, ev).size:
            raise PanelError("train_idx and eval_idx overlap")
        if self.time_labels is not None and len(self.time_labels) != T:
            raise PanelError("time_labels length differs from T")
        if self.names is not None and len(self.names) != X.shape[0]:
            raise PanelError("names length differs from N")
        used = np.union1d(tr, ev)
        if used.size and (not np.all(np.isfinite(y[used])) or not np.all(np.isfinite(X[:, used]))):
            raise PanelError("missing value in a referenced period")
        for arr in (y, X, tr, ev):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "train_idx", tr)
        object.__setattr__(self, "eval_idx", ev)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def has_eval(self) -> bool:
        return self.eval_idx.size > 0

    def with_split(self, train_idx, eval_idx=None) -> "TimePanel":
        """Same data, different split."""
        return replace(self, train_idx=_as_index(train_idx), eval_idx=_as_index(eval_idx))

    def with_target(self, y) -> "TimePanel":
        return replace(self, y=np.asarray(y, dtype=float))


@dataclass(frozen=True)
class StandardizationParams:
    y_mean: float
    y_sd: float
    x_means: np.ndarray
    x_sds: np.ndarray

    def to_dict(self) -> dict:
        return {
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
            "x_means": self.x_means.tolist(),
            "x_sds": self.x_sds.tolist(),
        }


@dataclass(frozen=True)
class GramPair:
    """Sample covariance of the controls and their covariance with the target.

    ``sigma[i, j]`` and ``eta[i]`` are averages over the training set with
    divisor |T1|; ``y_mean`` and ``x_means`` are the training means used to
    recover the intercept.
    """

    sigma: np.ndarray
    eta: np.ndarray
    y_mean: float
    x_means: np.ndarray
    n_obs: int = 0

    @property
    def N(self) -> int:
        return self.eta.shape[0]

    @property
    def eta_sup(self) -> float:
        return float(np.max(np.abs(self.eta))) if self.eta.size else 0.0


def _column_sd(a: np.ndarray, axis: int) -> np.ndarray:
    # divisor-n standard deviation, matching E_S averaging
    return np.sqrt(np.mean((a - a.mean(axis=axis, keepdims=True)) ** 2, axis=axis))


def standardize_in_sample(panel: TimePanel, *, sd_floor: float = 1e-12) -> tuple[TimePanel, StandardizationParams]:
    """Center and scale every series by its training mean and sd (divisor |T1|).

    Evaluation periods are transformed with the same parameters.
    """
    tr = panel.train_idx
    if tr.size < 2:
        raise PanelError("standardization needs at least 2 training periods")
    y_tr = panel.y[tr]
    X_tr = panel.X[:, tr]
    y_mean = float(y_tr.mean())
    y_sd = float(_column_sd(y_tr, 0))
    x_means = X_tr.mean(axis=1)
    x_sds = _column_sd(X_tr, 1)
    if y_sd <= sd_floor:
        raise PanelError(f"target series {panel.target_name!r} is constant over the training set")
    bad = np.flatnonzero(x_sds <= sd_floor)
    if bad.size:
        label = panel.names[bad[0]] if panel.names else f"row {bad[0]}"
        raise PanelError(f"control series {label} is constant over the training set")
    y_std = (panel.y - y_mean) / y_sd
    X_std = (panel.X - x_means[:, None]) / x_sds[:, None]
    params = StandardizationParams(y_mean, y_sd, x_means, x_sds)
    return replace(panel, y=y_std, X=X_std), params


def compute_gram(panel: TimePanel, idx=None) -> GramPair:
    """Gram pair over ``idx`` (the training set by default)."""
    idx = panel.train_idx if idx is None else _as_index(idx)
    n = idx.size
    if n < 2:
        raise PanelError("gram needs at least 2 training periods")
    Xs = panel.X[:, idx]
    ys = panel.y[idx]
    x_means = Xs.mean(axis=1)
    y_mean = float(ys.mean())
    Xc = Xs - x_means[:, None]
    yc = ys - y_mean
    sigma = Xc @ Xc.T / n
    sigma = 0.5 * (sigma + sigma.T)
    eta = Xc @ yc / n
    return GramPair(sigma=sigma, eta=eta, y_mean=y_mean, x_means=x_means, n_obs=n)


def gram_from_arrays(X: np.ndarray, y: np.ndarray) -> GramPair:
    """Gram pair from an N x n control block and a length-n target."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    panel = TimePanel(y=y, X=X, train_idx=np.arange(y.shape[0]))
    return compute_gram(panel)


# --------------------------------------------------------------------- CSV


def read_csv_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise PanelError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise PanelError(f"{path}: line {k} has {len(r)} fields, header has {len(header)}")
    return header, body


TIME_HEADERS = {"", "date", "time", "period", "t", "year", "quarter", "month", "week", "day", "index"}


def _is_numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def parse_split(split_spec, labels: Sequence[str] | None, T: int) -> int:
    """Resolve a split spec to the number of leading rows in the training set.

    A spec equal to a time label names the last training row; labels win
    over row numbers, so ``2005`` means the row labelled 2005 when years
    label the rows. Otherwise an integer ``k`` puts rows 1..k in training.
    """
    if split_spec is None:
        return T
    if labels is not None and str(split_spec) in labels:
        k = list(labels).index(str(split_spec)) + 1
    else:
        try:
            k = int(split_spec)
        except (TypeError, ValueError):
            raise PanelError(f"split point {split_spec!r} is neither a row number nor a time label") from None
    if k < 1 or k > T:
        raise PanelError(f"split point {split_spec!r} outside range 1..{T}")
    return k


def load_table(path: str | Path) -> tuple[list[str], np.ndarray, tuple[str, ...] | None]:
    """Read a panel CSV into (series names, T x K value matrix, time labels).

    The first column is treated as labels when any of its cells is
    non-numeric or its header is a conventional time name (date, period,
    ...). Blank cells raise "missing value"; other non-numeric cells
    raise as well.
    """
    header, body = read_csv_table(path)
    first = [r[0].strip() for r in body]
    has_labels = header[0].lower() in TIME_HEADERS or any(not _is_numeric(c) for c in first if c != "")
    start = 1 if has_labels else 0
    labels = tuple(first) if has_labels else None
    names = header[start:]
    if len(set(names)) != len(names):
        raise PanelError(f"{path}: duplicate column names")
    values = np.empty((len(body), len(names)))
    for i, r in enumerate(body):
        for j, cell in enumerate(r[start:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in {"na", "nan"}:
                raise PanelError(f"{path}: missing value in column {names[j]!r} at row {i + 1}")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise PanelError(f"{path}: non-numeric cell {cell!r} in column {names[j]!r} at row {i + 1}") from None
    return names, values, labels


def load_panel_csv(path: str | Path, target_column: str, split_spec=None, *, min_train: int = 3) -> TimePanel:
    """Load a CSV (one row per period) into a :class:`TimePanel`.

    The target column becomes ``y``; every other numeric column becomes a
    control. Rows up to and including the split point form the training set,
    the remaining rows the evaluation set (possibly empty).
    """
    names, values, labels = load_table(path)
    if target_column not in names:
        raise PanelError(f"{path}: missing target column {target_column!r}")
    j = names.index(target_column)
    controls = [n for n in names if n != target_column]
    if not controls:
        raise PanelError(f"{path}: no control columns besides {target_column!r}")
    T = values.shape[0]
    k = parse_split(split_spec, labels, T)
    if k < min_train:
        raise PanelError(f"fewer than {min_train} training rows ({k})")
    X = np.delete(values, j, axis=1).T
    return TimePanel(
        y=values[:, j],
        X=X,
        train_idx=np.arange(k),
        eval_idx=np.arange(k, T),
        time_labels=labels,
        names=tuple(controls),
        target_name=target_column,
    )

"""Factor-model data generators, population oracles and Monte Carlo experiments.

Controls and target follow ``x_it = lambda_i' f_t + u_it`` and
``y_t = lambda_0' f_t + u_0t`` with four unit-variance factors. Every
replication draws its own loadings, factors and errors from counter-based
substreams keyed by ``(seed, rep, stream)``, so a replication's data do not
depend on how replications are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import baselines, pda, solver, tuning
from .panel import TimePanel, compute_gram, standardize_in_sample
from .solver import DEFAULT_SETTINGS

SIGMA0_SQ = 0.5
N_FACTORS = 4

# stream ids inside one replication
_S_LOADINGS, _S_FACTORS, _S_ERRORS, _S_TARGET, _S_EFFECTS, _S_TREATED = range(6)

DESIGNS = tuple(f"D{k}" for k in range(1, 10))

DEFAULT_TAU_GRID = np.r_[np.arange(1, 31) / 100.0, [0.35, 0.4, 0.5, 0.6, 0.8, 1.0]]
DEFAULT_RIDGE_GRID = np.logspace(-3, 2, 41)
DEFAULT_LASSO_GRID = np.logspace(-3.5, 0, 36)
# multi-unit designs tie the number of treated units to N = T1
MULTI_M = {50: 30, 100: 40, 200: 50}


def substream(seed: int, rep: int, stream: int) -> np.random.Generator:
    """Independent Philox generator for one (replication, stream) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep), int(stream)])))


# ----------------------------------------------------------------- specs


@dataclass(frozen=True)
class FactorSpec:
    """The four fixed factor processes, each with unit variance.

    iid N(0,1); AR(1) phi=0.9 with innovation variance 0.19; MA(2) with
    coefficients (0.8, 0.4) and innovation variance 5/9; ARMA(1,1) with
    phi=theta=0.5 and innovation variance 3/7.
    """

    q: int = N_FACTORS
    ar_phi: float = 0.9
    ar_var: float = 0.19
    ma_theta: tuple[float, float] = (0.8, 0.4)
    ma_var: float = 5.0 / 9.0
    arma_phi: float = 0.5
    arma_theta: float = 0.5
    arma_var: float = 3.0 / 7.0

    def variances(self) -> np.ndarray:
        t1, t2 = self.ma_theta
        return np.array(
            [
                1.0,
                self.ar_var / (1 - self.ar_phi**2),
                (1 + t1**2 + t2**2) * self.ma_var,
                self.arma_var * (1 + 2 * self.arma_phi * self.arma_theta + self.arma_theta**2) / (1 - self.arma_phi**2),
            ]
        )


@dataclass(frozen=True)
class LoadingSpec:
    kind: str = "strong"  # strong | weak
    low: float = 0.3
    high: float = 0.5
    weak_bound: float = 0.15
    n_strong: int = 4  # units keeping strong loadings under "weak"

    def __post_init__(self):
        if self.kind not in ("strong", "weak"):
            raise ValueError(f"unknown loading kind {self.kind!r}")


@dataclass(frozen=True)
class ErrorSpec:
    kind: str = "homo"  # homo | mild | severe
    sigma0_sq: float = SIGMA0_SQ

    RANGES = {"homo": (0.5, 0.5), "mild": (0.3, 0.7), "severe": (0.1, 0.9)}

    def __post_init__(self):
        if self.kind not in self.RANGES:
            raise ValueError(f"unknown error kind {self.kind!r}")

    def draw_variances(self, N: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.RANGES[self.kind]
        if lo == hi:
            return np.full(N, lo)
        return rng.uniform(lo, hi, size=N)


@dataclass(frozen=True)
class TreatmentSpec:
    setting: str = "single"  # single | multi
    design: str = "D1"
    M: int = 0

    def __post_init__(self):
        if self.setting not in ("single", "multi"):
            raise ValueError(f"unknown treatment setting {self.setting!r}")
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")

    @property
    def base(self) -> int:
        """1 (zero), 2 (independent) or 3 (dependent)."""
        return (int(self.design[1:]) - 1) % 3 + 1

    @property
    def shift(self) -> float:
        return (0.0, 0.3, 0.5)[(int(self.design[1:]) - 1) // 3]


@dataclass(frozen=True)
class McConfig:
    reps: int = 200
    seed: int = 20240501
    N: int = 100
    T1: int = 200
    T2: int = 200
    M: int = 0
    loadings: str = "strong"
    errors: str = "homo"
    scheme: str = "holdout:0.2"
    threads: int = 1
    tau_grid: tuple | None = None
    designs: tuple = DESIGNS

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if min(self.N, self.T1, self.T2) < 1:
            raise ValueError("N, T1 and T2 must be positive")
        LoadingSpec(self.loadings)
        ErrorSpec(self.errors)
        tuning.ValidationScheme.parse(self.scheme)

    @property
    def taus(self) -> np.ndarray:
        return DEFAULT_TAU_GRID if self.tau_grid is None else tuning.TauGrid(self.tau_grid).values

    @property
    def dgp(self) -> str:
        return f"{self.loadings}-{self.errors}"


_INT_FIELDS = {"reps", "seed", "N", "T1", "T2", "M", "threads"}


def parse_config(text: str) -> McConfig:
    """McConfig from ``key = value`` lines (``#`` starts a comment).

    ``dgp = strong-homo`` sets loadings and errors together; ``tau_grid``
    and ``designs`` take comma-separated lists.
    """
    known = {f.name for f in fields(McConfig)}
    kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValueError(f"config line {lineno}: expected key = value")
        if key == "dgp":
            kw["loadings"], kw["errors"] = parse_dgp(value)
        elif key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        elif key in _INT_FIELDS:
            kw[key] = int(value)
        elif key == "tau_grid":
            kw[key] = tuple(float(v) for v in value.split(","))
        elif key == "designs":
            kw[key] = tuple(v.strip().upper() for v in value.split(","))
        else:
            kw[key] = value
    return McConfig(**kw)


def parse_dgp(text: str) -> tuple[str, str]:
    """``strong-homo`` -> ("strong", "homo")."""
    parts = text.strip().lower().split("-")
    if len(parts) != 2:
        raise ValueError(f"dgp selector {text!r} must look like strong-homo")
    LoadingSpec(parts[0])
    ErrorSpec(parts[1])
    return parts[0], parts[1]


# ------------------------------------------------------------- generators


def gen_factors(T: int, rng: np.random.Generator, spec: FactorSpec = FactorSpec()) -> np.ndarray:
    """4 x T factor matrix started from the stationary distributions."""
    if T < 1:
        raise ValueError("T must be >= 1")
    F = np.empty((4, T))
    F[0] = rng.standard_normal(T)

    v = rng.normal(0.0, math.sqrt(spec.ar_var), T)
    prev = rng.normal(0.0, math.sqrt(spec.ar_var / (1 - spec.ar_phi**2)))
    for t in range(T):
        prev = spec.ar_phi * prev + v[t]
        F[1, t] = prev

    t1, t2 = spec.ma_theta
    v = rng.normal(0.0, math.sqrt(spec.ma_var), T + 2)
    F[2] = v[2:] + t1 * v[1:-1] + t2 * v[:-2]

    # ARMA(1,1) state (f_0, v_0): v_0 carries innovation variance and the rest
    # of f_0 is independent with variance 1 - var(v)
    phi, th, s2 = spec.arma_phi, spec.arma_theta, spec.arma_var
    var_f = spec.variances()[3]
    v_prev = rng.normal(0.0, math.sqrt(s2))
    f_prev = v_prev + rng.normal(0.0, math.sqrt(var_f - s2))
    v = rng.normal(0.0, math.sqrt(s2), T)
    for t in range(T):
        f_prev = phi * f_prev + v[t] + th * v_prev
        v_prev = v[t]
        F[3, t] = f_prev
    return F


def _strong_draw(rng: np.random.Generator, size, low=0.3, high=0.5) -> np.ndarray:
    mag = rng.uniform(low, high, size=size)
    sign = np.where(rng.random(size=size) < 0.5, -1.0, 1.0)
    return sign * mag


def gen_loadings(N: int, rng: np.random.Generator, spec: LoadingSpec = LoadingSpec(), q: int = N_FACTORS) -> np.ndarray:
    """N x q loading matrix."""
    Lam = _strong_draw(rng, (N, q), spec.low, spec.high)
    if spec.kind == "weak" and N > spec.n_strong:
        Lam[spec.n_strong :] = rng.uniform(-spec.weak_bound, spec.weak_bound, size=(N - spec.n_strong, q))
    return Lam


@dataclass(frozen=True)
class Truth:
    """Population quantities behind a simulated panel."""

    Lambda: np.ndarray  # N x q
    lam0: np.ndarray
    F: np.ndarray  # q x T
    U: np.ndarray  # N x T
    u0: np.ndarray
    omega: np.ndarray  # diagonal of the control error covariance
    sigma0_sq: float = SIGMA0_SQ

    @property
    def beta_star(self) -> np.ndarray:
        return oracle_beta_star(self.Lambda, self.lam0)

    @property
    def beta0(self) -> np.ndarray:
        return oracle_beta0(self.Lambda, self.lam0, np.diag(self.omega))


@dataclass(frozen=True)
class SimPanel:
    panel: TimePanel
    truth: Truth


def gen_panel(config: McConfig, rep: int) -> SimPanel:
    """Untreated panel with T1 training and T2 evaluation periods."""
    T = config.T1 + config.T2
    err = ErrorSpec(config.errors)
    Lam = gen_loadings(config.N, substream(config.seed, rep, _S_LOADINGS), LoadingSpec(config.loadings))
    F = gen_factors(T, substream(config.seed, rep, _S_FACTORS))
    rng_e = substream(config.seed, rep, _S_ERRORS)
    omega = err.draw_variances(config.N, rng_e)
    U = rng_e.standard_normal((config.N, T)) * np.sqrt(omega)[:, None]
    rng_y = substream(config.seed, rep, _S_TARGET)
    lam0 = _strong_draw(rng_y, N_FACTORS)
    u0 = rng_y.normal(0.0, math.sqrt(err.sigma0_sq), T)
    X = Lam @ F + U
    y = lam0 @ F + u0
    panel = TimePanel(y, X, np.arange(config.T1), np.arange(config.T1, T))
    return SimPanel(panel, Truth(Lam, lam0, F, U, u0, omega, err.sigma0_sq))


@dataclass(frozen=True)
class SimMultiPanel:
    controls: TimePanel  # y holds the first treated unit's untreated outcome
    treated: np.ndarray  # M x T untreated outcomes of the treated units
    truth: Truth
    treated_loadings: np.ndarray  # M x q


def gen_multi_panel(config: McConfig, rep: int) -> SimMultiPanel:
    """Controls plus M treated units with strong loadings and N(0, 0.5) errors."""
    if config.M < 1:
        raise ValueError("multi-unit design needs M >= 1")
    base = gen_panel(config, rep)
    rng = substream(config.seed, rep, _S_TREATED)
    F = base.truth.F
    Lm = _strong_draw(rng, (config.M, N_FACTORS))
    Y = Lm @ F + rng.normal(0.0, math.sqrt(SIGMA0_SQ), (config.M, F.shape[1]))
    controls = base.panel.with_target(Y[0])
    return SimMultiPanel(controls, Y, base.truth, Lm)


MULTI_D3_THETA = 1.0 / 3.0  # theta / (1 + theta^2) = 0.3


def gen_treatment(spec: TreatmentSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Effects over ``n`` post-treatment periods (single) or ``n`` units (multi)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    base = spec.base
    if base == 1:
        out = np.zeros(n)
    elif spec.setting == "single":
        if base == 2:
            out = rng.standard_normal(n)
        else:
            nu = rng.normal(0.0, math.sqrt(0.91), n)
            out = np.empty(n)
            prev = rng.standard_normal()  # stationary start, variance 0.91 / (1 - 0.09) = 1
            for t in range(n):
                prev = 0.3 * prev + nu[t]
                out[t] = prev
    else:
        sd = n ** (-0.75)
        if base == 2:
            out = rng.normal(0.0, sd, n)
        else:
            # chain over unit index: neighbours share one shock, correlation
            # theta / (1 + theta^2) = 0.3, variance kept at M^{-3/2}
            th = MULTI_D3_THETA
            e = rng.normal(0.0, sd, n + 1)
            out = (e[1:] + th * e[:-1]) / math.sqrt(1 + th * th)
    return out + spec.shift


# ----------------------------------------------------------------- oracles


def oracle_beta0(Lambda, lam0, Omega) -> np.ndarray:
    """Population projection ``(Lambda Lambda' + Omega)^{-1} Lambda lam0``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape[0] == 1 and np.ndim(lam0) == 0:
        Lambda = Lambda.T
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    Omega = np.asarray(Omega, dtype=float)
    A = Lambda @ Lambda.T + Omega
    return np.linalg.solve(A, Lambda @ lam0)


def oracle_beta0_woodbury(Lambda, lam0, Omega) -> np.ndarray:
    """Same vector as ``Omega^{-1} Lambda (Lambda' Omega^{-1} Lambda + I)^{-1} lam0``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape[0] == 1 and np.ndim(lam0) == 0:
        Lambda = Lambda.T
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    Oinv_L = np.linalg.solve(np.asarray(Omega, dtype=float), Lambda)
    inner = Lambda.T @ Oinv_L + np.eye(Lambda.shape[1])
    return Oinv_L @ np.linalg.solve(inner, lam0)


def oracle_beta_star(Lambda, lam0) -> np.ndarray:
    """Minimum-norm ``beta`` with ``Lambda' beta = lam0``: ``Lambda (Lambda'Lambda)^{-1} lam0``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape[0] == 1 and np.ndim(lam0) == 0:
        Lambda = Lambda.T
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    G = Lambda.T @ Lambda
    if np.linalg.matrix_rank(G) < G.shape[0]:
        raise np.linalg.LinAlgError("loading matrix is rank deficient")
    return Lambda @ np.linalg.solve(G, lam0)


def oracle_mse(beta, Lambda, lam0, Omega, sigma0_sq: float = SIGMA0_SQ) -> float:
    """Population prediction MSE ``sigma0^2 + b'Omega b + ||lam0 - Lambda'b||^2``."""
    beta = np.asarray(beta, dtype=float)
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if Lambda.shape[0] == 1 and beta.size > 1:
        Lambda = Lambda.T
    bias = np.atleast_1d(lam0) - Lambda.T @ beta
    return float(sigma0_sq + beta @ np.asarray(Omega, dtype=float) @ beta + bias @ bias)


def factor_strength(Lambda) -> float:
    """Smallest eigenvalue of ``Lambda'Lambda / N``."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    return float(np.linalg.eigvalsh(Lambda.T @ Lambda / Lambda.shape[0])[0])


# ------------------------------------------------------------------ report


@dataclass
class SimReport:
    """Table-shaped Monte Carlo output.

    ``rows`` follow ``columns``; ``raw`` keeps per-replication arrays for
    callers and is not serialized.
    """

    kind: str
    columns: list[str]
    rows: list[list]
    meta: dict
    raw: dict = field(default_factory=dict, repr=False)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.kind} reps={self.meta.get('reps')} seed={self.meta.get('seed')}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "meta": self.meta, "columns": self.columns, "rows": self.rows},
            indent=2,
            sort_keys=True,
        )

    def __add__(self, other: "SimReport") -> "SimReport":
        if other.columns != self.columns:
            raise ValueError("cannot stack reports with different columns")
        meta = dict(self.meta)
        meta["configs"] = self.meta.get("configs", [self.meta.get("config")]) + other.meta.get(
            "configs", [other.meta.get("config")]
        )
        meta.pop("config", None)
        raw = {**self.raw, **other.raw}
        return SimReport(self.kind, self.columns, self.rows + other.rows, meta, raw)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def _config_meta(config: McConfig) -> dict:
    d = asdict(config)
    d.pop("threads")
    d["tau_grid"] = [float(t) for t in config.taus]
    d["designs"] = list(config.designs)
    return d


def _map_reps(func, config: McConfig) -> list:
    """Run ``func(config, rep)`` for every replication, results in rep order."""
    reps = range(config.reps)
    threads = max(1, min(config.threads, config.reps))
    if threads == 1:
        return [func(config, r) for r in reps]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, [config] * config.reps, reps, chunksize=max(1, config.reps // (4 * threads))))


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# ------------------------------------------------------------ experiments


def _grid_scores(method, panel_std: TimePanel, grid, scheme) -> np.ndarray:
    return tuning.validate(panel_std, grid, scheme, method, refit=False).scores


def mpse_replication(config: McConfig, rep: int) -> dict:
    """One replication of the prediction experiment (units of the raw data)."""
    sim = gen_panel(config, rep)
    panel, truth = sim.panel, sim.truth
    std, params = standardize_in_sample(panel)
    gram = compute_gram(std)
    scheme = tuning.ValidationScheme.parse(config.scheme)
    ev = std.eval_idx
    scale2 = params.y_sd**2
    beta_star = truth.beta_star
    out: dict = {}

    def oos(fits):
        return np.array([solver.mpse(f, std, ev) * scale2 for f in fits]) - truth.sigma0_sq

    taus = config.taus
    l2 = solver.fit_path(gram, taus)
    out["l2_mpse"] = oos(l2)
    out["l2_beta_err"] = np.array(
        [np.linalg.norm(f.beta * params.y_sd / params.x_sds - beta_star) for f in l2]
    )
    out["l2_valid"] = out["l2_mpse"][tuning.pick(taus, _grid_scores("l2relax", std, taus, scheme), "l2relax")]

    for name, grid, path in (
        ("ridge", DEFAULT_RIDGE_GRID, baselines.ridge_path),
        ("lasso", DEFAULT_LASSO_GRID, baselines.lasso_path),
    ):
        out[f"{name}_mpse"] = oos(path(gram, grid))
        out[f"{name}_valid"] = out[f"{name}_mpse"][tuning.pick(grid, _grid_scores(name, std, grid, scheme), name)]

    kmax = min(8, std.N, std.train_idx.size - 1)
    out["pca_q4"] = oos([baselines.fit_pca(std, N_FACTORS)])[0]
    k = baselines.select_factors_pcp1(std, kmax)
    out["pcp1_k"] = k
    out["pca_pcp1"] = oos([baselines.fit_pca(std, k)])[0]
    out["oracle_net"] = oracle_mse(beta_star, truth.Lambda, truth.lam0, np.diag(truth.omega), 0.0)
    return out


TABLE1_COLUMNS = [
    "dgp",
    "T1",
    "T2",
    "best_tau",
    "l2_infeasible",
    "l2_validated",
    "ridge_infeasible",
    "ridge_validated",
    "lasso_infeasible",
    "lasso_validated",
    "pca_q4",
    "pca_pcp1",
    "l2_beta_err_median",
    "oracle_net",
]


def run_mpse_experiment(config: McConfig) -> SimReport:
    """Average out-of-sample MPSE net of the target noise variance.

    Infeasible columns take the grid value whose across-replication mean is
    smallest; validated columns pick per replication by the configured
    scheme.
    """
    reps = _map_reps(mpse_replication, config)
    raw = {k: np.array([r[k] for r in reps]) for k in reps[0]}
    taus = config.taus
    best = {}
    for name in ("l2", "ridge", "lasso"):
        m = raw[f"{name}_mpse"].mean(axis=0)
        best[name] = int(np.argmin(m))
    b = best["l2"]
    row = [
        config.dgp,
        config.T1,
        config.T2,
        float(taus[b]),
        float(raw["l2_mpse"][:, b].mean()),
        float(raw["l2_valid"].mean()),
        float(raw["ridge_mpse"][:, best["ridge"]].mean()),
        float(raw["ridge_valid"].mean()),
        float(raw["lasso_mpse"][:, best["lasso"]].mean()),
        float(raw["lasso_valid"].mean()),
        float(raw["pca_q4"].mean()),
        float(raw["pca_pcp1"].mean()),
        float(np.median(raw["l2_beta_err"][:, b])),
        float(raw["oracle_net"].mean()),
    ]
    meta = {"reps": config.reps, "seed": config.seed, "config": _config_meta(config)}
    return SimReport("table1", list(TABLE1_COLUMNS), [row], meta, {(config.dgp, config.T1): raw})


def _validated_fit(panel: TimePanel, taus, scheme) -> solver.RelaxationFit:
    """Validated L2-relaxation fit mapped back to the units of ``panel``."""
    std, params = standardize_in_sample(panel)
    scores = _grid_scores("l2relax", std, taus, scheme)
    tau = float(taus[tuning.pick(taus, scores, "l2relax")])
    return solver.to_original_units(solver.fit(compute_gram(std), tau), params)


def size_replication_single(config: McConfig, rep: int) -> np.ndarray:
    """Rejection indicators (5% two-sided) for every design in one replication."""
    panel = gen_panel(config, rep).panel
    scheme = tuning.ValidationScheme.parse(config.scheme)
    f = _validated_fit(panel, config.taus, scheme)
    base_pred = solver.predict(f, panel.X)
    ev, tr = panel.eval_idx, panel.train_idx
    e_pre = panel.y[tr] - base_pred[tr]
    e_post = panel.y[ev] - base_pred[ev]
    T1, T2 = tr.size, ev.size
    h1, h2 = pda.default_lag(T1), pda.default_lag(T2)
    rho1 = pda.hac_lrv(e_pre, h1, demean=False)
    out = np.zeros(len(config.designs), dtype=bool)
    for k, d in enumerate(config.designs):
        rng = substream(config.seed, rep, _S_EFFECTS * 100 + DESIGNS.index(d))
        delta_hat = e_post + gen_treatment(TreatmentSpec("single", d), T2, rng)
        var = rho1 / T1 + pda.hac_lrv(delta_hat, h2) / T2
        if not var > pda.VARIANCE_FLOOR:
            raise pda.DegenerateVarianceError(f"degenerate variance in replication {rep}")
        out[k] = abs(delta_hat.mean() / math.sqrt(var)) > 1.959963984540054
    return out


def size_replication_multi(config: McConfig, rep: int) -> np.ndarray:
    sim = gen_multi_panel(config, rep)
    scheme = tuning.ValidationScheme.parse(config.scheme)
    ctrl = sim.controls
    fits = [_validated_fit(ctrl.with_target(sim.treated[i]), config.taus, scheme) for i in range(config.M)]
    out = np.zeros(len(config.designs), dtype=bool)
    for k, d in enumerate(config.designs):
        rng = substream(config.seed, rep, _S_EFFECTS * 100 + DESIGNS.index(d))
        eff = gen_treatment(TreatmentSpec("multi", d, config.M), config.M, rng)
        Y = sim.treated.copy()
        Y[:, ctrl.eval_idx] += eff[:, None]
        res = pda.ate_multi(fits, ctrl, Y)
        out[k] = bool(np.all(res.p_values < 0.05))
    return out


def run_size_power_experiment(config: McConfig, setting: str = "single") -> SimReport:
    """Rejection frequencies at the 5% level for each treatment design."""
    if setting == "single":
        reps = _map_reps(size_replication_single, config)
        lead = ["errors", "T1", "T2"]
        key = [config.errors, config.T1, config.T2]
    elif setting == "multi":
        reps = _map_reps(size_replication_multi, config)
        lead = ["errors", "N", "T1", "M"]
        key = [config.errors, config.N, config.T1, config.M]
    else:
        raise ValueError(f"unknown setting {setting!r}")
    rej = np.array(reps)
    rates = rej.mean(axis=0)
    meta = {"reps": config.reps, "seed": config.seed, "setting": setting, "config": _config_meta(config)}
    kind = "table2a" if setting == "single" else "table2b"
    return SimReport(kind, lead + list(config.designs), [key + [float(v) for v in rates]], meta, {tuple(key): rej})


def table1(reps: int, seed: int, dgps=("strong-homo",), sizes=(50, 100, 200), N: int = 100, threads: int = 1, **kw):
    report = None
    for dgp in dgps:
        lo, er = parse_dgp(dgp)
        for T in sizes:
            r = run_mpse_experiment(McConfig(reps, seed, N, T, T, 0, lo, er, threads=threads, **kw))
            report = r if report is None else report + r
    return report


def table2a(reps: int, seed: int, dgps=("strong-homo",), sizes=(200,), N: int = 100, threads: int = 1, **kw):
    report = None
    for dgp in dgps:
        lo, er = parse_dgp(dgp)
        for T in sizes:
            r = run_size_power_experiment(McConfig(reps, seed, N, T, T, 0, lo, er, threads=threads, **kw), "single")
            report = r if report is None else report + r
    return report


def table2b(reps: int, seed: int, dgps=("strong-homo",), sizes=(200,), threads: int = 1, **kw):
    report = None
    for dgp in dgps:
        lo, er = parse_dgp(dgp)
        for n in sizes:
            M = MULTI_M.get(n, max(1, int(round(n / 4))))
            r = run_size_power_experiment(McConfig(reps, seed, n, n, 1, M, lo, er, threads=threads, **kw), "multi")
            report = r if report is None else report + r
    return report


def synthetic_pda_table(
    N: int = 64, T1: int = 115, T2: int = 43, seed: int = 0, effect: float = 0.0, loadings: str = "strong"
) -> tuple[list[str], list[str], np.ndarray]:
    """Labelled untreated-plus-treated table for end-to-end runs.

    Returns ``(column names, period labels, T x (N+1) values)``: the first
    column is the treated unit ``treated``, the rest controls ``c01..``.
    ``effect`` is added to the treated unit after period T1.
    """
    cfg = McConfig(reps=1, seed=seed, N=N, T1=T1, T2=T2, loadings=loadings)
    sim = gen_panel(cfg, 0)
    y = sim.panel.y.copy()
    y[T1:] += effect
    names = ["treated"] + [f"c{i + 1:02d}" for i in range(N)]
    labels = [f"{1990 + t // 4}Q{t % 4 + 1}" for t in range(T1 + T2)]
    return names, labels, np.column_stack([y, sim.panel.X.T])


def write_synthetic_pda_csv(path, **kw) -> None:
    names, labels, values = synthetic_pda_table(**kw)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period"] + names)
        for lab, row in zip(labels, values):
            w.writerow([lab] + [f"{v:.10g}" for v in row])

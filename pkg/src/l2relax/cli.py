"""Command-line interface.

Commands: ``fit``, ``predict``, ``pda single``, ``pda multi``, ``placebo``
and ``simulate``. Data go to ``--output`` (or stdout); diagnostics go to
stderr. Exit status is 0 on success, 1 on a data or model error and 2 on
bad usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, pda, simulation, solver, tuning
from .panel import PanelError, TimePanel, load_table, parse_split

log = logging.getLogger("l2relax")

METHOD_CHOICES = ("l2relax", "ridgeless", "ols", "ridge", "lasso", "pca")


class CliError(Exception):
    pass


# ----------------------------------------------------------------- helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _resolved_config(args) -> dict:
    skip = {"func", "handler", "command_name"}
    return _jsonable({k: v for k, v in sorted(vars(args).items()) if k not in skip})


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n"


def _csv_text(header: list[str], rows, config: dict) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _hyper(args):
    if args.tau is None:
        return None
    return int(args.tau) if args.method == "pca" else float(args.tau)


def _scheme(args) -> tuning.ValidationScheme:
    return tuning.ValidationScheme.parse(args.validate or "holdout:0.2")


def _load(args, target: str, pre_end, post_start=None, exclude=()) -> TimePanel:
    """Panel with rows ``1..pre_end`` as training and ``post_start..T`` as evaluation."""
    names, values, labels = load_table(args.input)
    if target not in names:
        raise PanelError(f"{args.input}: missing target column {target!r}")
    for name in exclude:
        if name not in names:
            raise PanelError(f"{args.input}: missing column {name!r}")
    T = values.shape[0]
    k = parse_split(pre_end, labels, T)
    start = k if post_start is None else parse_split(post_start, labels, T) - 1
    if start < k:
        raise PanelError(f"post-treatment start {post_start!r} falls inside the training rows")
    if k < 3:
        raise PanelError(f"fewer than 3 training rows ({k})")
    controls = [n for n in names if n != target and n not in exclude]
    if not controls:
        raise PanelError("no control columns left")
    cols = [names.index(n) for n in controls]
    return TimePanel(
        y=values[:, names.index(target)],
        X=values[:, cols].T,
        train_idx=np.arange(k),
        eval_idx=np.arange(start, T),
        time_labels=labels,
        names=tuple(controls),
        target_name=target,
    )


def _fit_panel(args, panel: TimePanel, seed_offset: int = 0):
    """Fit with the method flags; returns (original-units fit, validation, standardized fit)."""
    standardize = not args.no_standardize
    scheme = _scheme(args)
    f, val = tuning.fit_tuned(
        panel,
        args.method,
        scheme,
        hyper=_hyper(args),
        n_grid=args.grid,
        standardize=standardize,
        seed=args.seed + seed_offset,
    )
    std_fit = None
    if args.raw and standardize:
        from .panel import standardize_in_sample

        work, _ = standardize_in_sample(panel)
        hyper = _hyper(args) if val is None else val.chosen
        if args.method == "pca" and hyper is not None:
            hyper = int(hyper)
        std_fit = baselines.fit_method(args.method, work, hyper)
    return f, val, std_fit


def _fit_record(f, names) -> dict:
    d = solver.fit_to_json_dict(f)
    d["controls"] = list(names)
    return d


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    panel = _load(args, args.target, args.split)
    f, val, std_fit = _fit_panel(args, panel)
    ins = solver.mpse(f, panel, panel.train_idx)
    oos = solver.mpse(f, panel, panel.eval_idx) if panel.has_eval else None
    config = _resolved_config(args)
    if args.format == "csv":
        rows = [["alpha", float(f.alpha)]]
        rows += [[f"beta[{n}]", float(b)] for n, b in zip(panel.names, f.beta)]
        rows.append(["hyper", getattr(f, "hyper", None)])
        rows.append(["in_sample_mpse", ins])
        if oos is not None:
            rows.append(["oos_mpse", oos])
        _emit(args, _csv_text(["term", "value"], rows, config))
    else:
        payload = {
            "command": "fit",
            "config": config,
            "target": panel.target_name,
            "train_rows": int(panel.train_idx.size),
            "eval_rows": int(panel.eval_idx.size),
            "fit": _fit_record(f, panel.names),
            "in_sample_mpse": ins,
            "oos_mpse": oos,
        }
        if val is not None:
            payload["validation"] = {
                "scheme": str(_scheme(args)),
                "chosen": val.chosen,
                "scores": [{"hyper": h, "fold_or_holdout": lab, "mpse": m} for h, lab, m in val.table],
            }
        if std_fit is not None:
            payload["fit_standardized"] = solver.fit_to_json_dict(std_fit)
        _emit(args, _dump_json(payload))
    if args.scores and val is not None:
        Path(args.scores).write_text(val.table_csv(), encoding="utf-8")
    return 0


def _load_fit(path) -> tuple[object, list[str], dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rec = doc.get("fit", doc)
    if "controls" not in rec:
        raise CliError(f"{path}: fit record lacks the control names")
    if rec.get("method") in ("l2relax", "ridgeless") and "tau" in rec:
        f = solver.RelaxationFit.from_dict(rec)
    else:
        f = baselines.BaselineFit.from_dict(rec)
    return f, list(rec["controls"]), doc


def cmd_predict(args) -> int:
    f, controls, _ = _load_fit(args.fit)
    names, values, labels = load_table(args.input)
    missing = [n for n in controls if n not in names]
    if missing:
        raise PanelError(f"{args.input}: missing control column {missing[0]!r}")
    X = values[:, [names.index(n) for n in controls]].T
    T = values.shape[0]
    if args.split is not None:
        k = parse_split(args.split, labels, T)
        rows = np.arange(k, T) if args.rows == "eval" else np.arange(k) if args.rows == "train" else np.arange(T)
    else:
        rows = np.arange(T)
    if rows.size == 0:
        raise CliError("no rows selected for prediction")
    pred = np.atleast_1d(solver.predict(f, X[:, rows]))
    mp = None
    if args.target:
        if args.target not in names:
            raise PanelError(f"{args.input}: missing target column {args.target!r}")
        y = values[rows, names.index(args.target)]
        mp = float(np.mean((y - pred) ** 2))
    lab = [labels[i] if labels else str(i + 1) for i in rows]
    config = _resolved_config(args)
    if args.format == "csv":
        text = _csv_text(["row", "prediction"], [[l, float(p)] for l, p in zip(lab, pred)], config)
        if mp is not None:
            text += f"# mpse={mp!r}\n"
        _emit(args, text)
    else:
        _emit(
            args,
            _dump_json({"command": "predict", "config": config, "rows": lab, "prediction": pred, "mpse": mp}),
        )
    return 0


def _single_report(args, res: pda.SingleUnitResult, panel: TimePanel, extra: dict | None = None) -> None:
    config = _resolved_config(args)
    rep = res.report()
    labels = [panel.time_labels[i] if panel.time_labels else str(i + 1) for i in panel.eval_idx]
    if args.format == "csv":
        rows = [[lab, float(d)] for lab, d in zip(labels, res.delta_hat)]
        text = _csv_text(["period", "delta_hat"], rows, config)
        for k in ("method", "tau", "ate", "z", "p_value", "rho1_sq", "rho2_sq", "h1", "h2", "kernel"):
            text += f"# {k}={rep[k]!r}\n"
        _emit(args, text)
    else:
        payload = {"command": args.command_name, "config": config, **rep, "periods": labels}
        if extra:
            payload.update(extra)
        _emit(args, _dump_json(payload))
    if args.output:
        print(f"ate={res.ate:.6g} z={res.z:.4f} p_value={res.p_value:.4g}")


def cmd_pda_single(args) -> int:
    treated = args.treated[0] if len(args.treated) == 1 else None
    if treated is None:
        raise CliError("pda single takes exactly one --treated column")
    panel = _load(args, treated, args.pre_end, args.post_start)
    if panel.eval_idx.size == 0:
        raise PanelError("no post-treatment rows after --pre-end")
    f, val, _ = _fit_panel(args, panel)
    res = pda.ate_single(f, panel, args.h1, args.h2, kernel=args.kernel)
    extra = {"fit": _fit_record(f, panel.names)}
    if val is not None:
        extra["validation"] = {"scheme": str(_scheme(args)), "chosen": val.chosen}
    _single_report(args, res, panel, extra)
    return 0


def cmd_pda_multi(args) -> int:
    treated = list(args.treated)
    if len(set(treated)) != len(treated):
        raise CliError("duplicate --treated columns")
    fits, panels = [], []
    for i, name in enumerate(treated):
        panel = _load(args, name, args.pre_end, args.post_start, exclude=[t for t in treated if t != name])
        if panel.eval_idx.size == 0:
            raise PanelError("no post-treatment rows after --pre-end")
        f, _, _ = _fit_panel(args, panel, seed_offset=i)
        fits.append(f)
        panels.append(panel)
    ctrl = panels[0]
    Y = np.vstack([p.y for p in panels])
    res = pda.ate_multi(fits, ctrl, Y)
    labels = [ctrl.time_labels[i] if ctrl.time_labels else str(i + 1) for i in ctrl.eval_idx]
    config = _resolved_config(args)
    if args.format == "csv":
        rows = [[lab, float(a), float(z), float(p)] for lab, a, z, p in zip(labels, res.ate_t, res.z_t, res.p_values)]
        text = _csv_text(["period", "ate", "z", "p_value"], rows, config) + f"# v_hat_sq={res.v_hat_sq!r}\n"
        _emit(args, text)
    else:
        payload = {"command": "pda multi", "config": config, "treated": treated, **res.report(), "periods": labels}
        _emit(args, _dump_json(payload))
    if args.output:
        for lab, a, z, p in zip(labels, res.ate_t, res.z_t, res.p_values):
            print(f"{lab}: ate={a:.6g} z={z:.4f} p_value={p:.4g}")
    return 0


def cmd_placebo(args) -> int:
    panel = _load(args, args.treated[0], args.pre_end)
    T1 = panel.train_idx.size
    labels = panel.time_labels[:T1] if panel.time_labels else None
    if args.placebo_split is None:
        k = int(round(0.8 * T1))
    else:
        k = parse_split(args.placebo_split, labels, T1)
    pseudo = pda.placebo_split(panel, k)
    f, _, _ = _fit_panel(args, pseudo)
    res = pda.ate_single(f, pseudo, args.h1, args.h2, kernel=args.kernel)
    _single_report(args, res, pseudo, {"placebo_train_rows": k, "fit": _fit_record(f, pseudo.names)})
    return 0


def cmd_simulate(args) -> int:
    if args.reps == 1:
        log.warning("--reps 1: a single replication is statistically meaningless")
    kw = {}
    if args.config:
        cfg = simulation.parse_config(Path(args.config).read_text(encoding="utf-8"))
        kw = {"scheme": cfg.scheme, "tau_grid": cfg.tau_grid}
    dgps = tuple(d.strip() for d in args.dgp.split(","))
    sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else None
    threads = args.threads
    if args.table == "table1":
        rep = simulation.table1(args.reps, args.seed, dgps, sizes or (50, 100, 200), N=args.N or 100, threads=threads, **kw)
    elif args.table == "table2a":
        rep = simulation.table2a(args.reps, args.seed, dgps, sizes or (200,), N=args.N or 100, threads=threads, **kw)
    else:
        rep = simulation.table2b(args.reps, args.seed, dgps, sizes or (200,), threads=threads, **kw)
    if args.format == "json":
        _emit(args, rep.to_json() + "\n")
    else:
        _emit(args, rep.to_csv())
    return 0


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=0, help="random seed (validation folds, simulations)")
    g.add_argument("--threads", type=int, default=simulation.default_threads(), help="worker cap")
    g.add_argument("--output", "-o", default=None, help="output file (default stdout)")
    g.add_argument("--format", choices=("json", "csv"), default=None)
    g.add_argument("--verbose", "-v", action="store_true")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHOD_CHOICES, default="l2relax")
    p.add_argument(
        "--tau",
        type=float,
        default=None,
        help="fixed hyperparameter: tau (l2relax), penalty (ridge, lasso) or number of factors (pca)",
    )
    p.add_argument("--validate", default=None, help="holdout[:frac], block[:K] or kfold[:K] (default holdout:0.2)")
    p.add_argument("--grid", type=int, default=50, help="number of grid values for validation")
    p.add_argument("--raw", action="store_true", help="also report the fit on standardized data")
    p.add_argument("--no-standardize", action="store_true", help="fit on the data as given")


def _inference_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--h1", type=int, default=None, help="lag for the pre-treatment long-run variance")
    p.add_argument("--h2", type=int, default=None, help="lag for the post-treatment long-run variance")
    p.add_argument("--kernel", choices=("uniform", "bartlett"), default="uniform")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l2relax", description="L2-relaxation prediction and panel data inference")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit on the training rows and report coefficients and MPSE")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--split", default=None, help="last training row: row number or time label (default all rows)")
    p.add_argument("--scores", default=None, help="write the validation score table CSV here")
    _model_flags(p)
    p.set_defaults(handler=cmd_fit, command_name="fit")

    p = sub.add_parser("predict", help="predict from a saved fit")
    _common(p)
    p.add_argument("--fit", required=True, help="fit JSON written by the fit command")
    p.add_argument("--input", required=True)
    p.add_argument("--target", default=None, help="target column; adds the MPSE over the predicted rows")
    p.add_argument("--split", default=None)
    p.add_argument("--rows", choices=("all", "train", "eval"), default="eval")
    p.set_defaults(handler=cmd_predict, command_name="predict")

    p = sub.add_parser("pda", help="treatment effect inference")
    pda_sub = p.add_subparsers(dest="pda_mode", required=True)
    for mode, handler in (("single", cmd_pda_single), ("multi", cmd_pda_multi)):
        q = pda_sub.add_parser(mode)
        _common(q)
        q.add_argument("--input", required=True)
        q.add_argument("--treated", required=True, type=lambda s: [t.strip() for t in s.split(",") if t.strip()])
        q.add_argument("--pre-end", required=True, help="last pre-treatment row: row number or time label")
        q.add_argument("--post-start", default=None, help="first post-treatment row (default the next row)")
        _model_flags(q)
        _inference_flags(q)
        q.set_defaults(handler=handler, command_name=f"pda {mode}")

    p = sub.add_parser("placebo", help="zero-effect test inside the pre-treatment rows")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--treated", required=True, type=lambda s: [s.strip()])
    p.add_argument("--pre-end", required=True)
    p.add_argument("--placebo-split", default=None, help="last pseudo-training row (default 80%% of pre-treatment rows)")
    _model_flags(p)
    _inference_flags(p)
    p.set_defaults(handler=cmd_placebo, command_name="placebo")

    p = sub.add_parser("simulate", help="Monte Carlo tables")
    _common(p)
    p.add_argument("table", choices=("table1", "table2a", "table2b"))
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--dgp", default="strong-homo", help="comma list of loadings-errors selectors, e.g. strong-homo,weak-mild")
    p.add_argument("--sizes", default=None, help="comma list of T (table1, table2a) or N = T1 (table2b)")
    p.add_argument("--N", type=int, default=None, help="number of controls (table1, table2a)")
    p.add_argument("--config", default=None, help="key = value file with scheme and tau_grid")
    p.set_defaults(handler=cmd_simulate, command_name="simulate")
    return parser


def _setup_logging(verbose: bool) -> None:
    # own handler on the package logger so diagnostics reach the current
    # stderr even when the host process has configured the root logger
    for h in list(log.handlers):
        if getattr(h, "_l2relax", False):
            log.removeHandler(h)
    h = logging.StreamHandler(sys.stderr)
    h._l2relax = True
    h.setFormatter(logging.Formatter("%(name)s: %(levelname)s: %(message)s"))
    log.addHandler(h)
    log.setLevel(logging.DEBUG if verbose else logging.WARNING)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    if args.format is None:
        args.format = "csv" if args.command == "simulate" else "json"
    if args.command == "simulate" and args.reps < 1:
        parser.error("--reps must be >= 1")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.handler(args)
    except (PanelError, CliError, pda.DegenerateVarianceError, baselines.RankDeficientError, np.linalg.LinAlgError) as e:
        print(f"l2relax: error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"l2relax: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: solve, train, sweep, noise-study, report.

Exit codes: 0 success, 2 configuration error, 3 training diverged,
4 internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import engine, svg
from .config import (
    ExperimentConfig,
    load_config,
    save_config,
    serialize_config,
    weights_from_list,
)
from .errors import ConfigError, NumericsError
from .integrators import NOISE_LEVELS, adaptive_rk45_integrate, rk4_integrate
from .problems import PROBLEMS, get_problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INTERNAL = 4

# Table-style sweep grid shipped as the default for the rlc study
SWEEP_GRID = {
    "layers": [1, 3, 9],
    "neurons": [5, 25, 75, 100],
    "activations": ["relu", "tanh", "sigmoid", "sine"],
    "weight_sets": [[1.0, 1.0, 1.0, 1.0], [1e-7, 1e3, 1.0, 1.0]],
}
QUICK_GRID = {
    "layers": [3],
    "neurons": [25],
    "activations": ["sine"],
    "weight_sets": [[1.0, 1.0, 1.0, 1.0], [1e-7, 1e3, 1.0, 1.0]],
}

# noise level -> (layers, neurons, collocation points, adam epochs)
NOISE_ROWS = [
    (0.2, 3, 40, 400, 50000),
    (1.0, 4, 50, 500, 75000),
    (3.0, 5, 60, 600, 100000),
]


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list: {text!r}") from exc


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(
        prog="pinn-ode",
        description="Physics-informed neural networks for ODE benchmark systems",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="generate a reference trajectory")
    ps.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    ps.add_argument("--method", default="rk45", choices=["rk45", "rk4"])
    ps.add_argument("--rtol", type=float, default=1e-9)
    ps.add_argument("--atol", type=float, default=1e-9)
    ps.add_argument("--h", type=float, default=None, help="rk4 step size")
    ps.add_argument("--t-end", type=float, default=None)
    ps.add_argument("--points", type=int, default=1000, help="evaluation grid size")
    ps.add_argument("--out", default="runs/solve")

    pt = sub.add_parser("train", help="train a network on one problem")
    _add_train_flags(pt)

    pw = sub.add_parser("sweep", help="architecture/weight grid study")
    pw.add_argument("--problem", default="rlc", choices=sorted(PROBLEMS))
    pw.add_argument("--layers", type=_int_list, default=None)
    pw.add_argument("--neurons", type=_int_list, default=None)
    pw.add_argument("--activations", default=None,
                    help="comma-separated activation names")
    pw.add_argument("--weight-sets", default=None,
                    help="semicolon-separated weight lists, e.g. '1,1,1,1;1e-7,1e3,1,1'")
    pw.add_argument("--quick", action="store_true",
                    help="3x25 sine cells with both weight sets only")
    pw.add_argument("--epochs", type=int, default=None)
    pw.add_argument("--colloc", type=int, default=None)
    pw.add_argument("--learning-rate", type=float, default=None)
    pw.add_argument("--lbfgs", type=int, default=None)
    pw.add_argument("--seed", type=int, default=None)
    pw.add_argument("--workers", type=int, default=1)
    pw.add_argument("--out", default="runs/sweep")

    pn = sub.add_parser("noise-study", help="noise-robustness study rows")
    pn.add_argument("--problem", default="lorenz", choices=sorted(PROBLEMS))
    pn.add_argument("--sigmas", type=_float_list, default=[s for s, *_ in NOISE_ROWS])
    pn.add_argument("--epochs", type=int, default=None,
                    help="override every row's epoch budget")
    pn.add_argument("--lbfgs", type=int, default=None)
    pn.add_argument("--obs-n", type=int, default=100)
    pn.add_argument("--seed", type=int, default=None)
    pn.add_argument("--workers", type=int, default=1)
    pn.add_argument("--out", default="runs/noise-study")

    pr = sub.add_parser("report", help="summarize a finished run directory")
    pr.add_argument("--run", required=True, help="directory holding report.json")
    pr.add_argument("--plots", action="store_true", help="regenerate SVG plots")

    return p


def _add_train_flags(pt):
    pt.add_argument("--problem", default=None, choices=sorted(PROBLEMS))
    pt.add_argument("--config", default=None, help="config file path")
    pt.add_argument("--seed", type=int, default=None)
    pt.add_argument("--epochs", type=int, default=None)
    pt.add_argument("--layers", type=int, default=None)
    pt.add_argument("--neurons", type=int, default=None)
    pt.add_argument("--activation", default=None)
    pt.add_argument("--loss-weights", type=_float_list, default=None)
    pt.add_argument("--colloc", type=int, default=None)
    pt.add_argument("--learning-rate", type=float, default=None)
    pt.add_argument("--lbfgs", type=int, default=None)
    pt.add_argument("--feature-map", default=None, choices=["identity", "sinusoidal"])
    pt.add_argument("--n-features", type=int, default=None)
    pt.add_argument("--constraint", default=None,
                    choices=["preset", "soft", "hard", "positivity"])
    pt.add_argument("--obs", default=None, choices=["preset", "none", "synthetic"])
    pt.add_argument("--obs-sigma", type=float, default=None)
    pt.add_argument("--obs-n", type=int, default=None)
    pt.add_argument("--obs-seed", type=int, default=None)
    pt.add_argument("--t-end", type=float, default=None)
    pt.add_argument("--out", default=None)


def _config_from_args(args):
    """File config plus flag overrides; flags win."""
    if args.config:
        cfg = load_config(args.config)
    elif args.problem:
        cfg = ExperimentConfig(problem=args.problem)
    else:
        raise ConfigError("train needs --problem or --config")
    overrides = {}
    mapping = {
        "problem": "problem", "seed": "seed", "epochs": "epochs",
        "layers": "layers", "neurons": "neurons", "activation": "activation",
        "loss_weights": "loss_weights", "colloc": "colloc",
        "learning_rate": "learning_rate", "lbfgs": "lbfgs",
        "feature_map": "feature_map", "n_features": "n_features",
        "constraint": "constraint", "obs": "obs", "obs_sigma": "obs_sigma",
        "obs_n": "obs_n", "obs_seed": "obs_seed", "t_end": "t_end", "out": "out",
    }
    for arg_name, cfg_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[cfg_name] = value
    return replace(cfg, **overrides)


def _component_names(problem):
    return {
        "lorenz": ["x", "y", "z"],
        "lotka-volterra": ["x", "y"],
        "mass-spring": ["x", "y"],
        "rlc": ["v"],
    }.get(problem.name, [f"u{j}" for j in range(problem.dimension)])


def _emit_plots(report, outdir, names):
    manifest = {}
    series = []
    for j, name in enumerate(names):
        series.append((report.eval_times, report.reference[:, j], f"{name} reference"))
        series.append((report.eval_times, report.prediction[:, j], f"{name} predicted"))
    path = os.path.join(outdir, "solution.svg")
    svg.line_plot(path, series, title="Predicted vs reference", xlabel="t")
    manifest["solution_plot"] = path

    rows = report.loss_rows()
    if rows:
        its = np.array([r[1] for r in rows], dtype=float)
        series = [
            (its, np.array([r[2] for r in rows]), "data"),
            (its, np.array([r[3] for r in rows]), "ode"),
            (its, np.array([r[4] for r in rows]), "ic"),
            (its, np.array([r[5] for r in rows]), "total"),
        ]
        path = os.path.join(outdir, "loss.svg")
        svg.line_plot(path, series, title="Loss history", xlabel="iteration",
                      ylabel="loss", logy=True)
        manifest["loss_plot"] = path

    if report.error_history:
        its = np.array([i for i, _ in report.error_history], dtype=float)
        errs = np.array([e for _, e in report.error_history])
        path = os.path.join(outdir, "error.svg")
        svg.line_plot(path, [(its, errs, "relative L2")], title="Relative L2 error",
                      xlabel="iteration", logy=True)
        manifest["error_plot"] = path
    return manifest


def cmd_train(args):
    cfg = _config_from_args(args)
    outdir = cfg.out if cfg.out != "runs" else os.path.join("runs", cfg.problem)
    problem, spec, train_cfg = cfg.build()
    report = engine.train(problem, spec, train_cfg)
    names = _component_names(problem)
    os.makedirs(outdir, exist_ok=True)
    manifest = engine.save_report(report, outdir, component_names=names)
    manifest.update(_emit_plots(report, outdir, names))
    cfg_path = os.path.join(outdir, "config.txt")
    save_config(cfg, cfg_path)
    manifest["config"] = cfg_path
    # fold plot/config entries into the saved report manifest
    with open(manifest["report"]) as fh:
        payload = json.load(fh)
    payload["files"] = {k: v for k, v in manifest.items() if k != "report"}
    with open(manifest["report"], "w") as fh:
        json.dump(payload, fh, indent=2)

    print(f"[train] {cfg.problem}: status={report.status} "
          f"loss={report.final_loss:.6g} L2={report.l2_total:.6g} "
          f"wall={report.wall_seconds:.1f}s -> {outdir}")
    return EXIT_DIVERGED if report.diverged else EXIT_OK


def cmd_solve(args):
    overrides = {}
    if args.t_end is not None:
        base = get_problem(args.problem)
        overrides["domain"] = (base.domain[0], args.t_end)
    problem = get_problem(args.problem, **overrides)
    grid = np.linspace(*problem.domain, args.points)
    if args.method == "rk45":
        traj = adaptive_rk45_integrate(problem, rtol=args.rtol, atol=args.atol, t_eval=grid)
    else:
        h = args.h or (problem.domain[1] - problem.domain[0]) / max(args.points - 1, 1)
        n_steps = int(round((problem.domain[1] - problem.domain[0]) / h))
        traj = rk4_integrate(problem, h, n_steps)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{args.problem}_trajectory.csv")
    cols = ["t"] + [f"s{j}" for j in range(traj.states.shape[1])]
    traj.to_csv(csv_path, header=cols)
    meta = dict(traj.meta)
    meta.update({"problem": args.problem, "params": problem.params,
                 "domain": list(problem.domain), "columns": cols})
    meta_path = os.path.join(args.out, f"{args.problem}_metadata.json")
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"[solve] {args.problem}: {traj.times.size} points -> {csv_path}")
    return EXIT_OK


def _run_cell(payload):
    """One sweep cell in a worker process; never raises."""
    cell, cfg_kw = payload
    row = dict(cell)
    try:
        cfg = ExperimentConfig(**cfg_kw)
        problem, spec, train_cfg = cfg.build()
        report = engine.train(problem, spec, train_cfg)
        row.update(
            l2=report.l2_total,
            loss_data=report.final_components["data"],
            loss_ode=report.final_components["ode"],
            loss_ic=report.final_components["ic"],
            loss_total=report.final_components["total"],
            wall_seconds=round(report.wall_seconds, 2),
            diverged=report.diverged,
            status=report.status,
        )
    except Exception as exc:  # cell failures are data, not crashes
        row.update(l2=float("nan"), loss_data=float("nan"), loss_ode=float("nan"),
                   loss_ic=float("nan"), loss_total=float("nan"), wall_seconds=0.0,
                   diverged=True, status=f"error: {exc}")
    return row


def _run_cells(payloads, workers):
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, payloads))
    return [_run_cell(p) for p in payloads]


_SWEEP_COLUMNS = [
    "layers", "neurons", "activation", "weights", "l2", "loss_data", "loss_ode",
    "loss_ic", "loss_total", "wall_seconds", "diverged", "status",
]


def cmd_sweep(args):
    grid = QUICK_GRID if args.quick else SWEEP_GRID
    layers = args.layers or grid["layers"]
    neurons = args.neurons or grid["neurons"]
    activations = (
        [a.strip() for a in args.activations.split(",")]
        if args.activations
        else grid["activations"]
    )
    if args.weight_sets:
        weight_sets = [_float_list(ws) for ws in args.weight_sets.split(";")]
    else:
        weight_sets = grid["weight_sets"]
    for ws in weight_sets:
        weights_from_list(args.problem, ws)  # validate length up front

    payloads = []
    for L in layers:
        for n in neurons:
            for act in activations:
                for ws in weight_sets:
                    cell = {
                        "layers": L,
                        "neurons": n,
                        "activation": act,
                        "weights": ";".join(f"{w:g}" for w in ws),
                    }
                    cfg_kw = dict(
                        problem=args.problem, layers=L, neurons=n, activation=act,
                        loss_weights=list(ws), seed=args.seed,
                        epochs=args.epochs, colloc=args.colloc,
                        learning_rate=args.learning_rate, lbfgs=args.lbfgs,
                        error_every=0,
                    )
                    payloads.append((cell, cfg_kw))

    started = time.perf_counter()
    rows = _run_cells(payloads, args.workers)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(",".join(_SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in _SWEEP_COLUMNS) + "\n")
    print(f"[sweep] {len(rows)} cells in {time.perf_counter() - started:.1f}s -> {csv_path}")
    for row in rows:
        print(f"  L={row['layers']} N={row['neurons']} {row['activation']:8s} "
              f"w=[{row['weights']}] L2={row['l2']:.4g} diverged={row['diverged']}")
    return EXIT_OK


def _csv_cell(v):
    if isinstance(v, str):
        return '"' + v.replace('"', "'") + '"' if "," in v else v
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _noise_row_settings(sigma):
    """Nearest study row for a noise level."""
    best = min(NOISE_ROWS, key=lambda row: abs(row[0] - sigma))
    _, layers, neurons, colloc, epochs = best
    return layers, neurons, colloc, epochs


def _run_noise_row(payload):
    sigma, cfg_kw, outdir = payload
    try:
        cfg = ExperimentConfig(**cfg_kw)
        problem, spec, train_cfg = cfg.build()
        report = engine.train(problem, spec, train_cfg)
        names = _component_names(problem)
        os.makedirs(outdir, exist_ok=True)
        engine.save_report(report, outdir, component_names=names)
        _emit_plots(report, outdir, names)
        if problem.dimension == 3:
            phase_path = os.path.join(outdir, "phase.csv")
            with open(phase_path, "w") as fh:
                fh.write("t," + ",".join(f"{n}_pred" for n in names)
                         + "," + ",".join(f"{n}_ref" for n in names) + "\n")
                for i, t in enumerate(report.eval_times):
                    vals = [t, *report.prediction[i], *report.reference[i]]
                    fh.write(",".join(repr(float(v)) for v in vals) + "\n")
            for a, b in ((0, 1), (0, 2), (1, 2)):
                svg.line_plot(
                    os.path.join(outdir, f"phase_{names[a]}{names[b]}.svg"),
                    [
                        (report.reference[:, a], report.reference[:, b], "reference"),
                        (report.prediction[:, a], report.prediction[:, b], "predicted"),
                    ],
                    title=f"Phase portrait {names[a]}-{names[b]}",
                    xlabel=names[a], ylabel=names[b],
                )
        return {
            "sigma": sigma, "status": report.status, "diverged": report.diverged,
            "loss_total": report.final_components["total"], "l2": report.l2_total,
            "wall_seconds": round(report.wall_seconds, 2), "outdir": outdir,
        }
    except Exception as exc:
        return {"sigma": sigma, "status": f"error: {exc}", "diverged": True,
                "loss_total": float("nan"), "l2": float("nan"),
                "wall_seconds": 0.0, "outdir": outdir}


def cmd_noise_study(args):
    payloads = []
    for sigma in args.sigmas:
        if sigma < 0:
            raise ConfigError("noise level sigma must be nonnegative")
        layers, neurons, colloc, epochs = _noise_row_settings(sigma)
        cfg_kw = dict(
            problem=args.problem, layers=layers, neurons=neurons,
            activation="tanh", colloc=colloc,
            epochs=args.epochs if args.epochs is not None else epochs,
            lbfgs=args.lbfgs, learning_rate=1e-3,
            loss_weights=[1.0, 1.0, 1.0], obs="synthetic",
            obs_sigma=sigma, obs_n=args.obs_n, seed=args.seed,
        )
        outdir = os.path.join(args.out, f"sigma_{sigma:g}")
        payloads.append((sigma, cfg_kw, outdir))

    rows = _run_cells_noise(payloads, args.workers)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "noise_study.csv")
    cols = ["sigma", "status", "diverged", "loss_total", "l2", "wall_seconds", "outdir"]
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in cols) + "\n")
    for row in rows:
        print(f"[noise-study] sigma={row['sigma']:g} loss={row['loss_total']:.4g} "
              f"L2={row['l2']:.4g} status={row['status']}")
    print(f"[noise-study] -> {csv_path}")
    return EXIT_OK if all(not r["diverged"] for r in rows) else EXIT_DIVERGED


def _run_cells_noise(payloads, workers):
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_noise_row, payloads))
    return [_run_noise_row(p) for p in payloads]


def cmd_report(args):
    report_path = os.path.join(args.run, "report.json")
    if not os.path.exists(report_path):
        raise ConfigError(f"no report.json under {args.run!r}")
    with open(report_path) as fh:
        payload = json.load(fh)
    print(f"problem:   {payload['problem']}")
    print(f"status:    {payload['status']} (diverged={payload['diverged']})")
    print(f"seed:      {payload['seed']}")
    print(f"wall:      {payload['wall_seconds']:.1f}s")
    print(f"L2 total:  {payload['l2_total']:.6g}")
    for j, v in enumerate(payload["l2_per_component"]):
        print(f"  L2[{j}]:   {v:.6g}")
    for k, v in payload["final_components"].items():
        print(f"loss {k:6s} {v:.6g}")
    missing = [p for p in payload.get("files", {}).values() if not os.path.exists(p)]
    if missing:
        print("missing files:", ", ".join(missing))
    if args.plots:
        _replot_from_csv(args.run, payload)
        print("plots regenerated")
    return EXIT_OK


def _replot_from_csv(rundir, payload):
    sol = np.genfromtxt(os.path.join(rundir, "solution.csv"), delimiter=",", names=True)
    names = [n[:-5] for n in sol.dtype.names if n.endswith("_pred")]
    series = []
    for n in names:
        series.append((sol["t"], sol[f"{n}_ref"], f"{n} reference"))
        series.append((sol["t"], sol[f"{n}_pred"], f"{n} predicted"))
    svg.line_plot(os.path.join(rundir, "solution.svg"), series,
                  title="Predicted vs reference", xlabel="t")
    hist = np.genfromtxt(os.path.join(rundir, "loss_history.csv"), delimiter=",",
                         names=True, encoding=None)
    if hist.size:
        its = np.arange(hist.size, dtype=float)
        series = [(its, hist[k], k) for k in ("data", "ode", "ic", "total")]
        svg.line_plot(os.path.join(rundir, "loss.svg"), series, title="Loss history",
                      xlabel="iteration", logy=True)
    err = np.genfromtxt(os.path.join(rundir, "error_history.csv"), delimiter=",",
                        names=True)
    if err.size:
        svg.line_plot(
            os.path.join(rundir, "error.svg"),
            [(np.atleast_1d(err["iteration"]),
              np.atleast_1d(err["l2_relative_error"]), "relative L2")],
            title="Relative L2 error", xlabel="iteration", logy=True,
        )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "solve": cmd_solve,
        "train": cmd_train,
        "sweep": cmd_sweep,
        "noise-study": cmd_noise_study,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())

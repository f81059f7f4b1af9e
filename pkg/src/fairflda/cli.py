"""Command-line surface: simulate, fit, evaluate, reproduce, tune-kappa.

File formats
------------
Datasets are CSV with header ``a,y,x_0,...,x_{m-1}``; curve values sit on the
shared uniform grid whose size is inferred from the column count. Models are
self-describing JSON holding the grid, per-half per-group eigen quantities
and score functionals, priors, disparity coefficients and the calibrated
shifts. Every run writes one plain-text key=value manifest next to its
output.

Exit codes: 0 success, 2 usage error, 3 data error, 4 fit finished but the
calibration could not meet the budget (model still written).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bench, classifier, fairness, fpca, simgen
from .exceptions import DataFormatError, DegenerateCellError, FairFldaError
from .fnspace import Dataset, Grid, uniform_grid

_FIGURES = {
    "main-sim": ("main-beta1.5", 2000),
    "appendix-n1000": ("main-beta1.5", 1000),
    "appendix-n5000": ("main-beta1.5", 5000),
    "appendix-beta2": ("main-beta2", 2000),
    "appendix-nongauss": ("nongauss-beta1.5", 2000),
    "appendix-perfect-I": ("perfect-I-beta0.5", 2000),
    "appendix-perfect-II": ("perfect-II-beta0.5", 2000),
}

DEFAULT_DELTAS = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2)


# ----------------------------------------------------------------- datasets

def write_dataset_csv(data: Dataset, path) -> None:
    m = len(data.grid)
    header = "a,y," + ",".join(f"x_{i}" for i in range(m))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(data.n):
            row = ",".join(repr(float(v)) for v in data.x[i])
            fh.write(f"{data.a[i]},{data.y[i]},{row}\n")


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if len(cols) < 5 or cols[:2] != ["a", "y"]:
            raise DataFormatError(f"{path}: expected header a,y,x_0,...  got {header[:60]!r}")
        m = len(cols) - 2
        a, y, rows = [], [], []
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != m + 2:
                raise DataFormatError(f"{path}:{ln}: expected {m + 2} fields, got {len(parts)}")
            try:
                a.append(int(parts[0]))
                y.append(int(parts[1]))
                rows.append([float(v) for v in parts[2:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    try:
        return Dataset(grid=uniform_grid(m), x=np.array(rows), a=np.array(a), y=np.array(y))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# ------------------------------------------------------------------- models

def _half_to_dict(h: classifier.HalfClassifier) -> dict:
    groups = {}
    for a in (0, 1):
        model = h.stage1.models[a] if h.stage1.models else None
        score = h.stage1.scores[a]
        groups[str(a)] = {
            "eigenvalues": model.eigen.eigenvalues[: model.n_components].tolist()
            if model
            else None,
            "theta": model.theta.tolist() if model else None,
            "coef": score.coef.tolist(),
            "offset": score.offset,
            "functions": score.functions.tolist(),
        }
    sol = h.solution
    return {
        "groups": groups,
        "pi": h.stage1.pi.tolist(),
        "n_cal": h.stage1.n_cal,
        "spec": {
            "kind": h.spec.kind,
            "ratio_weight": h.spec.ratio_weight.tolist(),
            "base_weight": h.spec.base_weight.tolist(),
        },
        "tau": h.tau,
        "kappa": h.kappa,
        "delta_eff": h.delta_eff,
        "solution": None
        if sol is None
        else {
            "tau": sol.tau,
            "feasible": sol.feasible,
            "achieved": sol.achieved,
            "candidates_scanned": sol.candidates_scanned,
        },
    }


def write_model_json(clf: classifier.FittedFairClassifier, path) -> None:
    grid = clf.halves[0].stage1.scores[0].grid
    doc = {
        "format": "fairflda-model",
        "version": __version__,
        "config": {
            "kind": clf.config.kind,
            "delta": None if np.isinf(clf.config.delta) else clf.config.delta,
            "variant": clf.config.variant,
            "rho": clf.config.rho,
            "seed": clf.config.seed,
            "cross_fit": clf.config.cross_fit,
            "n_components": clf.n_components,
        },
        "grid": {"points": grid.points.tolist(), "weights": grid.weights.tolist()},
        "halves": [_half_to_dict(h) for h in clf.halves],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_model_json(path) -> classifier.FittedFairClassifier:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("format") != "fairflda-model":
        raise DataFormatError(f"{path}: not a model file")
    grid = Grid(points=np.array(doc["grid"]["points"]), weights=np.array(doc["grid"]["weights"]))
    cfgd = doc["config"]
    cfg = classifier.FitConfig(
        kind=cfgd["kind"],
        delta=float("inf") if cfgd["delta"] is None else cfgd["delta"],
        variant=cfgd["variant"],
        rho=cfgd["rho"],
        n_components=cfgd["n_components"],
        seed=cfgd["seed"],
        cross_fit=cfgd["cross_fit"],
    )
    halves = []
    for hd in doc["halves"]:
        scores = {}
        for a in (0, 1):
            gd = hd["groups"][str(a)] if "groups" in hd else None
            scores[a] = fpca.ScoreFunctional(
                a=a,
                coef=np.array(gd["coef"]),
                offset=gd["offset"],
                functions=np.array(gd["functions"]),
                grid=grid,
            )
        stage1 = classifier.Stage1Fit(
            pi=np.array(hd["pi"]),
            models=None,
            scores=scores,
            cal_scores=None,
            n_cal=hd["n_cal"],
            n_components=cfgd["n_components"],
        )
        sold = hd["solution"]
        sol = (
            None
            if sold is None
            else fairness.ThresholdSolution(
                sold["tau"], sold["feasible"], sold["achieved"], sold["candidates_scanned"]
            )
        )
        halves.append(
            classifier.HalfClassifier(
                stage1=stage1,
                spec=fairness.DisparitySpec(
                    hd["spec"]["kind"],
                    np.array(hd["spec"]["ratio_weight"]),
                    np.array(hd["spec"]["base_weight"]),
                ),
                tau=hd["tau"],
                solution=sol,
                kappa=hd["kappa"],
                delta_eff=hd["delta_eff"],
            )
        )
    return classifier.FittedFairClassifier(
        halves=tuple(halves), config=cfg, n_components=cfgd["n_components"]
    )


# ---------------------------------------------------------------- manifests

def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={v}\n")


def _manifest_base(argv) -> dict:
    return {"command": " ".join(argv), "version": __version__}


# ----------------------------------------------------------------- commands

def _load_config_file(path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{ln}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _merged(args, key, cast, default):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        return cast(cfg[key])
    return default


def cmd_simulate(args, argv) -> int:
    t0 = time.time()
    seed = _merged(args, "seed", int, 0)
    n = _merged(args, "n", int, 2000)
    if args.preset:
        cfg = simgen.preset(args.preset, n_train=n, seed=seed)
    else:
        cfg = simgen.ScenarioConfig(
            beta=_merged(args, "beta", float, 1.5),
            p_a1=_merged(args, "p_a1", float, 0.7),
            p_y1_a0=_merged(args, "p_y1_a0", float, 0.4),
            p_y1_a1=_merged(args, "p_y1_a1", float, 0.7),
            family=_merged(args, "family", str, "gaussian"),
            n_train=n,
            grid_size=_merged(args, "grid_size", int, simgen.DEFAULT_GRID_SIZE),
            seed=seed,
        )
    data = simgen.generate(cfg, n, seed=seed)
    write_dataset_csv(data, args.out)
    write_manifest(
        str(args.out) + ".manifest.txt",
        _manifest_base(argv)
        | {
            "preset": args.preset or "",
            "beta": cfg.beta,
            "family": cfg.family,
            "n": n,
            "grid_size": cfg.grid_size,
            "seed": seed,
            "rows_written": data.n,
            "wall_time_s": round(time.time() - t0, 3),
        },
    )
    return 0


def cmd_fit(args, argv) -> int:
    t0 = time.time()
    data = read_dataset_csv(args.data)
    delta = _merged(args, "delta", float, 0.1)
    if isinstance(delta, list):
        if len(delta) != 1:
            raise DataFormatError("fit takes exactly one --delta")
        delta = delta[0]
    cfg = classifier.FitConfig(
        kind=_merged(args, "disparity", str, "do").upper(),
        delta=float(delta),
        variant=_merged(args, "variant", str, "fair"),
        rho=_merged(args, "rho", float, 0.05),
        n_components=args.J,
        seed=_merged(args, "seed", int, 0),
        cross_fit=not args.no_cross_fit,
        kappa=args.kappa,
    )
    clf = classifier.fit(data, cfg)
    write_model_json(clf, args.out)
    manifest = _manifest_base(argv) | clf.manifest() | {
        "data": str(args.data),
        "model": str(args.out),
        "wall_time_s": round(time.time() - t0, 3),
    }
    write_manifest(str(args.out) + ".manifest.txt", manifest)
    if not clf.feasible:
        print("warning: calibration infeasible; using the shift with smallest |D|", file=sys.stderr)
        return 4
    return 0


def cmd_evaluate(args, argv) -> int:
    t0 = time.time()
    clf = read_model_json(args.model)
    test = read_dataset_csv(args.test)
    values = clf.decision_values(test)
    metrics = {
        "error": bench.error_from_values(values, test.y),
        "DO": bench.disparity_from_values(values, test.a, test.y, "DO"),
        "PD": bench.disparity_from_values(values, test.a, test.y, "PD"),
        "DD": bench.disparity_from_values(values, test.a, test.y, "DD"),
    }
    out = args.out or (str(args.model) + ".metrics.csv")
    with open(out, "w") as fh:
        fh.write(",".join(metrics) + "\n")
        fh.write(",".join(repr(v) for v in metrics.values()) + "\n")
    write_manifest(
        str(out) + ".manifest.txt",
        _manifest_base(argv)
        | {"model": str(args.model), "test": str(args.test), "rows": test.n}
        | metrics
        | {"wall_time_s": round(time.time() - t0, 3)},
    )
    print(",".join(f"{k}={v:.6f}" for k, v in metrics.items()))
    return 0


def _write_stat_table(path, report: bench.EvalReport, statistic: str) -> None:
    with open(path, "w") as fh:
        fh.write("method,delta,statistic,value\n")
        for row in report.summary_rows():
            fh.write(f"{row['method']},{row['delta']},{statistic},{row[statistic]!r}\n")


def cmd_reproduce(args, argv) -> int:
    t0 = time.time()
    if args.figure not in _FIGURES:
        raise DataFormatError(f"unknown figure id {args.figure!r}; choose from {sorted(_FIGURES)}")
    preset_name, default_n = _FIGURES[args.figure]
    n = _merged(args, "n", int, default_n)
    seed = _merged(args, "seed", int, 0)
    reps = _merged(args, "reps", int, 100)
    kind = _merged(args, "disparity", str, "do").upper()
    deltas = tuple(args.delta) if args.delta else DEFAULT_DELTAS
    cfg = simgen.preset(preset_name, n_train=n, seed=seed)
    report = bench.run_experiment(
        cfg,
        methods=("flda", "fair", "fairc", "oracle"),
        deltas=deltas,
        n_replications=reps,
        seed=seed,
        kind=kind,
        n_jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_stat_table(out / "error.csv", report, "median_error")
    _write_stat_table(out / "median-absD.csv", report, "median_abs_disparity")
    _write_stat_table(out / "q95-absD.csv", report, "q95_abs_disparity")
    with open(out / "replications.csv", "w") as fh:
        fh.write("replication,method,delta,error,disparity,feasible,n_components\n")
        for r in report.rows:
            fh.write(
                f"{r['replication']},{r['method']},{r['delta']},{r['error']!r},"
                f"{r['disparity']!r},{r.get('feasible', '')},{r['n_components']}\n"
            )
    write_manifest(
        out / "manifest.txt",
        _manifest_base(argv)
        | {
            "figure": args.figure,
            "preset": preset_name,
            "n": n,
            "reps": reps,
            "disparity": kind,
            "deltas": ";".join(str(d) for d in deltas),
            "seed": seed,
            "regenerated_replications": report.regenerated,
            "test_sets": "fresh per replication, shared across methods and deltas",
            "quantile": "nearest-rank ceil(q*R)",
            "wall_time_s": round(time.time() - t0, 3),
        },
    )
    return 0


def cmd_tune_kappa(args, argv) -> int:
    t0 = time.time()
    data = read_dataset_csv(args.data)
    delta = _merged(args, "delta", float, 0.1)
    if isinstance(delta, list):
        delta = delta[0]
    result = bench.tune_kappa(
        data,
        kind=_merged(args, "disparity", str, "do").upper(),
        delta=float(delta),
        rho=_merged(args, "rho", float, 0.05),
        n_splits=_merged(args, "splits", int, 100),
        seed=_merged(args, "seed", int, 0),
        n_components=args.J,
    )
    with open(args.out, "w") as fh:
        fh.write("kappa,quantile\n")
        for kappa, q in result.table:
            fh.write(f"{kappa!r},{q!r}\n")
    write_manifest(
        str(args.out) + ".manifest.txt",
        _manifest_base(argv)
        | {
            "selected_kappa": result.kappa,
            "quantile": result.quantile,
            "satisfied": result.satisfied,
            "wall_time_s": round(time.time() - t0, 3),
        },
    )
    print(f"kappa={result.kappa!r} quantile={result.quantile!r} satisfied={result.satisfied}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairflda", description=__doc__)
    p.add_argument("--config", help="key=value file supplying defaults; flags win")
    sub = p.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic dataset CSV")
    sim.add_argument("--preset", choices=simgen.preset_names())
    sim.add_argument("--beta", type=float)
    sim.add_argument("--p-a1", dest="p_a1", type=float)
    sim.add_argument("--p-y1-a0", dest="p_y1_a0", type=float)
    sim.add_argument("--p-y1-a1", dest="p_y1_a1", type=float)
    sim.add_argument("--family", choices=simgen.FAMILIES)
    sim.add_argument("--grid-size", dest="grid_size", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit a classifier from a dataset CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--disparity", choices=("do", "pd", "dd"))
    fit.add_argument("--delta", type=float, action="append")
    fit.add_argument("--variant", choices=classifier.VARIANTS)
    fit.add_argument("--rho", type=float)
    fit.add_argument("--kappa", type=float, help="override the deviation constant")
    jgroup = fit.add_mutually_exclusive_group()
    jgroup.add_argument("--J", type=int, help="fixed truncation level")
    jgroup.add_argument("--cv", action="store_true", help="select truncation by cross-validation (default)")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--no-cross-fit", action="store_true")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="evaluate a model file on a test CSV")
    ev.add_argument("--model", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("reproduce", help="run a replicated experiment and emit figure tables")
    rep.add_argument("figure", choices=sorted(_FIGURES))
    rep.add_argument("--disparity", choices=("do", "pd", "dd"))
    rep.add_argument("--delta", type=float, action="append")
    rep.add_argument("--n", type=int)
    rep.add_argument("--reps", type=int)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--jobs", type=int, default=1)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_reproduce)

    tune = sub.add_parser("tune-kappa", help="pick the deviation constant by repeated splits")
    tune.add_argument("--data", required=True)
    tune.add_argument("--disparity", choices=("do", "pd", "dd"))
    tune.add_argument("--delta", type=float, action="append")
    tune.add_argument("--rho", type=float)
    tune.add_argument("--splits", type=int)
    tune.add_argument("--J", type=int)
    tune.add_argument("--seed", type=int)
    tune.add_argument("--out", required=True)
    tune.set_defaults(func=cmd_tune_kappa)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config_values = _load_config_file(args.config) if args.config else {}
    try:
        return args.func(args, ["fairflda"] + argv)
    except (DataFormatError, DegenerateCellError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FairFldaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: simulate, analyze, velocity, classify, agree, report. Every
run writes a manifest echoing the fully resolved configuration next to
its data files; data files never embed timestamps, so re-running a
seeded command reproduces them byte for byte.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classify, kernels, lmm, metrics, simulate
from .data import AnalysisWindow, ingest
from .errors import ConfigError, DataError, GrowthFalterError, NumericalError
from .metrics import MetricConfig, VelocityEngine
from .splines import KnotVector

OUTDIR_ENV = "GROWTHFALTER_OUTDIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_knots(text: str) -> KnotVector:
    """Comma list of breakpoints; the last value is the right boundary."""
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad knot list {text!r}: {exc}") from None
    if len(values) < 2:
        raise ConfigError("need at least two knot values (internal + boundary)")
    return KnotVector(tuple(values[:-1]), values[-1])


def _load_config_file(path: str) -> dict:
    """Flat key = value file; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _outdir(args) -> Path:
    out = args.out or os.environ.get(OUTDIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _write_manifest(outdir: Path, command: str, config: dict, seed, started: float):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "wall_time_s": round(time.time() - started, 3),
    }
    _write(outdir / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _write_config_echo(outdir: Path, args, seed=None):
    """Echo the resolved flags as a key = value file usable via --config."""
    skip = {"func", "out", "config", "verbose"}
    values = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if seed is not None:
        values["seed"] = seed
    lines = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    _write(outdir / "run.cfg", "\n".join(lines) + "\n")


def _resolve_seed(args) -> int:
    """Explicit seed, or generate one and record it in the manifest."""
    if args.seed is not None:
        return args.seed
    seed = int.from_bytes(os.urandom(4), "big")
    print(f"generated seed {seed}")
    return seed


def _window(args) -> AnalysisWindow:
    return AnalysisWindow(args.window_start, args.window_end)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    cfg = simulate.ScenarioConfig(
        n_children=args.children,
        proportion_faltering=args.proportion,
        design=args.design,
        n_replications=args.reps,
        seed=seed,
        knots=_parse_knots(args.knots),
    )
    outdir = _outdir(args)

    def progress(done, total):
        if args.verbose:
            print(f"replication {done}/{total}", flush=True)

    if args.jobs > 1:
        from multiprocessing import Pool

        with Pool(args.jobs) as pool:
            results = pool.starmap(
                simulate.run_replication,
                [(cfg, rep) for rep in range(cfg.n_replications)],
            )
        report = simulate.aggregate(results, cfg)
    else:
        report, results = simulate.run_scenario(cfg, progress)

    _write(outdir / "true_positives.csv", simulate.true_positives_csv(report))
    _write(outdir / "agreement.csv", simulate.agreement_csv(report))
    _write(outdir / "replications.csv", simulate.replications_csv(results))
    _write_config_echo(outdir, args, seed)
    _write_manifest(outdir, "simulate", cfg.to_dict() | {"jobs": args.jobs}, seed, started)
    return 0


# ---------------------------------------------------------------------------
# analyze / velocity
# ---------------------------------------------------------------------------


def _ingest_from_args(args):
    dataset, report = ingest(
        args.data,
        age_unit=args.age_unit,
        window=_window(args),
        exclusion_bound=args.bound,
    )
    return dataset, report


def _engine_from_args(args, dataset) -> VelocityEngine:
    knots = _parse_knots(args.knots) if args.knots else None
    config = MetricConfig(knots=knots, reml=not args.ml, drop_baseline_rows=args.drop_baseline_rows)
    return VelocityEngine(dataset, config)


def _classify_table(table, args, seed):
    if args.classifier == "threshold":
        if args.proportion is None:
            raise ConfigError("--classifier threshold requires --proportion")
        return classify.threshold_classify(table, args.proportion), None
    mix = classify.fit_gmm2(table, seed=seed)
    return classify.mm_classify(mix, cutoff=args.cutoff), mix


def _write_mixture_outputs(outdir, metric, table, mix):
    _write(outdir / f"mixture_{metric}.json", mix.to_summary_json() + "\n")
    edges, counts, grid, c1, c2, total = classify.histogram_bins(table, mix)
    hist_lines = ["bin_left,bin_right,count"]
    for i, count in enumerate(counts):
        hist_lines.append(f"{edges[i]!r},{edges[i + 1]!r},{count}")
    _write(outdir / f"hist_{metric}.csv", "\n".join(hist_lines) + "\n")
    density_lines = ["velocity,component1,component2,total"]
    for i in range(grid.size):
        density_lines.append(f"{grid[i]!r},{c1[i]!r},{c2[i]!r},{total[i]!r}")
    _write(outdir / f"density_{metric}.csv", "\n".join(density_lines) + "\n")


def _write_trajectories(outdir, metric, dataset, engine, labelling, per_group):
    """Raw series plus fitted curves for a few children per label group."""
    chosen = []
    for label in (classify.FALTERING, classify.NON_FALTERING):
        ids = sorted(c for c, lab in labelling.labels.items() if lab == label)
        chosen.extend((cid, label) for cid in ids[:per_group])
    obs_lines = ["child_id,label,age,zscore"]
    for cid, label in chosen:
        for m in dataset.child(cid).measurements:
            obs_lines.append(f"{cid},{label},{m.age!r},{m.zscore!r}")
    _write(outdir / f"trajectories_obs_{metric}.csv", "\n".join(obs_lines) + "\n")

    fit = engine.fit_for_metric(metric)
    if fit is None:
        return
    grid = np.linspace(dataset.window.start, dataset.window.end, 101)
    if fit.spec.is_broken_stick:
        lo, hi = fit.spec.knots.lower, fit.spec.knots.upper
        grid = grid[(grid >= lo) & (grid <= hi)]
    fit_lines = ["child_id,label,age,predicted"]
    for cid, label in chosen:
        if cid not in fit.blups:
            continue
        base = fit.baselines.get(cid) if fit.spec.conditional else None
        pred = lmm.predict(fit, cid, grid, baseline_z=base)
        for age, value in zip(grid, pred):
            fit_lines.append(f"{cid},{label},{age!r},{value!r}")
    _write(outdir / f"trajectories_fit_{metric}.csv", "\n".join(fit_lines) + "\n")


def _cmd_analyze(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    outdir = _outdir(args)
    dataset, report = _ingest_from_args(args)
    _write(outdir / "ingest_report.json", report.to_json() + "\n")

    requested = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for metric in requested:
        if metric not in metrics.METRICS:
            raise ConfigError(f"unknown metric {metric!r}")

    engine = _engine_from_args(args, dataset)
    for i, metric in enumerate(requested):
        table = engine.table(metric)
        buf_path = outdir / f"velocity_{metric}.csv"
        with open(buf_path, "w", encoding="utf-8") as fh:
            metrics.write_table(table, fh)
        print(f"wrote {buf_path}")
        labelling, mix = _classify_table(
            table, args, seed=np.random.SeedSequence((seed, i))
        )
        classify.write_labels(labelling, outdir / f"labels_{metric}.csv", mix)
        print(f"wrote {outdir / f'labels_{metric}.csv'}")
        if mix is not None:
            _write_mixture_outputs(outdir, metric, table, mix)
        _write_trajectories(outdir, metric, dataset, engine, labelling, args.sample)
        fit = engine.fit_for_metric(metric)
        if fit is not None:
            _write(outdir / f"fit_{fit.spec.kind}.json", fit.to_summary_json() + "\n")

    config = {
        "data": str(args.data),
        "age_unit": args.age_unit,
        "window": [args.window_start, args.window_end],
        "bound": args.bound,
        "metrics": requested,
        "classifier": args.classifier,
        "proportion": args.proportion,
        "cutoff": args.cutoff,
        "knots": args.knots,
        "ml": args.ml,
        "drop_baseline_rows": args.drop_baseline_rows,
        "sample": args.sample,
    }
    _write_config_echo(outdir, args, seed)
    _write_manifest(outdir, "analyze", config, seed, started)
    return 0


def _cmd_velocity(args) -> int:
    started = time.time()
    outdir = _outdir(args)
    dataset, report = _ingest_from_args(args)
    _write(outdir / "ingest_report.json", report.to_json() + "\n")
    if args.metric not in metrics.METRICS:
        raise ConfigError(f"unknown metric {args.metric!r}")
    engine = _engine_from_args(args, dataset)
    table = engine.table(args.metric)
    path = outdir / f"velocity_{args.metric}.csv"
    with open(path, "w", encoding="utf-8") as fh:
        metrics.write_table(table, fh)
    print(f"wrote {path}")
    config = {
        "data": str(args.data),
        "age_unit": args.age_unit,
        "window": [args.window_start, args.window_end],
        "bound": args.bound,
        "metric": args.metric,
        "knots": args.knots,
        "ml": args.ml,
        "drop_baseline_rows": args.drop_baseline_rows,
    }
    _write_config_echo(outdir, args)
    _write_manifest(outdir, "velocity", config, None, started)
    return 0


# ---------------------------------------------------------------------------
# classify / agree / report
# ---------------------------------------------------------------------------


def _cmd_classify(args) -> int:
    started = time.time()
    outdir = _outdir(args)
    table = metrics.read_table(args.velocities)
    seed = None
    if args.method == "threshold":
        if args.proportion is None:
            raise ConfigError("--method threshold requires --proportion")
        labelling, mix = classify.threshold_classify(table, args.proportion), None
    else:
        seed = _resolve_seed(args)
        mix = classify.fit_gmm2(table, seed=seed)
        labelling = classify.mm_classify(mix, cutoff=args.cutoff)
    classify.write_labels(labelling, outdir / "labels.csv", mix)
    print(f"wrote {outdir / 'labels.csv'}")
    if mix is not None:
        _write_mixture_outputs(outdir, table.metric, table, mix)
    config = {
        "velocities": str(args.velocities),
        "method": args.method,
        "proportion": args.proportion,
        "cutoff": args.cutoff,
    }
    _write_config_echo(outdir, args, seed)
    _write_manifest(outdir, "classify", config, seed, started)
    return 0


def _cmd_agree(args) -> int:
    started = time.time()
    outdir = _outdir(args)
    a = classify.read_labels(args.labels_a)
    b = classify.read_labels(args.labels_b)
    stats = classify.agreement(a, b)
    payload = stats.to_dict()
    payload["n_only_a"] = len(set(a.labels) - set(b.labels))
    payload["n_only_b"] = len(set(b.labels) - set(a.labels))
    _write(outdir / "agreement.json", json.dumps(payload, indent=2) + "\n")
    config = {"labels_a": str(args.labels_a), "labels_b": str(args.labels_b)}
    _write_config_echo(outdir, args)
    _write_manifest(outdir, "agree", config, None, started)
    return 0


def _cmd_report(args) -> int:
    """Re-aggregate one or more simulate runs from their replication logs."""
    started = time.time()
    outdir = _outdir(args)
    combined_tp = []
    combined_agree = ["proportion,design,metric,pct_discordance,kappa,pct_significant"]
    for run_dir in args.runs:
        run = Path(run_dir)
        manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
        cfg = manifest["config"]
        rows = _read_replications(run / "replications.csv")
        tp_csv, agree_rows = _reaggregate(rows, cfg)
        combined_tp.append(
            f"# proportion={cfg['proportion_faltering']} design={cfg['design']}\n" + tp_csv
        )
        for metric, pd_, kappa, sig in agree_rows:
            combined_agree.append(
                f"{cfg['proportion_faltering']},{cfg['design']},{metric},"
                f"{pd_:.6f},{kappa:.6f},{sig:.6f}"
            )
    _write(outdir / "combined_true_positives.csv", "\n".join(combined_tp))
    _write(outdir / "combined_agreement.csv", "\n".join(combined_agree) + "\n")
    config = {"runs": [str(r) for r in args.runs]}
    _write_config_echo(outdir, args)
    _write_manifest(outdir, "report", config, None, started)
    return 0


def _read_replications(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def _reaggregate(rows: list[dict], cfg: dict):
    subgroup_sizes = dict(zip(simulate.SUBGROUPS, cfg["subgroup_counts"]))
    header = ["subgroup", "n"]
    for metric in simulate.SIM_METRICS:
        for cls in simulate.CLASSIFIERS:
            header.append(f"{metric}_{cls}")
    out_lines = [",".join(header)]
    names = list(simulate.SUBGROUPS) + ["total"]
    for name in names:
        size = subgroup_sizes[name] if name != "total" else sum(subgroup_sizes.values())
        cells = [name, str(size)]
        for metric in simulate.SIM_METRICS:
            for cls in simulate.CLASSIFIERS:
                key = "tp_total" if name == "total" else f"tp_{name}"
                vals = [
                    float(r[key])
                    for r in rows
                    if r["metric"] == metric and r["classifier"] == cls
                ]
                cells.append(f"{np.mean(vals):.6f}")
        out_lines.append(",".join(cells))

    agree_rows = []
    for metric in simulate.SIM_METRICS:
        mm = [r for r in rows if r["metric"] == metric and r["classifier"] == "MM"]
        pd_ = float(np.mean([float(r["pct_discordance"]) for r in mm]))
        kappas = [float(r["kappa"]) for r in mm if r["kappa"]]
        kappa = float(np.mean(kappas)) if kappas else float("nan")
        sig = 100.0 * float(
            np.mean([bool(r["kappa_p"]) and float(r["kappa_p"]) < 0.01 for r in mm])
        )
        agree_rows.append((metric, pd_, kappa, sig))
    return "\n".join(out_lines) + "\n", agree_rows


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_ingest_flags(p):
    p.add_argument("--data", required=True, help="delimited input file")
    p.add_argument("--age-unit", choices=("days", "years"), default="years")
    p.add_argument("--window-start", type=float, default=0.0)
    p.add_argument("--window-end", type=float, default=1.0)
    p.add_argument("--bound", type=float, default=6.0, help="|zscore| exclusion bound")


def _add_model_flags(p):
    p.add_argument("--knots", default=None, help="comma list; last value is the right boundary")
    p.add_argument("--ml", action="store_true", help="maximum likelihood instead of REML")
    p.add_argument(
        "--drop-baseline-rows",
        action="store_true",
        help="drop each child's baseline row from the response in conditional models",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="growthfalter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one synthetic benchmark scenario")
    p.add_argument("--proportion", type=float, default=0.10)
    p.add_argument("--design", choices=("dense", "sparse"), default="dense")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--children", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--knots", default="0,0.25,0.5,0.75,1")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="ingest data, fit models, classify")
    _add_ingest_flags(p)
    _add_model_flags(p)
    p.add_argument("--metrics", default="MRS,cMRS", help="comma list of velocity metrics")
    p.add_argument("--classifier", choices=("mm", "threshold"), default="mm")
    p.add_argument("--proportion", type=float, default=None)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sample", type=int, default=8, help="trajectory sample size per group")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("velocity", help="compute one velocity table")
    _add_ingest_flags(p)
    _add_model_flags(p)
    p.add_argument("--metric", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_velocity)

    p = sub.add_parser("classify", help="classify a velocity table file")
    p.add_argument("--velocities", required=True)
    p.add_argument("--method", choices=("mm", "threshold"), default="mm")
    p.add_argument("--proportion", type=float, default=None)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("agree", help="agreement stats between two label files")
    p.add_argument("labels_a")
    p.add_argument("labels_b")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_agree)

    p = sub.add_parser("report", help="re-aggregate simulate runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def _apply_config_file(parser, argv):
    """Two-stage parse: file values become defaults, flags override."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    values = _load_config_file(args.config)
    # re-parse with file values as defaults for this subcommand
    sub_argv = list(argv)
    subparser = None
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            subparser = action.choices[args.command]
    if subparser is None:
        return args
    converted = {}
    for action in subparser._actions:
        if action.dest in values:
            raw = values[action.dest]
            if action.type is not None:
                converted[action.dest] = action.type(raw)
            elif isinstance(action, (argparse._StoreTrueAction,)):
                converted[action.dest] = raw.lower() in ("1", "true", "yes")
            else:
                converted[action.dest] = raw
    subparser.set_defaults(**converted)
    return parser.parse_args(sub_argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except GrowthFalterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

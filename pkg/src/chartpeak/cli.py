"""``chartpeak`` command line: ingest, enrich, prepare, evaluate.

Exit codes: 0 ok, 1 usage, 2 ingest failure, 3 enrichment failure,
4 dataset/evaluation failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _jsonio
from .charts import RankClass, load_chart_dir, read_tracks_csv, reduce_to_tracks, write_tracks_csv
from .dataset import (
    correlation_matrix,
    filter_audio_only,
    fit_preprocess,
    join_on_uri,
    read_dataset_csv,
    stratified_holdout,
    write_dataset_csv,
    write_preprocess_json,
)
from .enrich import (
    ClientConfig,
    EnrichmentClient,
    FixtureTransport,
    UrllibTransport,
    read_features_csv,
    write_features_csv,
)
from .errors import ChartpeakError, EmptyPanelError, EnrichError, IngestError
from .evaluation import cross_validate, grid_search, holdout_evaluate
from .learners import LEARNERS, feature_importance, make_learner
from .plots import correlation_heatmap_svg, importance_bar_svg

log = logging.getLogger("chartpeak")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_ENRICH, EXIT_EVAL = 0, 1, 2, 3, 4
DEFAULT_SEED = 42
CLASS_NAMES = [c.name for c in RankClass]
DATASET_FILES = {"full": "dataset.full.csv", "audio_only": "dataset.audio.csv"}
TREE_MODELS = ("rf", "gbt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bold(text: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[1m{text}\033[0m"


def class_distribution(labels: Sequence[int]) -> str:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=len(RankClass))
    return ", ".join(f"{c.name}={counts[c]}" for c in RankClass)


# -- ingest ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    chart_dir = Path(args.chart_dir)
    if not chart_dir.is_dir():
        raise UsageError(f"{chart_dir} is not a directory")
    try:
        panel = load_chart_dir(chart_dir)
        tracks = reduce_to_tracks(panel)
    except EmptyPanelError:
        print(f"error: no chart files in {chart_dir}", file=sys.stderr)
        return EXIT_INGEST
    write_tracks_csv(tracks, args.out)
    print(f"{len(panel)} chart rows over {len(panel.dates)} dates -> {len(tracks)} tracks written to {args.out}")
    print(class_distribution([int(t.label) for t in tracks]))
    return EXIT_OK


# -- enrich ------------------------------------------------------------------

def cmd_enrich(args) -> int:
    tracks = read_tracks_csv(args.tracks)
    out = Path(args.out)
    done: set[str] = set()
    if out.exists() and out.stat().st_size > 0:
        done = {f.track_uri for f in read_features_csv(out)}
    todo = [t.track_uri for t in tracks if t.track_uri not in done]

    overrides = dict(
        batch_size=args.batch_size,
        min_request_interval=args.interval,
        max_retries=args.max_retries,
    )
    if args.token_endpoint:
        overrides["token_endpoint"] = args.token_endpoint
    if args.features_endpoint:
        overrides["features_endpoint"] = args.features_endpoint
    if args.mock:
        transport = FixtureTransport.from_file(args.mock)
        config = ClientConfig(client_id="mock", client_secret="mock", **overrides)
    else:
        transport = UrllibTransport()
        config = ClientConfig.from_env(**overrides)

    client = EnrichmentClient(transport, config)
    result = client.enrich_all(todo)
    write_features_csv(result.features, out, append=bool(done))
    misses_path = out.with_name(out.stem + ".misses.txt")
    misses_path.write_text("".join(f"{u}\n" for u in result.misses), encoding="utf-8")
    print(f"{len(done)} already present, {len(todo)} requested: "
          f"{len(result.features)} fetched, {len(result.misses)} missing (listed in {misses_path})")
    return EXIT_OK


# -- prepare -----------------------------------------------------------------

def cmd_prepare(args) -> int:
    tracks = read_tracks_csv(args.tracks)
    features = read_features_csv(args.features)
    full = join_on_uri(tracks, features, include_peak_rank=args.include_peak_rank)
    audio = filter_audio_only(full)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(full, out / DATASET_FILES["full"])
    write_dataset_csv(audio, out / DATASET_FILES["audio_only"])
    split = stratified_holdout(full, args.train_fraction, args.seed)
    states = {
        name: fit_preprocess(ds.X[split.train], ds.column_names)
        for name, ds in (("full", full), ("audio_only", audio))
    }
    write_preprocess_json(states, out / "preprocess.json", seed=args.seed,
                          train_fraction=args.train_fraction, n_train=len(split.train))
    missing = int(np.isnan(full.X).sum())
    print(f"{len(full)} rows, {len(full.column_names)} full / {len(audio.column_names)} audio columns, "
          f"{missing} missing cells; written to {out}")
    print(class_distribution(full.y))
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def _parse_value(text: str):
    if text in ("None", "none"):
        return None
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_param_overrides(items: Sequence[str], models: Sequence[str]) -> dict[str, dict]:
    """``model.key=value`` targets one model; bare ``key=value`` needs a single --model."""
    params: dict[str, dict] = {m: {} for m in models}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        model, dot, name = key.partition(".")
        if not dot:
            if len(models) != 1:
                raise UsageError(f"--param {item!r} must name its model (e.g. rf.{key}) with --model all")
            model, name = models[0], key
        if model not in LEARNERS:
            raise UsageError(f"--param {item!r}: unknown model {model!r}")
        if model in params:
            params[model][name] = _parse_value(value)
    return params


def load_grid(path, models: Sequence[str]) -> dict[str, dict]:
    with open(path, encoding="utf-8") as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict):
        raise UsageError(f"{path}: grid must be a JSON object")
    if grid and all(k in LEARNERS for k in grid):
        return {m: grid[m] for m in models if m in grid}
    if len(models) != 1:
        raise UsageError(f"{path}: with --model all the grid must be keyed by model name")
    return {models[0]: grid}


def evaluate_model(variant: str, data, params: dict, *, seed: int, train_fraction: float,
                   cv_k: int | None, grid: dict | None, feature_mode: str) -> tuple[dict, object]:
    """Run grid (training rows only), holdout and optional CV for one model; returns the report."""
    estimator = make_learner(variant, **params)
    report: dict = {"model": variant, "features": feature_mode}
    split = stratified_holdout(data, train_fraction, seed)
    if grid:
        train = data.subset(split.train)
        result = grid_search(estimator, grid, train, k=cv_k or 5, seed=seed)
        estimator.set_params(**result.best_config)
        report["grid"] = result.to_dict()
    holdout, model, _, _ = holdout_evaluate(estimator, data, train_fraction=train_fraction, seed=seed)
    report["params"] = estimator.get_params()
    report["n_rows"] = len(data)
    report["seed"] = seed
    report["holdout"] = holdout.to_dict(CLASS_NAMES)
    if cv_k:
        report["cv"] = cross_validate(estimator, data, k=cv_k, seed=seed).to_dict(CLASS_NAMES)
    if variant in TREE_MODELS:
        report["importances"] = [[name, value] for name, value in feature_importance(model)]
    return report, model


def format_table(reports: Sequence[dict]) -> str:
    header = ("model", "features", "accuracy", "macro_f1", "cv_macro_f1")
    rows = []
    for r in reports:
        cv = r.get("cv")
        rows.append((
            r["model"], r["features"],
            f"{r['holdout']['accuracy']:.4f}", f"{r['holdout']['macro_f1']:.4f}",
            f"{cv['mean']:.4f} ± {cv['std']:.4f}" if cv else "-",
        ))
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines[0] = _bold(lines[0])
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(line.rstrip() for line in lines)


def cmd_evaluate(args) -> int:
    data_dir = Path(args.data)
    path = data_dir / DATASET_FILES[args.features]
    if not path.exists():
        raise UsageError(f"{path} not found; run `chartpeak prepare` first")
    if args.cv is not None and args.cv < 2:
        raise UsageError("--cv needs at least 2 folds")
    models = list(LEARNERS) if args.model == "all" else [args.model]
    params = parse_param_overrides(args.param, models)
    grids = load_grid(args.grid, models) if args.grid else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = read_dataset_csv(path)
    reports = []
    importance_written = False
    for variant in models:
        report, _ = evaluate_model(
            variant, data, params[variant], seed=args.seed, train_fraction=args.train_fraction,
            cv_k=args.cv, grid=grids.get(variant), feature_mode=args.features,
        )
        if not args.no_timestamp:
            report["generated_at"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        reports.append(report)
        if "grid" in report:
            print(f"{variant}: best grid config {json.dumps(report['grid']['best_config'])} "
                  f"(mean macro-F1 {report['grid']['best_score']:.4f})")
        if "importances" in report and not args.no_plots:
            svg = importance_bar_svg(report["importances"],
                                     title=f"{variant} feature importance ({args.features})")
            (out / f"importances_{variant}.svg").write_text(svg, encoding="utf-8")
            if not importance_written:
                (out / "importances.svg").write_text(svg, encoding="utf-8")
                importance_written = True

    if not args.no_plots:
        filled = np.where(np.isnan(data.X), np.nanmean(data.X, axis=0), data.X)
        svg = correlation_heatmap_svg(data.column_names, correlation_matrix(filled))
        (out / "correlation.svg").write_text(svg, encoding="utf-8")
    _jsonio.dump(reports if args.model == "all" else reports[0], out / "report.json")
    print(format_table(reports))
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chartpeak", description="Chart peak-rank classification pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="reduce daily chart CSVs to tracks.csv")
    p.add_argument("chart_dir", help="directory of YYYY-MM-DD.csv chart files")
    p.add_argument("--out", default="tracks.csv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("enrich", help="fetch audio features for tracks.csv")
    p.add_argument("tracks", help="tracks.csv from `ingest`")
    p.add_argument("--out", default="features.csv")
    p.add_argument("--mock", metavar="FIXTURE.json",
                   help="answer from a {uri: features} fixture instead of the network")
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--interval", type=float, default=0.5, help="seconds between request starts")
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--token-endpoint")
    p.add_argument("--features-endpoint")
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("prepare", help="join tracks and features into model-ready datasets")
    p.add_argument("--tracks", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--include-peak-rank", action="store_true",
                   help="keep peak_rank as a feature (it determines the label)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("evaluate", help="holdout / CV / grid evaluation with report and plots")
    p.add_argument("--data", default=".", help="directory written by `prepare`")
    p.add_argument("--model", choices=list(LEARNERS) + ["all"], default="all")
    p.add_argument("--features", choices=list(DATASET_FILES), default="full")
    p.add_argument("--cv", type=int, metavar="K", help="also run K-fold stratified CV")
    p.add_argument("--grid", metavar="GRID.json", help="parameter grid tuned on the training split")
    p.add_argument("--param", action="append", metavar="[MODEL.]KEY=VALUE",
                   help="hyperparameter override, repeatable")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", default=".")
    p.add_argument("--no-timestamp", action="store_true", help="omit generated_at from the report")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_evaluate)
    return parser


_ERROR_EXITS = (
    (IngestError, EXIT_INGEST),
    (EnrichError, EXIT_ENRICH),
    (ChartpeakError, EXIT_EVAL),
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chartpeak: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ChartpeakError as exc:
        for cls, code in _ERROR_EXITS:
            if isinstance(exc, cls):
                status = getattr(exc, "status", None)
                suffix = f" (last status {status})" if status is not None else ""
                print(f"chartpeak {args.command}: {type(exc).__name__}: {exc}{suffix}", file=sys.stderr)
                return code
        raise
    except FileNotFoundError as exc:
        print(f"chartpeak: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

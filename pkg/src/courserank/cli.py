"""``courserank`` command line: synth, validate, rank, sensitivity, report.

Exit codes: 0 success, 1 stage failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datamodel import IngestError
from .mcdm import read_decision_matrix
from .pipeline import RunConfig, StageError, read_config_file, run_rank, validate, write_reports
from .sensitivity import run_sweep, write_report
from .synth import FILES, SynthConfig, generate

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("courserank")


class UsageError(Exception):
    pass


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input data")
    g.add_argument("--data-dir", help="directory holding ds1.csv..ds4.csv and courses.csv")
    for name in ("ds1", "ds2", "ds3", "ds4", "catalog"):
        g.add_argument(f"--{name}", help=f"path to {name} (overrides --data-dir)")
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--out", dest="out_dir", help="output directory")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--as-of", help="observation end date (default: latest contract date)")
    p.add_argument("--horizon", dest="horizon_days", type=int)
    p.add_argument("--age-window", dest="age_window_years", type=int)
    p.add_argument("--nn-cap", type=int)
    p.add_argument("--sample-size", type=int)
    p.add_argument("--k-override", type=int)
    p.add_argument("--gap-k-max", type=int)
    p.add_argument("--gap-n-refs", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--fallback-size", type=int)
    p.add_argument("--include-other-participants", action="store_const", const=True)
    p.add_argument("--min-participants", type=int)
    p.add_argument("--bounds", help="uniform weight bounds as l:u")
    p.add_argument("--k1", type=float)
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")


def _add_sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l-range", help="lower-bound sweep range as a:b")
    p.add_argument("--u-range", help="upper-bound sweep range as a:b")
    p.add_argument("--k1-range", help="k1 sweep range as a:b")
    p.add_argument("--grid-steps", type=int)
    p.add_argument("--bounds", help="baseline bounds as l:u")
    p.add_argument("--k1", type=float, help="baseline k1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="courserank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic population")
    p.add_argument("--citizens", dest="n_citizens", type=int)
    p.add_argument("--courses", dest="n_courses", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--effects", dest="effect_sizes", help="comma-separated effect size per course")
    p.add_argument("--families", help="comma-separated professional family codes")
    p.add_argument("--as-of")
    p.add_argument("--horizon", dest="horizon_days", type=int)
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--out", dest="out_dir", required=True)

    p = sub.add_parser("validate", help="ingest the datasets and report rejected rows")
    _add_data_args(p)
    p.add_argument("--as-of")

    p = sub.add_parser("rank", help="run the full pipeline and write the ranking and reports")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--export-curves", action="store_true", help="also write one CSV per working-life curve")

    p = sub.add_parser("sensitivity", help="sweep weight bounds and k1 over a stored decision matrix")
    p.add_argument("--run-dir", required=True, help="output directory of a previous rank run")
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--out", help="report path (default: <run-dir>/sensitivity.csv)")
    _add_sweep_args(p)

    p = sub.add_parser("report", help="rebuild report tables from a rank run")
    p.add_argument("--run-dir", required=True)
    return parser


def _settings(args: argparse.Namespace, skip: tuple[str, ...] = ()) -> dict:
    values: dict = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key, v in vars(args).items():
        if key in ("command", "verbose", "config", "export_curves", "run_dir", "out", *skip) or v is None:
            continue
        values[key] = v
    return values


def _run_config(args: argparse.Namespace) -> RunConfig:
    try:
        cfg = RunConfig.from_mapping(_settings(args))
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    missing = [k for k, v in cfg.paths().items() if not v and k != "catalog"]
    if missing:
        raise UsageError(f"missing input paths: {', '.join(missing)} (use --data-dir or --ds1..--ds4)")
    return cfg


def cmd_synth(args: argparse.Namespace) -> int:
    values = _settings(args, skip=("out_dir",))
    try:
        cfg = SynthConfig.from_mapping(values)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid synth configuration: {exc}") from exc
    manifest = generate(cfg, args.out_dir)
    for name in FILES:
        print(f"{name}  {manifest['files'][name]}")
    print(f"synth_manifest.json  citizens={manifest['citizens']} participants={manifest['participants']}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    try:
        ds, mismatches = validate(cfg)
    except (IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for name, n in sorted(ds.counts.items()):
        print(f"{name}: {n} rows")
    print(f"rejected rows: {len(ds.rejects)} (see {Path(cfg.out_dir) / 'rejects.csv'})")
    print(f"DS3 consistency mismatches: {len(mismatches)}")
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    try:
        result = run_rank(cfg)
    except StageError as exc:
        print(f"error: stage failed: {exc}; partial outputs in {cfg.out_dir} (manifest status=failed)",
              file=sys.stderr)
        return EXIT_STAGE
    if args.export_curves:
        _export_curves(cfg)
    print(f"{'pos':>3}  {'course':<10} {'r_min':>8} {'r_max':>8} {'uw':>8}  quartile")
    for e in result.ranking.entries:
        iv = e.interval
        print(f"{e.position:>3}  {e.label:<10} {iv.r_min:8.4f} {iv.r_max:8.4f} {iv.uw:8.4f}  Q{e.quartile}")
    print(f"outputs written to {cfg.out_dir}")
    return EXIT_OK


def _export_curves(cfg: RunConfig) -> None:
    from .datamodel import ingest_datasets, to_day
    from .pipeline import _latest_day
    from .wlc import build_population, export_curve

    ds = ingest_datasets(cfg.ds1, cfg.ds2, cfg.ds3, cfg.ds4, cfg.catalog or None)
    as_of = to_day(cfg.as_of) if cfg.as_of else _latest_day(ds)
    timelines, _ = build_population(ds, as_of)
    target = Path(cfg.out_dir) / "curves"
    target.mkdir(exist_ok=True)
    for cid, t in timelines.items():
        export_curve(t.curve, target / f"{cid}.csv")


def cmd_sensitivity(args: argparse.Namespace) -> int:
    run = Path(args.run_dir)
    matrix_path = run / "decision_matrix.csv"
    if not matrix_path.exists():
        print(f"error: {matrix_path} not found; run `courserank rank --out {run}` first", file=sys.stderr)
        return EXIT_STAGE
    values = _settings(args)
    manifest = run / "manifest.json"
    if manifest.exists():
        # baseline defaults to the bounds the ranking was produced with
        saved = json.loads(manifest.read_text())["config"]
        values = {"lower": saved["lower"], "upper": saved["upper"], "k1": saved["k1"], **values}
    try:
        sweep = RunConfig.from_mapping(values).sweep
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid sweep configuration: {exc}") from exc
    matrix = read_decision_matrix(matrix_path)
    report = run_sweep(matrix, sweep)
    out = Path(args.out) if args.out else run / "sensitivity.csv"
    write_report(report, out)
    for note in report.notes:
        print(f"note: {note}")
    print(f"{len(report.rows)} sweep rows written to {out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run = Path(args.run_dir)
    needed = ["ranking.csv", "course_performance.csv", "participant_scores.csv"]
    missing = [n for n in needed if not (run / n).exists()]
    if missing:
        print(f"error: {', '.join(missing)} missing in {run}; run `courserank rank` first", file=sys.stderr)
        return EXIT_STAGE
    for name in write_reports(run):
        print(run / name)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "validate": cmd_validate,
    "rank": cmd_rank,
    "sensitivity": cmd_sensitivity,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""refinery: command-line front end for the refinement toolkit.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 64 usage error.
Options resolve as flags > REFINERY_* environment > config file > defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import plots
from .dataset import load_dataset, validate, version_manifest, write_dataset
from .errors import ConfigError, DatasetIOError, RefineryError
from .geometry import grasp_success
from .ledger import Ledger, replay
from .simulate import generate_corpus, run_closed_loop
from .triage import (
    ingest_predictions,
    report_from_dict,
    report_to_dict,
    run_triage,
    stats_rows_to_json,
    stats_to_csv,
    triage_stats,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64

DEFAULTS = {
    "threshold": 0.2,
    "width_scale": 150.0,
    "iou_min": 0.25,
    "angle_max": 30.0,  # degrees
    "port": 8700,
    "lease_ttl": 600.0,
    "host": "127.0.0.1",
}

QUEUE_FILE = "queue.json"
LEDGER_FILE = "ledger.ndjson"
REPORTS_DIR = "reports"
VERSIONS_DIR = "versions"
STATS_DIR = "stats"


class _Parser(argparse.ArgumentParser):
    """argparse that exits 64 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetIOError(f"cannot read config file {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class RunConfig:
    """Layered option lookup shared by every subcommand."""

    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._file = _read_config_file(Path(args.config)) if getattr(args, "config", None) else {}

    def get(self, key: str, cast=float):
        flag = getattr(self._args, key, None)
        if flag is not None:
            return flag
        env = os.environ.get(f"REFINERY_{key.upper()}")
        source = None
        if env is not None:
            source = env
        elif key in self._file:
            source = self._file[key]
        if source is not None:
            try:
                return cast(source)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {source!r}") from None
        return DEFAULTS[key]

    def threshold(self) -> float:
        value = self.get("threshold")
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {value}")
        return value

    def iou_min(self) -> float:
        value = self.get("iou_min")
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"iou_min must be in [0, 1], got {value}")
        return value

    def angle_max_deg(self) -> float:
        value = self.get("angle_max")
        if value <= 0.0:
            raise ConfigError(f"angle_max must be positive degrees, got {value}")
        return value

    def port(self) -> int:
        value = self.get("port", int)
        if not 1 <= value <= 65535:
            raise ConfigError(f"port must be in [1, 65535], got {value}")
        return value


def _workdir(args) -> Path:
    return Path(args.workdir)


def _open_ledger(workdir: Path) -> Ledger:
    return Ledger(workdir / LEDGER_FILE)


def _load_version0(workdir: Path):
    v0_dir = workdir / VERSIONS_DIR / "v000"
    if not v0_dir.is_dir():
        raise ConfigError(f"no {v0_dir}; run 'refinery import' first")
    version, diagnostics = load_dataset(v0_dir)
    for diag in diagnostics:
        if diag.severity == "error":
            raise DatasetIOError(f"version 0 is damaged: {diag.message} ({diag.path})")
    return version

def _print_diagnostics(diagnostics) -> None:
    for diag in diagnostics:
        location = diag.path or diag.image_id or ""
        if diag.line is not None:
            location += f":{diag.line}"
        suffix = f" ({location})" if location else ""
        print(f"{diag.severity}: {diag.message}{suffix}", file=sys.stderr)


def cmd_import(args) -> int:
    workdir = _workdir(args)
    version, diagnostics = load_dataset(Path(args.dataset))
    diagnostics += validate(version)
    _print_diagnostics(diagnostics)
    out_dir = workdir / VERSIONS_DIR / "v000"
    digest = write_dataset(version, out_dir)
    print(f"images: {len(version.records)}")
    print(f"annotations: {version.annotation_count()}")
    print(f"diagnostics: {len(diagnostics)}")
    print(f"manifest: {out_dir / 'manifest.json'}")
    print(f"digest: {digest}")
    return EXIT_OK


def cmd_triage(args) -> int:
    cfg = RunConfig(args)
    workdir = _workdir(args)
    ledger = _open_ledger(workdir)
    done = ledger.iterations()
    iteration = args.iteration if args.iteration is not None else (max(done) + 1 if done else 1)
    if iteration in done:
        raise ConfigError(f"iteration {iteration} already started in the ledger")
    v0 = _load_version0(workdir)
    current = replay(v0, ledger.events, max(done, default=0))
    predictions_path = Path(args.predictions)
    try:
        lines = predictions_path.read_text().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read predictions {predictions_path}: {exc}") from exc
    result = ingest_predictions(lines, model_tag=args.model_tag or "", iteration=iteration)
    for reject in result.rejects:
        print(f"rejected line {reject.line}: {reject.reason}", file=sys.stderr)
    report, items = run_triage(current, result.predictions, cfg.threshold())
    ledger.begin_iteration(iteration)

    from .review_queue import ReviewQueue, queue_to_dict

    queue = ReviewQueue(items, iteration, lease_ttl=cfg.get("lease_ttl"))
    (workdir / QUEUE_FILE).write_text(json.dumps(queue_to_dict(queue), indent=1))
    reports_dir = workdir / REPORTS_DIR
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / f"triage_it{iteration:03d}.json").write_text(
        json.dumps(report_to_dict(report), indent=1)
    )
    print(f"iteration: {iteration}")
    print(f"evaluated: {report.evaluated}")
    print(f"flagged: {report.flagged}")
    print(f"unflagged: {report.unflagged}")
    print(f"queue: {workdir / QUEUE_FILE}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceState, run_server

    cfg = RunConfig(args)
    state = ServiceState.from_workdir(_workdir(args))
    static_dir = Path(args.ui) if args.ui else None
    run_server(state, host=str(cfg.get("host", str)), port=cfg.port(), static_dir=static_dir)
    return EXIT_OK


def _materialized_name(iteration: int) -> str:
    return f"v{iteration:03d}"


def cmd_apply(args) -> int:
    workdir = _workdir(args)
    ledger = _open_ledger(workdir)
    done = ledger.iterations()
    if not done:
        raise ConfigError("ledger holds no iterations to apply")
    iteration = args.iteration if args.iteration is not None else max(done)
    v0 = _load_version0(workdir)
    version = replay(v0, ledger.events, iteration)
    out_dir = workdir / VERSIONS_DIR / _materialized_name(iteration)
    digest = write_dataset(version, out_dir)
    original, pseudo = version.source_counts()
    print(f"version: {iteration}")
    print(f"images: {len(version.records)}")
    print(f"annotations_original: {original}")
    print(f"annotations_pseudo: {pseudo}")
    print(f"digest: {digest}")
    return EXIT_OK


def cmd_export(args) -> int:
    workdir = _workdir(args)
    ledger = _open_ledger(workdir)
    iteration = args.version if args.version is not None else max(ledger.iterations(), default=0)
    v0 = _load_version0(workdir)
    version = replay(v0, ledger.events, iteration)
    digest = write_dataset(version, Path(args.out))
    print(f"version: {iteration}")
    print(f"images: {len(version.records)}")
    print(f"annotations: {version.annotation_count()}")
    print(f"digest: {digest}")
    return EXIT_OK


def _collect_stats(workdir: Path):
    ledger = _open_ledger(workdir)
    reports = []
    reports_dir = workdir / REPORTS_DIR
    if reports_dir.is_dir():
        for path in sorted(reports_dir.glob("triage_it*.json")):
            reports.append(report_from_dict(json.loads(path.read_text())))
    if not reports:
        raise ConfigError(f"no triage reports under {reports_dir}")
    summaries = [ledger.iteration_summary(i) for i in ledger.iterations()]
    return triage_stats(reports, summaries)


def _write_stats(rows, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.csv").write_text(stats_to_csv(rows))
    (out_dir / "stats.json").write_text(json.dumps(stats_rows_to_json(rows), indent=1) + "\n")
    plots.save_stats_figures(rows, out_dir)


def cmd_stats(args) -> int:
    workdir = _workdir(args)
    rows = _collect_stats(workdir)
    out_dir = workdir / STATS_DIR
    _write_stats(rows, out_dir)
    sys.stdout.write(stats_to_csv(rows))
    print(f"written: {out_dir / 'stats.csv'}")
    print(f"written: {out_dir / 'stats.json'}")
    print(f"written: {out_dir / 'false_counts.png'}")
    print(f"written: {out_dir / 'fn_tn_proportion.png'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = RunConfig(args)
    if args.scenes < 0 or args.iterations < 1:
        raise ConfigError("simulate needs scenes >= 0 and iterations >= 1")
    workdir = Path(args.workdir) if args.workdir else None
    ledger_path = None
    if workdir is not None:
        workdir.mkdir(parents=True, exist_ok=True)
        ledger_path = workdir / LEDGER_FILE
        if ledger_path.exists():
            raise ConfigError(f"{ledger_path} already exists; refusing to mix runs")
    corpus = generate_corpus(args.scenes, args.drop, args.corrupt, args.seed)
    result = run_closed_loop(
        corpus,
        iterations=args.iterations,
        noise_level=args.noise,
        seed=args.seed if args.loop_seed is None else args.loop_seed,
        ledger_path=ledger_path,
        threshold=cfg.threshold(),
    )
    sys.stdout.write(stats_to_csv(result.stats_rows))
    recovery = result.recovery
    coverage = "" if recovery.coverage is None else f"{recovery.coverage:.6f}"
    print(f"corrupted_removed: {result.corrupted_removed}/{result.corrupted_total}")
    print(f"recovered_labels: {recovery.recovered}/{recovery.dropped_labels} {coverage}")
    print(f"final_digest: {result.final_digest}")
    if workdir is not None:
        from .simulate import build_base_version

        write_dataset(build_base_version(corpus), workdir / VERSIONS_DIR / "v000")
        final_dir = workdir / VERSIONS_DIR / _materialized_name(args.iterations)
        write_dataset(result.final_version, final_dir)
        reports_dir = workdir / REPORTS_DIR
        reports_dir.mkdir(parents=True, exist_ok=True)
        for report in result.reports:
            (reports_dir / f"triage_it{report.iteration:03d}.json").write_text(
                json.dumps(report_to_dict(report), indent=1)
            )
        _write_stats(result.stats_rows, workdir / STATS_DIR)
        run_report = {
            "seeds": {
                "corpus": args.seed,
                "loop": args.seed if args.loop_seed is None else args.loop_seed,
            },
            "config": {
                "scenes": args.scenes,
                "drop": args.drop,
                "corrupt": args.corrupt,
                "iterations": args.iterations,
                "noise": args.noise,
                "threshold": cfg.threshold(),
            },
            "iterations": stats_rows_to_json(result.stats_rows),
            "final": {
                "digest": result.final_digest,
                "images": len(result.final_version.records),
                "annotations": result.final_version.annotation_count(),
            },
            "recovery": {
                "dropped_labels": recovery.dropped_labels,
                "recovered": recovery.recovered,
                "coverage": recovery.coverage,
            },
            "corrupted": {"total": result.corrupted_total, "removed": result.corrupted_removed},
        }
        (workdir / "run_report.json").write_text(json.dumps(run_report, indent=1) + "\n")
        print(f"workdir: {workdir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import math

    cfg = RunConfig(args)
    workdir = _workdir(args)
    ledger = _open_ledger(workdir)
    iteration = args.version if args.version is not None else max(ledger.iterations(), default=0)
    v0 = _load_version0(workdir)
    version = replay(v0, ledger.events, iteration)
    try:
        lines = Path(args.predictions).read_text().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read predictions {args.predictions}: {exc}") from exc
    result = ingest_predictions(lines)
    covered = sorted(set(result.predictions.entries) & set(version.records))
    if not covered:
        raise ConfigError("predictions cover no image of the selected version")
    angle_max = math.radians(cfg.angle_max_deg())
    iou_min = cfg.iou_min()
    successes = 0
    for image_id in covered:
        top = result.predictions.entries[image_id][0]
        gts = [a.pose for a in version.records[image_id].annotations]
        if gts and grasp_success(top.pose, gts, iou_min, angle_max):
            successes += 1
    print(f"version: {iteration}")
    print(f"evaluated: {len(covered)}")
    print(f"successes: {successes}")
    print(f"accuracy: {successes / len(covered):.6f}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="refinery", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--workdir", default=".", help="working directory for state files")
        p.add_argument("--config", default=None, help="key=value config file")

    p = sub.add_parser("import", help="load a dataset directory as version 0")
    common(p)
    p.add_argument("--dataset", required=True, help="directory of scene pairs")
    p.set_defaults(handler=cmd_import)

    p = sub.add_parser("triage", help="score predictions and build the review queue")
    common(p)
    p.add_argument("--predictions", required=True, help="newline-delimited JSON predictions")
    p.add_argument("--threshold", type=float, default=None, help="flagging IOU threshold")
    p.add_argument("--iteration", type=int, default=None)
    p.add_argument("--model-tag", default=None)
    p.add_argument("--lease-ttl", dest="lease_ttl", type=float, default=None)
    p.set_defaults(handler=cmd_triage)

    p = sub.add_parser("serve", help="run the review HTTP service")
    common(p)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--ui", default=None, help="static directory to serve at /")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("apply", help="replay the ledger into a new sealed version")
    common(p)
    p.add_argument("--iteration", type=int, default=None)
    p.set_defaults(handler=cmd_apply)

    p = sub.add_parser("export", help="write a version's scene files elsewhere")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--version", type=int, default=None)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("stats", help="emit the per-iteration series as CSV, JSON, figures")
    common(p)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("simulate", help="run the synthetic closed loop")
    p.add_argument("--workdir", default=None, help="optional directory to persist the run")
    p.add_argument("--config", default=None)
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--drop", type=float, default=0.0, help="fraction of scenes losing a site")
    p.add_argument("--corrupt", type=float, default=0.0, help="fraction with bogus labels")
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--seed", type=int, required=True, help="corpus seed (no clock fallback)")
    p.add_argument("--loop-seed", dest="loop_seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("evaluate", help="rectangle-metric accuracy of predictions")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--version", type=int, default=None)
    p.add_argument("--iou-min", dest="iou_min", type=float, default=None)
    p.add_argument("--angle-max", dest="angle_max", type=float, default=None, help="degrees")
    p.set_defaults(handler=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except DatasetIOError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RefineryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``gdtspn-knn {stats,discover,predict,evaluate,generate}``."""
from __future__ import annotations

import argparse
import gzip
import json
import logging
import re
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

from . import __version__, kernels
from .eventlog import (EventLog, LogError, descriptive_stats, format_iso, parse_iso, prefix_at,
                       read_log, split_out_of_time, write_csv, write_xes)
from .evaluate import (DEFAULT_METHODS, ExperimentConfig, default_jobs, knn_average_k,
                       run_experiment, validate_method, write_plot_data, write_report)
from .gdtspn import PredictionFailure, SimulationConfig, to_annotated_pnml
from .knn import TrainingSet
from .petri import ReplayError, to_dot, to_pnml
from .predict import (AVERAGE, GDTSPN_FULL, GDTSPN_KNN, ModelCache, build_model,
                      benchmark_average, benchmark_knn_average, predict_gdtspn,
                      predict_gdtspn_knn, prediction_rng)
from .synthetic import deterministic_log, two_variant_log
from .discovery import inductive_miner, tree_to_petri

log = logging.getLogger("gdtspn_knn")

BUNDLED = {"two_variant": "two_variant.csv.gz"}
_OFFSET = re.compile(r"^\+(\d+(?:\.\d+)?)([smhd]?)$")
_UNIT_MS = {"": 1000, "s": 1000, "m": 60_000, "h": 3_600_000, "d": 86_400_000}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def resolve_path(name: str) -> str:
    if name.startswith("bundled:"):
        key = name.split(":", 1)[1]
        if key not in BUNDLED:
            raise UsageError(f"unknown bundled log {key!r} (available: {', '.join(BUNDLED)})")
        return str(resources.files("gdtspn_knn") / "data" / BUNDLED[key])
    if not Path(name).is_file():
        raise UsageError(f"file not found: {name}")
    return name


def load_log(name: str, args) -> EventLog:
    mapping = {"case": args.case_column, "activity": args.activity_column,
               "timestamp": args.timestamp_column}
    return read_log(resolve_path(name), mapping, args.timestamp_format)


def parse_t0(text: str, trace) -> float:
    """ISO-8601 instant or ``+<number>[s|m|h|d]`` offset from the case start; returns ms."""
    m = _OFFSET.match(text.strip())
    if m:
        return trace.start + float(m.group(1)) * _UNIT_MS[m.group(2)]
    try:
        return float(parse_iso(text))
    except (LogError, ValueError) as exc:
        raise UsageError(f"invalid --t0 {text!r}: expected ISO-8601 or +offset") from exc


def write_output(data: bytes, path: str | None):
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    if path.endswith(".gz"):
        data = gzip.compress(data, mtime=0)
    Path(path).write_bytes(data)


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"invalid boolean {text!r}")


def _methods(text: str) -> tuple[str, ...]:
    try:
        return tuple(validate_method(m.strip()) for m in text.split(",") if m.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _method(text: str) -> str:
    return _methods(text)[0]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    lg = load_log(args.log, args)
    st = descriptive_stats(lg)
    if args.json:
        print(json.dumps(asdict(st), indent=1))
    else:
        rows = [("cases", st.cases), ("events", st.events), ("event classes", st.event_classes),
                ("max case length", st.max_case_length),
                ("avg case length", f"{st.avg_case_length:.2f}"),
                ("max case time (days)", f"{st.max_case_time:.2f}"),
                ("avg case time (days)", f"{st.avg_case_time:.2f}")]
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            print(f"{k:<{width}}  {v}")
    return 0


def cmd_discover(args) -> int:
    lg = load_log(args.log, args)
    fmt = args.format
    if fmt is None:
        name = (args.out or "").removesuffix(".gz")
        fmt = "dot" if name.endswith(".dot") else "pnml"
    if fmt == "gdtspn":
        data = to_annotated_pnml(build_model(lg.traces))
    else:
        net = tree_to_petri(inductive_miner(lg))
        data = to_pnml(net) if fmt == "pnml" else to_dot(net).encode("utf-8")
    write_output(data, args.out)
    log.info("discovered model from %d traces", len(lg))
    return 0


def cmd_predict(args) -> int:
    lg = load_log(args.log, args)
    try:
        trace = lg.case(args.case)
    except KeyError:
        raise UsageError(f"case {args.case!r} not found in {args.log}") from None
    train_log = load_log(args.train, args) if args.train else lg.without(args.case)
    ts = TrainingSet(train_log)
    t0 = parse_t0(args.t0, trace)
    if t0 < trace.start:
        raise UsageError("--t0 precedes the start of the case")
    prefix = prefix_at(trace, t0)
    rng = prediction_rng(args.seed, args.case, 0, args.method)
    cfg = SimulationConfig(args.n, seed=args.seed)
    elapsed = (t0 - trace.start) / 1000.0
    k = args.k if args.method == GDTSPN_KNN else knn_average_k(args.method)
    if k is not None and k > len(ts):
        raise UsageError(f"k={k} exceeds the {len(ts)} training traces")
    if args.method == GDTSPN_KNN:
        pred = predict_gdtspn_knn(ts, prefix, t0, args.k, cfg, rng, ModelCache())
    elif args.method == GDTSPN_FULL:
        pred = predict_gdtspn(ts, prefix, t0, cfg, ModelCache(), rng)
    elif args.method == AVERAGE:
        pred = benchmark_average(ts, elapsed, not args.no_subtract_elapsed)
    else:
        pred = benchmark_knn_average(ts, prefix, t0, k, rng, not args.no_subtract_elapsed)
    out = {
        "case": args.case,
        "method": pred.method,
        "t0": format_iso(round(t0)),
        "elapsed_s": elapsed,
        "observed_events": len(prefix),
        "remaining_s": pred.remaining,
        "predicted_end": format_iso(round(t0 + pred.remaining * 1000)),
        "diagnostics": pred.diagnostics,
    }
    print(json.dumps(out, indent=1))
    return 0


def cmd_evaluate(args) -> int:
    if args.log and (args.train or args.test):
        raise UsageError("use either --log or --train/--test")
    if args.log:
        full = load_log(args.log, args)
        train, test = split_out_of_time(full, args.split_test_count)
    elif args.train and args.test:
        train, test = load_log(args.train, args), load_log(args.test, args)
    else:
        raise UsageError("evaluate needs --log or both --train and --test")
    cfg = ExperimentConfig(N=args.N, k=args.k, n_runs=args.n, seed=args.seed,
                           methods=args.methods,
                           subtract_elapsed=not args.no_subtract_elapsed)
    fmt = args.format or ("json" if args.out.removesuffix(".gz").endswith(".json") else "csv")
    log.info("train %d traces, test %d traces, backend %s", len(train), len(test),
             kernels.backend())

    def progress(done, total):
        log.info("evaluated %d/%d test traces", done, total)

    metrics = run_experiment(train, test, cfg, jobs=args.jobs or default_jobs(),
                             progress=progress)
    write_output(write_report(metrics, fmt), args.out)
    if args.plot_data:
        write_plot_data(metrics, args.plot_data)
    log.info("report written to %s", args.out)
    return 0


def cmd_generate(args) -> int:
    if args.kind == "two_variant":
        lg = two_variant_log(args.traces, seed=args.seed)
    else:
        lg = deterministic_log(args.traces)
    name = args.out.removesuffix(".gz")
    data = write_xes(lg) if name.endswith(".xes") else write_csv(lg)
    write_output(data, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = _Parser(add_help=False)
    g = common.add_argument_group("csv columns")
    g.add_argument("--case-column", default="case")
    g.add_argument("--activity-column", default="activity")
    g.add_argument("--timestamp-column", default="timestamp")
    g.add_argument("--timestamp-format", default=None,
                   help="strptime format; ISO-8601 when omitted")

    hyper = _Parser(add_help=False)
    hyper.add_argument("--k", type=_positive, default=100, help="neighbours (default 100)")
    hyper.add_argument("--n", type=_positive, default=500, help="simulation runs (default 500)")
    hyper.add_argument("--seed", type=int, default=0)
    hyper.add_argument("--no-subtract-elapsed", action="store_true",
                       help="benchmarks predict the full mean duration")

    p = _Parser(prog="gdtspn-knn", description="Remaining-time prediction with "
                "kNN-preselected stochastic Petri nets.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("stats", parents=[common], help="descriptive log statistics")
    s.add_argument("--log", required=True)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("discover", parents=[common], help="mine a Petri net")
    s.add_argument("--log", required=True)
    s.add_argument("--out", help="output file (stdout when omitted)")
    s.add_argument("--format", choices=("pnml", "dot", "gdtspn"))
    s.set_defaults(func=cmd_discover)

    s = sub.add_parser("predict", parents=[common, hyper], help="predict one running case")
    s.add_argument("--log", required=True, help="log containing the case")
    s.add_argument("--train", help="training log (default: --log without the case)")
    s.add_argument("--case", required=True)
    s.add_argument("--t0", required=True, help="ISO-8601 instant or +offset such as +2h")
    s.add_argument("--method", type=_method, default=GDTSPN_KNN)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common, hyper], help="periodic-prediction experiment")
    s.add_argument("--log")
    s.add_argument("--train")
    s.add_argument("--test")
    s.add_argument("--split-test-count", type=_positive, default=500)
    s.add_argument("--N", type=_positive, default=20)
    s.add_argument("--methods", type=_methods, default=DEFAULT_METHODS)
    s.add_argument("--out", default="report.csv")
    s.add_argument("--format", choices=("csv", "json"))
    s.add_argument("--plot-data", metavar="DIR")
    s.add_argument("--jobs", type=_positive, default=None,
                   help="worker processes (default: available cores)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("generate", help="write a synthetic log")
    s.add_argument("kind", choices=("two_variant", "deterministic"))
    s.add_argument("--traces", type=_positive, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help=".csv, .xes, optionally .gz")
    s.set_defaults(func=cmd_generate)
    return p, sub.choices


def _apply_config(path: str, command: str, subparsers: dict):
    sp = subparsers[command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in read_config(path).items():
        action = actions.get(key)
        if action is None or key in ("help", "func"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(value)
        else:
            defaults[key] = value  # argparse applies ``type`` to string defaults
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            if not Path(args.config).is_file():
                raise UsageError(f"file not found: {args.config}")
            _apply_config(args.config, args.command, subparsers)
            args = parser.parse_args(argv)
        level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
        logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LogError, ReplayError, PredictionFailure, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

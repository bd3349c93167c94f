"""Command-line entry point: ``xlsenti {ingest,preprocess,train,evaluate,report,fixture}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
divergence, 4 strict reconciliation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .errors import (
    AssetError,
    ConfigurationError,
    CorpusFormatError,
    DivergenceError,
    DomainError,
    ReconciliationError,
    RowError,
    StateError,
    StratificationError,
)
from .evaluate import render_report, write_report
from .pipeline import (
    BASELINE_ROW,
    TEST_SET_ORDER,
    collect_reports,
    evaluate_run,
    reconciliation_table,
    report_rows,
    run_ingest,
    run_preprocess,
    run_training,
    stats_table,
)
from .trainer import Scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_RECONCILE = 0, 1, 2, 3, 4

log = logging.getLogger("xlsenti")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xlsenti", description="Cross-lingual multi-task sentiment toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load corpora and print per-pool label statistics")
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("preprocess", help="drop empty texts, deduplicate, split, write the split manifest")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, help="override split.seed")
    p.add_argument("--strict", action="store_true", help="fail (exit 4) when counts differ from the expected block")

    p = sub.add_parser("train", help="train one scenario")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--scenario", help=f"one of {', '.join(s.value for s in Scenario)} (default: config value)")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--run-dir", type=Path)
    p.add_argument("--encoder", choices=["pretrained_adapter", "toy_deterministic"])

    p = sub.add_parser("evaluate", help="score a trained run on test sets, with the majority baseline")
    p.add_argument("--run-dir", required=True, type=Path)
    p.add_argument("--test-sets", nargs="+", help="e.g. sl_document hr_document (default: all)")

    p = sub.add_parser("report", help="merge evaluated runs into one results table")
    p.add_argument("--run-dir", required=True, type=Path, nargs="+")
    p.add_argument("--out", type=Path, default=Path("report"))

    p = sub.add_parser("fixture", help="write the synthetic fixture corpus and its config")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--per-file", type=int, default=75)
    p.add_argument("--seed", type=int, default=7)
    return parser


def _print_stats(stats):
    print(stats_table(stats), end="")


def cmd_ingest(args) -> int:
    _print_stats(run_ingest(load_config(args.config)))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.split = replace(cfg.split, seed=args.seed)
    try:
        result = run_preprocess(cfg, strict=args.strict)
    except ReconciliationError as exc:
        print(f"reconciliation failed: {exc}", file=sys.stderr)
        return EXIT_RECONCILE
    _print_stats(result.stats)
    if result.deltas is not None:
        print()
        print(reconciliation_table(result.stats, cfg.expected, result.deltas), end="")
    print(f"split manifest: {result.manifest_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    name = args.scenario or (cfg.scenario.value if cfg.scenario else None)
    if name is None:
        raise UsageError(f"no scenario given; choose one of {', '.join(s.value for s in Scenario)}")
    try:
        scenario = Scenario.parse(name)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    run_dir, history = run_training(cfg, scenario, seed=args.seed, run_dir=args.run_dir, encoder_kind=args.encoder)
    print(f"{scenario.value}: {len(history.steps)} steps, selected {history.selected}")
    print(f"run directory: {run_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    reports = evaluate_run(args.run_dir, args.test_sets)
    rows = [BASELINE_ROW] + sorted({s for s, _ in reports} - {BASELINE_ROW})
    sets = sorted({t for _, t in reports}, key=lambda t: (TEST_SET_ORDER.index(t) if t in TEST_SET_ORDER else 99, t))
    print(render_report(reports, test_sets=sets, row_order=rows), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = collect_reports(args.run_dir)
    sets = [t for t in TEST_SET_ORDER if any(ts == t for _, ts in reports)]
    table, structured = write_report(reports, args.out, stem="results", test_sets=sets, row_order=[r for r in report_rows() if any(s == r for s, _ in reports)])
    print(table.read_text(encoding="utf-8"), end="")
    print(f"written: {table}, {structured}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    from .fixtures import write_fixture_corpus

    write_fixture_corpus(args.out_dir, per_file=args.per_file, seed=args.seed)
    print(f"fixture corpus written to {args.out_dir}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "fixture": cmd_fixture,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError, StateError, AssetError) as exc:
        # AssetError: the pretrained encoder (or its cache, see $XLSENTI_ASSET_CACHE) is misconfigured.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, RowError, StratificationError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands:

* ``contamkit index`` — build and save an n-gram index from a corpus.
* ``contamkit decontam`` — scan a test set against a corpus or prebuilt
  index, write the kept examples and a report. Exits 0 when everything is
  clean and 3 when any contamination was found, so CI can gate on it.
* ``contamkit inject plan|apply|verify`` — plan contamination injection,
  apply a plan to a batch stream, re-check a plan's invariants.
* ``contamkit bleu`` — score a hypothesis file against a reference file.
* ``contamkit report`` — impact analytics from evaluation-record files.
"""

import argparse
import json
import sys

from . import analytics, decontam, injector, matcher, metrics
from .corpus_io import (
    CORPUS_FORMATS,
    FORMAT_JSONL,
    read_corpus,
    read_stream,
    read_testset,
    write_stream,
    write_testset,
)
from .ngram_index import NGramIndex, ScanConfig, build_index


def _load_index(args) -> NGramIndex:
    if getattr(args, "index", None):
        index = NGramIndex.load(args.index)
        if index.ngram_order != args.ngram:
            raise SystemExit(
                f"index was built with n={index.ngram_order}, requested n={args.ngram}"
            )
        return index
    if getattr(args, "corpus", None):
        config = ScanConfig(ngram_order=args.ngram)
        return build_index(read_corpus(args.corpus, args.corpus_format), config)
    raise SystemExit("one of --index or --corpus is required")


def _cmd_index(args) -> int:
    config = ScanConfig(ngram_order=args.ngram)
    index = build_index(read_corpus(args.corpus, args.corpus_format), config)
    index.save(args.out)
    print(f"indexed {index.doc_count} docs, {index.posting_count} postings -> {args.out}")
    return 0


def _cmd_decontam(args) -> int:
    config = ScanConfig(ngram_order=args.ngram, threshold=args.threshold)
    index = _load_index(args)
    testset = read_testset(args.testset)
    kept, report = decontam.decontaminate(testset, index, config)
    if args.out:
        write_testset(kept, args.out)
    if args.scores_out:
        matcher.write_scores(decontam.iter_scores(testset, index, config), index, args.scores_out)
    rendered = decontam.render_report(report, args.report_format)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as f:
            f.write(rendered)
    else:
        print(rendered, end="")
    return decontam.EXIT_CLEAN if report.removed == 0 else decontam.EXIT_CONTAMINATED


def _cmd_inject_plan(args) -> int:
    examples = read_testset(args.testset)
    condition = injector.ContaminationCondition(
        mode=injector.ContaminationMode(args.mode),
        temporal=injector.Temporal(args.temporal),
        copies=args.copies,
    )
    config = injector.TrainingConfig(
        total_steps=args.steps,
        batch_size=args.batch_size,
        max_replace_frac=args.cap,
        window_frac=args.window_frac,
        seed=args.seed,
        strict_cap=args.strict_cap,
    )
    schedule = injector.plan_schedule(examples, condition, config)
    injector.write_schedule(schedule, args.out)
    print(
        f"planned {len(schedule.entries)} entries in window "
        f"[{schedule.window_start}, {schedule.window_end}) -> {args.out}"
    )
    return 0


def _cmd_inject_apply(args) -> int:
    schedule = injector.read_schedule(args.schedule)
    stream = read_stream(args.stream)
    out = injector.apply_schedule(stream, schedule, require_parallel_slots=args.require_parallel)
    write_stream(out, args.out)
    print(f"applied {len(schedule.entries)} entries -> {args.out}")
    return 0


def _cmd_inject_verify(args) -> int:
    schedule = injector.read_schedule(args.schedule)
    report = injector.verify_schedule(schedule)
    print(report.summary(), end="")
    return 0 if report.ok else 1


def _read_segments(path, as_tokens: bool) -> list[list]:
    segments = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if as_tokens:
                segments.append(json.loads(line))
            else:
                segments.append(metrics.whitespace_tokens(line))
    return segments


def _cmd_bleu(args) -> int:
    hyps = _read_segments(args.hyp, args.tokens)
    refs = _read_segments(args.ref, args.tokens)
    score = metrics.corpus_bleu(hyps, refs, max_order=args.max_order, smoothing=args.smoothing)
    print(f"BLEU = {score:.4f} (order={args.max_order}, smoothing={args.smoothing})")
    return 0


def _read_records(path) -> list[metrics.EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            r = json.loads(line)
            records.append(
                metrics.EvalRecord(
                    system_id=r["system_id"],
                    lang_pair=r["lang_pair"],
                    testset_id=r.get("testset_id", "default"),
                    bleu=r["bleu"],
                    segment_count=r.get("segment_count", 1),
                )
            )
    return records


def _parse_condition(text: str | None) -> injector.ContaminationCondition | None:
    if not text:
        return None
    try:
        temporal, mode, copies = text.split(",")
        return injector.ContaminationCondition(
            mode=injector.ContaminationMode(mode.strip()),
            temporal=injector.Temporal(temporal.strip()),
            copies=int(copies),
        )
    except ValueError as e:
        raise SystemExit(f"cannot parse condition {text!r} (expected 'temporal,mode,copies'): {e}")


def _cmd_report(args) -> int:
    condition = _parse_condition(args.condition)
    table = analytics.impact_table(
        _read_records(args.baseline), _read_records(args.contaminated), condition
    )
    print(analytics.render_impact(table.cells, args.format), end="")
    if table.missing_baseline or table.missing_contaminated:
        print(
            f"warning: unmatched keys (baseline-only: {len(table.missing_contaminated)}, "
            f"contaminated-only: {len(table.missing_baseline)})",
            file=sys.stderr,
        )
    if args.clean_set:
        clean_base, clean_cont = args.clean_set
        clean = analytics.impact_table(
            _read_records(clean_base), _read_records(clean_cont), condition
        )
        gaps = analytics.testset_gap(table.cells, clean.cells)
        print()
        print(analytics.render_gaps(gaps, args.format), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contamkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save an n-gram index")
    p.add_argument("--corpus", required=True, help="corpus file, shard directory, or shard list")
    p.add_argument("--corpus-format", default=FORMAT_JSONL, choices=CORPUS_FORMATS)
    p.add_argument("--ngram", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("decontam", help="scan a test set and drop contaminated examples")
    p.add_argument("--testset", required=True)
    p.add_argument("--index", help="prebuilt index file")
    p.add_argument("--corpus", help="corpus to index on the fly")
    p.add_argument("--corpus-format", default=FORMAT_JSONL, choices=CORPUS_FORMATS)
    p.add_argument("--ngram", type=int, default=8)
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--out", help="file for the kept examples")
    p.add_argument("--scores-out", help="file for the per-example score dump")
    p.add_argument("--report-out", help="file for the report (stdout otherwise)")
    p.add_argument("--report-format", default="text", choices=("text", "json"))
    p.set_defaults(func=_cmd_decontam)

    inject = sub.add_parser("inject", help="plan, apply, or verify contamination injection")
    inject_sub = inject.add_subparsers(dest="inject_command", required=True)

    p = inject_sub.add_parser("plan", help="expand a condition into a schedule")
    p.add_argument("--testset", required=True)
    p.add_argument("--mode", required=True, choices=[m.value for m in injector.ContaminationMode])
    p.add_argument("--temporal", required=True, choices=[t.value for t in injector.Temporal])
    p.add_argument("--copies", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-frac", type=float, default=0.02)
    p.add_argument("--cap", type=float, default=0.05, help="max replaced fraction of a batch")
    p.add_argument("--strict-cap", action="store_true", help="keep the replaced fraction strictly below --cap")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inject_plan)

    p = inject_sub.add_parser("apply", help="substitute scheduled slots in a batch stream")
    p.add_argument("--stream", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--require-parallel", action="store_true",
                   help="error unless every replaced slot held a parallel-category document")
    p.set_defaults(func=_cmd_inject_apply)

    p = inject_sub.add_parser("verify", help="re-check a schedule's invariants")
    p.add_argument("--schedule", required=True)
    p.set_defaults(func=_cmd_inject_verify)

    p = sub.add_parser("bleu", help="corpus BLEU of a hypothesis file vs a reference file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--smoothing", default="none", choices=metrics.SMOOTHING_MODES)
    p.add_argument("--max-order", type=int, default=4)
    p.add_argument("--tokens", action="store_true",
                   help="lines are JSON token arrays instead of whitespace-split text")
    p.set_defaults(func=_cmd_bleu)

    p = sub.add_parser("report", help="impact analytics from evaluation-record files")
    p.add_argument("--baseline", required=True)
    p.add_argument("--contaminated", required=True)
    p.add_argument("--clean-set", nargs=2, metavar=("CLEAN_BASELINE", "CLEAN_CONTAMINATED"),
                   help="same-condition records on a clean test set, for gap analysis")
    p.add_argument("--condition", help="'temporal,mode,copies' label for the cells")
    p.add_argument("--format", default="text", choices=("text", "json"))
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "inject" and not getattr(args, "inject_command", None):
        build_parser().parse_args(["inject", "--help"])
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, injector.CapacityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

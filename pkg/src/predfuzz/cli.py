"""Command-line surface.

Subcommands: analyze (ranked static predicate records), fuzz (one
campaign), replay (corpus replay), refine (iterative refinement loop),
report (compare arms from summary files), compare-modes (guided vs random
convenience wrapper).  Machine-readable outputs go to files; stdout keeps
a short human summary.  Exit 0 on success, 1 on runtime failure, 2 on bad
flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .cfg import build_supergraph, rank_predicates, serialize_static_records
from .engine import run_campaign, replay_corpus, save_campaign
from .errors import PredfuzzError
from .generation import builtin_config, load_config_file
from .refine import RefineState, coverage_series, run_loop
from .stats import compare_arms
from .targets import all_target_ids, get_target

ENDPOINT_ENV = "PREDFUZZ_REFINER_ENDPOINT"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--profile", help="built-in profile name (naive, structured)")
    group.add_argument("--config", help="generator config JSON file")


def _add_budget_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget-execs", type=int, help="stop after N executions")
    group.add_argument(
        "--budget-secs", type=float, help="stop after S seconds of wall clock"
    )


def _resolve_config(args) -> object:
    if args.config:
        return load_config_file(args.config)
    return builtin_config(args.target, args.profile)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predfuzz",
        description="coverage-guided fuzzing with predicate feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    targets = sorted(all_target_ids())

    p = sub.add_parser("analyze", help="emit ranked static predicate records")
    p.add_argument("--target", required=True, choices=targets)
    p.add_argument("--out", help="records file (default: stdout)")

    p = sub.add_parser("fuzz", help="run one fuzzing campaign")
    p.add_argument("--target", required=True, choices=targets)
    _add_config_flags(p)
    p.add_argument("--mode", required=True, choices=("guided", "random"))
    _add_budget_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="campaign output directory")

    p = sub.add_parser("replay", help="replay a saved corpus")
    p.add_argument("--target", required=True, choices=targets)
    p.add_argument("--corpus", required=True, help="campaign or corpus directory")
    p.add_argument("--config", help="generator config JSON file")
    p.add_argument(
        "--show", type=int, default=0, help="print the first N decoded payloads"
    )

    p = sub.add_parser("refine", help="run the refinement loop")
    p.add_argument("--target", required=True, choices=targets)
    _add_config_flags(p)
    p.add_argument(
        "--feedback", choices=("base", "static", "llm"), default="static"
    )
    p.add_argument("--iterations", type=int, default=5)
    _add_budget_flags(p)
    p.add_argument("--refiner", choices=("scripted", "external"), default="scripted")
    p.add_argument(
        "--endpoint",
        help=f"external refiner address (default: ${ENDPOINT_ENV})",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--out", help="checkpoint output directory")

    p = sub.add_parser("report", help="compare arms from campaign summary files")
    p.add_argument("--baseline", required=True, help="baseline arm name")
    p.add_argument(
        "--arm",
        action="append",
        default=[],
        metavar="NAME=SUMMARY",
        help="arm repetition as name=path/to/summary.json (repeatable)",
    )
    p.add_argument(
        "--alternative",
        choices=("two-sided", "greater", "less"),
        default="two-sided",
    )
    p.add_argument("--out", help="report JSON file")

    p = sub.add_parser(
        "compare-modes", help="guided vs random over repeated campaigns"
    )
    p.add_argument("--target", required=True, choices=targets)
    _add_config_flags(p)
    p.add_argument("--reps", type=int, default=5)
    _add_budget_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--alternative",
        choices=("two-sided", "greater", "less"),
        default="two-sided",
    )
    p.add_argument("--out", help="output directory for runs and report")
    return parser


def _cmd_analyze(args) -> int:
    binding = get_target(args.target)
    desc = binding.cfg_description()
    graph = build_supergraph(desc.procedures, desc.calls, desc.exclusions, desc.entry)
    for call in graph.dangling_calls:
        print(f"warning: dangling call {call}", file=sys.stderr)
    records = rank_predicates(graph)
    text = serialize_static_records(records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(
            f"{args.target}: {len(records)} predicate records -> {args.out}"
        )
    else:
        sys.stdout.write(text)
    return 0


def _cmd_fuzz(args) -> int:
    config = _resolve_config(args)
    result = run_campaign(
        args.target,
        config,
        args.mode,
        budget_execs=args.budget_execs,
        budget_secs=args.budget_secs,
        rng_seed=args.seed,
    )
    if args.out:
        save_campaign(result, args.out)
    print(
        f"{args.target} {args.mode}: {result.executions} executions, "
        f"{len(result.coverage)} branches, {len(result.corpus)} corpus entries, "
        f"{result.inputs_per_sec:.0f} inputs/sec"
        + (f" -> {args.out}" if args.out else "")
    )
    return 0


def _cmd_replay(args) -> int:
    config = load_config_file(args.config) if args.config else None
    result = replay_corpus(args.target, args.corpus, config)
    print(
        f"{args.target}: replayed {result.replayed} entries, "
        f"{len(result.coverage)} branches"
        + (f", corrupt: {result.corrupt}" if result.corrupt else "")
    )
    if args.show:
        shown = 0
        base = Path(args.corpus)
        corpus_dir = base / "corpus" if (base / "corpus").is_dir() else base
        from .engine import load_corpus
        from .generation import load_config, validate_config
        from .stream import ParamStream

        cfg = config
        if cfg is None:
            cfg = load_config(
                (base / "config.json").read_text(encoding="utf-8")
            )
        cfg = validate_config(cfg.copy())
        binding = get_target(args.target)
        for index, entry in load_corpus(corpus_dir):
            if entry is None or shown >= args.show:
                continue
            stream = ParamStream(entry.stream_bytes, overflow_seed=entry.overflow_seed)
            payload = binding.decode(cfg, stream)
            print(f"--- entry {index} ({len(payload)} bytes)")
            print(payload.decode("latin-1"))
            shown += 1
    return 0


def _cmd_refine(args) -> int:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if args.refiner == "external" and not endpoint:
        print(
            f"error: external refiner needs --endpoint or ${ENDPOINT_ENV}",
            file=sys.stderr,
        )
        return 2
    if args.feedback == "llm" and not endpoint:
        print(
            f"error: llm feedback needs --endpoint or ${ENDPOINT_ENV}",
            file=sys.stderr,
        )
        return 2
    state = RefineState(
        args.target, _resolve_config(args), feedback_mode=args.feedback
    )
    state = run_loop(
        state,
        iterations=args.iterations,
        budget_execs=args.budget_execs,
        budget_secs=args.budget_secs,
        refiner=args.refiner,
        endpoint=endpoint,
        outdir=args.out,
        rng_seed=args.seed,
        threshold=args.threshold,
        timeout=args.timeout,
    )
    for iteration, ratio in coverage_series(state):
        print(f"iteration {iteration}: coverage ratio {ratio:.3f}")
    if state.fixpoint_iteration is not None:
        print(f"fixpoint after iteration {state.fixpoint_iteration}")
    for err in state.refiner_errors:
        print(f"warning: {err}", file=sys.stderr)
    return 0


def _read_summary(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_report(args) -> int:
    arms: dict[str, list[float]] = {}
    benchmark = ""
    for arm_item in args.arm:
        name, sep, path = arm_item.partition("=")
        if not sep or not name or not path:
            print(f"error: bad --arm value {arm_item!r}", file=sys.stderr)
            return 2
        summary = _read_summary(path)
        benchmark = benchmark or summary.get("target", "")
        arms.setdefault(name, []).append(float(summary["final_coverage"]["size"]))
    if not arms:
        print("error: at least one --arm is required", file=sys.stderr)
        return 2
    report = compare_arms(
        arms, args.baseline, benchmark=benchmark, alternative=args.alternative
    )
    sys.stdout.write(report.render())
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_obj(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


def _cmd_compare_modes(args) -> int:
    config = _resolve_config(args)
    results = {"guided": [], "random": []}
    out = Path(args.out) if args.out else None
    for rep in range(args.reps):
        for mode in ("guided", "random"):
            result = run_campaign(
                args.target,
                config,
                mode,
                budget_execs=args.budget_execs,
                budget_secs=args.budget_secs,
                rng_seed=args.seed + rep,
            )
            results[mode].append(result)
            print(
                f"rep {rep} {mode}: {len(result.coverage)} branches "
                f"({result.executions} executions)"
            )
            if out is not None:
                save_campaign(result, out / f"{mode}_{rep:02d}")
    report = compare_arms(
        results,
        baseline="random",
        benchmark=args.target,
        alternative=args.alternative,
    )
    sys.stdout.write(report.render())
    if out is not None:
        (out / "report.json").write_text(
            json.dumps(report.to_obj(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "fuzz": _cmd_fuzz,
    "replay": _cmd_replay,
    "refine": _cmd_refine,
    "report": _cmd_report,
    "compare-modes": _cmd_compare_modes,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PredfuzzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

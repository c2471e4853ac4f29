#!/usr/bin/env python3
"""Run guided and random campaigns side by side and test the coverage gap.

Repeats each mode with distinct seeds under the same generator config and
budget, then runs a rank-sum comparison of final branch coverage with the
random arm as baseline. Campaign directories and the comparison report land
under --outdir. With a naive bzh config the guided arm should win clearly;
with a structured config the two arms should be statistically even.
"""

import argparse
import json
import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(SRC))

from predfuzz.engine import run_campaign, save_campaign  # noqa: E402
from predfuzz.generation import builtin_config, load_config_file  # noqa: E402
from predfuzz.stats import compare_arms  # noqa: E402
from predfuzz.targets import all_target_ids  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--target", required=True, choices=sorted(all_target_ids()))
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--profile", default="naive")
    group.add_argument("--config", help="generator config JSON instead of a profile")
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--budget-secs", type=float, default=None)
    parser.add_argument("--budget-execs", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--outdir", default=None, help="save campaigns and report here")
    args = parser.parse_args()

    if args.config:
        config = load_config_file(args.config)
    else:
        config = builtin_config(args.target, args.profile)
    budget = {}
    if args.budget_secs is not None:
        budget["budget_secs"] = args.budget_secs
    else:
        budget["budget_execs"] = args.budget_execs

    outdir = pathlib.Path(args.outdir) if args.outdir else None
    results = {"guided": [], "random": []}
    for mode in ("guided", "random"):
        for rep in range(args.reps):
            # seed arms disjointly so neither mode replays the other's streams
            seed = args.seed + rep + (1000 if mode == "guided" else 2000)
            result = run_campaign(args.target, config, mode, rng_seed=seed, **budget)
            results[mode].append(result)
            print(
                f"{mode} rep {rep}: {len(result.coverage)} branches, "
                f"{result.executions} execs, corpus {len(result.corpus)}"
            )
            if outdir is not None:
                save_campaign(result, outdir / f"{mode}_{rep:02d}")

    report = compare_arms(results, baseline="random", benchmark=args.target)
    print(report.render())
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(
            json.dumps(report.to_obj(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"saved report to {outdir / 'report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Drive the config refinement loop on one target and print the ratio series.

Each iteration fuzzes under the current generator config, then asks a
refiner (the built-in scripted rule or an external HTTP endpoint) to adjust
the config based on zero-hit and starved branches. Coverage per iteration
is reported relative to iteration 1, so anything above 1.0 means the
feedback actually unlocked branches. Checkpoints, a ratio series, and the
static records used for feedback are written under --outdir.
"""

import argparse
import os
import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(SRC))

from predfuzz.generation import builtin_config, load_config_file  # noqa: E402
from predfuzz.refine import RefineState, coverage_series, run_loop  # noqa: E402
from predfuzz.targets import all_target_ids  # noqa: E402

ENDPOINT_ENV = "PREDFUZZ_REFINER_ENDPOINT"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--target", required=True, choices=sorted(all_target_ids()))
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--profile", default="naive")
    group.add_argument("--config", help="start from this config JSON instead")
    parser.add_argument("--iterations", type=int, default=8)
    parser.add_argument("--budget-execs", type=int, default=3000)
    parser.add_argument(
        "--feedback-mode", default="static", choices=("base", "static", "llm")
    )
    parser.add_argument(
        "--refiner", default="scripted", choices=("scripted", "external")
    )
    parser.add_argument(
        "--endpoint",
        default=None,
        help=f"refiner URL for --refiner external (default: ${ENDPOINT_ENV})",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--outdir", default=None)
    args = parser.parse_args()

    if args.config:
        config = load_config_file(args.config)
    else:
        config = builtin_config(args.target, args.profile)
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if args.refiner == "external" and not endpoint:
        print(f"--refiner external needs --endpoint or ${ENDPOINT_ENV}", file=sys.stderr)
        return 2

    state = RefineState(args.target, config, feedback_mode=args.feedback_mode)
    state = run_loop(
        state,
        iterations=args.iterations,
        budget_execs=args.budget_execs,
        refiner=args.refiner,
        endpoint=endpoint,
        outdir=args.outdir,
        rng_seed=args.seed,
    )
    for iteration, ratio in coverage_series(state):
        print(f"iteration {iteration}: coverage ratio {ratio:.3f}")
    if state.fixpoint_iteration is not None:
        print(f"fixpoint at iteration {state.fixpoint_iteration}")
    for err in state.refiner_errors:
        print(f"refiner error: {err}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Run the tuning experiments and print a summary table.

Each row reports, for one task on its biased input distribution: the
average step count of the compiled generic program, the best tuned
program, and (where one exists) the hand-written distribution-specific
program, plus the fraction of random seeds that reached a strictly faster
correct program.

Examples:
    python scripts/run_experiments.py --task access --seeds 20
    python scripts/run_experiments.py --task all --seeds 100 --out results/
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from softmachine.discrete import run_discrete
from softmachine.tasks import EXPERIMENT_NAMES, get_task, sample_many
from softmachine.trainer import config_for_task, train


def ideal_steps(name: str, test_size: int) -> float:
    spec = get_task(name)
    ideal = spec.ideal_ir()
    if ideal is None:
        return float("nan")
    cfg = spec.config()
    instances = sample_many(spec, True, test_size, seed=0x7E57)
    return float(
        np.mean([run_discrete(ideal, i.input_tape, cfg, record_trace=False).steps
                 for i in instances])
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", default="all",
                        choices=(*EXPERIMENT_NAMES, "all"))
    parser.add_argument("--seeds", type=int, default=100)
    parser.add_argument("--iters", type=int, default=None,
                        help="override the per-task iteration budget")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    names = list(EXPERIMENT_NAMES) if args.task == "all" else [args.task]
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for name in names:
        overrides = {"seeds": tuple(range(args.seeds))}
        if args.iters:
            overrides["iterations"] = args.iters
        tcfg = config_for_task(name, **overrides)
        t0 = time.time()
        report = train(name, tcfg, jobs=args.jobs, progress=not args.quiet)
        elapsed = time.time() - t0
        summary = report.summary()
        summary["steps_ideal"] = ideal_steps(name, tcfg.test_size)
        summary["elapsed_s"] = round(elapsed, 1)
        rows.append(summary)
        report.write_csv(os.path.join(args.out, f"{name}_seeds.csv"))
        with open(os.path.join(args.out, f"{name}_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
        print(f"[{name}] done in {elapsed:.0f}s")

    print()
    print(f"{'task':<10} {'generic':>8} {'learned':>8} {'ideal':>6} {'success':>8}")
    for s in rows:
        learned = s["steps_learned_best"]
        print(
            f"{s['task']:<10} {s['steps_generic']:>8.2f} "
            f"{learned:>8.2f} {s['steps_ideal']:>6.2f} "
            f"{100 * s['success_rate']:>7.0f}%"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Small grid sweep over learning rate and efficiency weight.

Runs a reduced number of seeds per grid point, prints the success rate of
each, and reports the winning combination.  The per-task defaults in
``softmachine.trainer.TASK_TRAIN_DEFAULTS`` were picked with this script.

Example:
    python scripts/sweep_hyperparams.py --task access --seeds 10
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from softmachine.tasks import EXPERIMENT_NAMES
from softmachine.trainer import SWEEP_DELTAS, SWEEP_LRS, config_for_task, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", required=True, choices=EXPERIMENT_NAMES)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--lrs", type=float, nargs="*", default=list(SWEEP_LRS))
    parser.add_argument("--deltas", type=float, nargs="*", default=list(SWEEP_DELTAS))
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)

    best = None
    for lr, delta in itertools.product(args.lrs, args.deltas):
        tcfg = config_for_task(
            args.task, seeds=tuple(range(args.seeds)), lr=lr, delta=delta
        )
        t0 = time.time()
        report = train(args.task, tcfg, jobs=args.jobs)
        rate = report.success_rate
        print(
            f"lr={lr:<6g} delta={delta:<6g} success={100 * rate:3.0f}% "
            f"({time.time() - t0:.0f}s)"
        )
        if best is None or rate > best[0]:
            best = (rate, lr, delta)
    print(f"\nbest: lr={best[1]} delta={best[2]} ({100 * best[0]:.0f}% success)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

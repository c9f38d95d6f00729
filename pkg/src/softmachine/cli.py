"""Command-line interface.

Subcommands: ``compile`` a source file to a params file, ``run`` a program
or params file on a tape (exactly or softly), ``train`` an experiment from
a JSON config, and ``decompile`` a params file back to a listing.  Exit
codes: 0 success, 1 task-level failure (e.g. no successful seed), 2 usage
or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from softmachine import trainer
from softmachine.decompile import classify_interpretability, decompile, render
from softmachine.compiler import (
    KAPPA_SHARP,
    compile_program,
    load_params,
    save_params,
)
from softmachine.discrete import format_trace, run_discrete
from softmachine.isa import MachineConfig
from softmachine.lang import LowerError, ParseError, parse_and_lower
from softmachine.loss import LossWeights
from softmachine.soft import run_soft
from softmachine.tasks import EXPERIMENT_NAMES, get_task
from softmachine.trainer import TrainingConfig, train


class UsageError(ValueError):
    pass


def _read_source(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _parse_tape(text: str, m: int) -> list[int]:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        tape = [int(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"tape must be a list of integers: {exc}") from exc
    if len(tape) > m:
        raise UsageError(f"tape has {len(tape)} cells, machine only has {m}")
    for v in tape:
        if not 0 <= v < m:
            raise UsageError(f"tape value {v} out of range for M={m}")
    return tape + [0] * (m - len(tape))


def _infer_m(flag: int | None, tape: list[int], n_lines: int) -> int:
    if flag is not None:
        return flag
    return max(len(tape), n_lines, max(tape, default=0) + 1)


def cmd_compile(args: argparse.Namespace) -> int:
    source = _read_source(args.source)
    cfg = MachineConfig(mem_size=args.M, reg_count=args.R)
    ir = parse_and_lower(source, cfg)
    params = compile_program(ir, cfg, kappa=args.kappa, pad=args.pad)
    save_params(params, args.out)
    print(f"compiled {len(ir.lines)} lines, {ir.n_registers} registers -> {args.out}")
    return 0


def _is_params_file(path: str) -> bool:
    try:
        with open(path) as fh:
            return fh.readline().startswith("softmachine-params")
    except OSError:
        return False


def cmd_run(args: argparse.Namespace) -> int:
    raw_tape = [p for p in args.tape.replace(",", " ").split() if p]
    if _is_params_file(args.program):
        params = load_params(args.program)
        m = params.mem_size
        tape = _parse_tape(args.tape, m)
        cfg = MachineConfig(m, params.reg_count, args.tmax, args.eta)
        prog = None
    else:
        source = _read_source(args.program)
        tape_guess = [int(p) for p in raw_tape if p.lstrip("-").isdigit()]
        probe = parse_and_lower(source, MachineConfig(max(len(tape_guess), 64) + 64, 64))
        m = _infer_m(args.M, tape_guess, len(probe.lines))
        cfg = MachineConfig(m, args.R or probe.n_registers, args.tmax, args.eta)
        prog = parse_and_lower(source, cfg)
        tape = _parse_tape(args.tape, m)
        params = compile_program(prog, cfg, kappa=args.kappa) if args.soft else None

    if args.soft:
        rollout = run_soft(params, tape, cfg, keep_states=args.trace,
                           keep_controller=args.trace)
        final = rollout.final_state.memory.argmax(axis=-1)
        print("tape:", ",".join(str(v) for v in final))
        print(f"steps: {rollout.steps}  p_stop: {rollout.halt_history[-1]:.4f}")
        if args.trace:
            print(_soft_trace(rollout))
    else:
        if prog is None:
            raise UsageError("exact execution needs a source program, not a params file")
        run = run_discrete(prog, tape, cfg)
        print("tape:", ",".join(str(v) for v in run.final_tape))
        print(f"steps: {run.steps}  halted: {run.halted}")
        if args.trace:
            print(format_trace(run, prog))
    return 0


def _soft_trace(rollout) -> str:
    from softmachine.isa import Opcode

    def top3(dist: np.ndarray, names=None) -> str:
        idx = np.argsort(dist)[::-1][:3]
        label = (lambda i: names[i]) if names else str
        return " ".join(f"{label(i)}:{dist[i]:.2f}" for i in idx)

    ops = [op.name for op in Opcode]
    lines = []
    ctrl = rollout.controller_history or [None] * rollout.steps
    for t, (state, c) in enumerate(zip(rollout.state_history or [], ctrl), start=1):
        line = f"t={t:3d} p_stop={state.p_stop:.3f} ir[{top3(state.ir)}]"
        if c is not None:
            line += (
                f" e[{top3(c.e, ops)}] a[{top3(c.a)}]"
                f" b[{top3(c.b)}] o[{top3(c.o)}]"
            )
        lines.append(line)
    return "\n".join(lines)


_CONFIG_KEYS = {
    "task", "bias", "M", "R", "T_max", "eta_stop", "alpha", "beta", "gamma",
    "delta", "lr", "batch", "iters", "seeds", "kappa_soft", "sigma",
    "test_size", "eval_every", "pad", "jobs",
}


def _training_config(conf: dict) -> TrainingConfig:
    weights = LossWeights(
        alpha=conf.get("alpha", 1.0),
        beta=conf.get("beta", 1.0),
        gamma=conf.get("gamma", 1.0),
        delta=conf.get("delta", 0.02),
    )
    seeds = conf.get("seeds", 100)
    seeds = tuple(seeds) if isinstance(seeds, list) else tuple(range(int(seeds)))
    base = trainer.config_for_task(conf["task"])
    kwargs = dict(
        weights=weights,
        seeds=seeds,
    )
    for key, attr in [
        ("lr", "lr"), ("batch", "batch_size"), ("iters", "iterations"),
        ("kappa_soft", "kappa_soft"), ("sigma", "sigma"), ("eta_stop", "eta_stop"),
        ("T_max", "t_max"), ("test_size", "test_size"), ("eval_every", "eval_every"),
        ("pad", "pad"),
    ]:
        if key in conf:
            kwargs[attr] = conf[key]
    from dataclasses import replace

    return replace(base, **kwargs)


def cmd_train(args: argparse.Namespace) -> int:
    try:
        with open(args.config) as fh:
            conf = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    unknown = set(conf) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if "task" not in conf:
        raise UsageError("config is missing required key 'task'")
    if conf["task"] not in EXPERIMENT_NAMES:
        raise UsageError(
            f"task {conf['task']!r} has no experiment; choose from {EXPERIMENT_NAMES}"
        )
    if args.seeds is not None:
        conf["seeds"] = args.seeds

    tcfg = _training_config(conf)
    report = train(
        conf["task"], tcfg, biased=conf.get("bias", True),
        jobs=args.jobs or int(conf.get("jobs", 1)), progress=not args.quiet,
        mem_size=conf.get("M"), reg_count=conf.get("R"),
    )

    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, f"{conf['task']}_seeds.csv")
    report.write_csv(csv_path)
    summary = report.summary()
    with open(os.path.join(args.out_dir, f"{conf['task']}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(
        f"{summary['task']}: success {summary['successes']}/{summary['seeds']}"
        f" ({100 * summary['success_rate']:.0f}%), generic {summary['steps_generic']:.2f}"
        f" steps, best learned {summary['steps_learned_best']:.2f}"
    )
    best = report.best
    if best is not None:
        best_path = os.path.join(args.out_dir, f"{conf['task']}_best_params.txt")
        save_params(best.params, best_path)
        print(f"best params (seed {best.seed}) -> {best_path}")
    return 0 if summary["successes"] > 0 else 1


def cmd_decompile(args: argparse.Namespace) -> int:
    params = load_params(args.params)
    listing = decompile(params, prob_floor=args.floor)
    print(render(listing), end="")
    if args.classify_task:
        spec = get_task(args.classify_task)
        cfg = MachineConfig(params.mem_size, params.reg_count, spec.max_steps)
        tapes = [
            spec.sampler(np.random.default_rng([0xC1A5, i]), params.mem_size, True).input_tape
            for i in range(5)
        ]
        cls, evidence = classify_interpretability(params, cfg, tapes)
        print(f"\ninterpretability class: {cls}")
        for line in evidence[:10]:
            print(f"  {line}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softmachine",
        description="Compile, run, tune and inspect register-machine programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a .anc source file to a params file")
    p.add_argument("source", help="source program (.anc)")
    p.add_argument("--M", type=int, required=True, help="memory size / value modulus")
    p.add_argument("--R", type=int, required=True, help="register count")
    p.add_argument("--kappa", type=float, default=KAPPA_SHARP, help="logit scale")
    p.add_argument("--pad", choices=("stop", "uniform"), default="stop")
    p.add_argument("--out", default="params.txt", help="output params file")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a program or params file on a tape")
    p.add_argument("program", help=".anc source or params file")
    p.add_argument("--tape", required=True, help="comma/space separated cell values")
    p.add_argument("--soft", action="store_true", help="use the distributional machine")
    p.add_argument("--trace", action="store_true", help="print a per-step trace")
    p.add_argument("--eta", type=float, default=0.9, help="stop-probability threshold")
    p.add_argument("--tmax", type=int, default=400, help="step cap")
    p.add_argument("--M", type=int, default=None, help="memory size (inferred if omitted)")
    p.add_argument("--R", type=int, default=None, help="register count (inferred if omitted)")
    p.add_argument("--kappa", type=float, default=KAPPA_SHARP)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="run a tuning experiment from a JSON config")
    p.add_argument("config", help="JSON config file")
    p.add_argument("--out-dir", default="results", help="where to write CSV/summary")
    p.add_argument("--seeds", type=int, default=None, help="override seed count")
    p.add_argument("--jobs", type=int, default=None, help="parallel seed workers")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decompile", help="print the listing encoded in a params file")
    p.add_argument("params", help="params file")
    p.add_argument("--floor", type=float, default=0.5, help="probability floor")
    p.add_argument(
        "--classify-task",
        default=None,
        help="also classify interpretability on this task's biased inputs",
    )
    p.set_defaults(func=cmd_decompile)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (UsageError, ParseError, LowerError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

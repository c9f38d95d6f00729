"""Exact integer interpreter for lowered programs.

This is the reference semantics: clarity over speed.  The soft machine in
:mod:`softmachine.soft` must agree with it step for step in the sharp limit.
"""

from __future__ import annotations

from dataclasses import dataclass

from softmachine.isa import Command, DiscreteState, MachineConfig, Opcode, apply_opcode
from softmachine.lang import IrProgram


@dataclass(frozen=True)
class DiscreteRun:
    final_tape: tuple[int, ...]
    steps: int
    halted: bool
    trace: tuple[DiscreteState, ...]


def run_discrete(
    prog: IrProgram,
    input_tape: list[int] | tuple[int, ...],
    cfg: MachineConfig,
    record_trace: bool = True,
    start_ir: int = 0,
) -> DiscreteRun:
    """Execute ``prog`` on ``input_tape`` until STOP or ``cfg.max_steps``.

    The instruction register selects the command; a taken JEZ replaces it
    with the jump target (no extra increment), anything else increments it
    mod M.  An instruction register beyond the last program line executes
    an implicit STOP, matching the compiler's padding.  The step count
    includes the step that executes STOP.
    """
    m = cfg.mem_size
    if len(input_tape) != m:
        raise ValueError(f"tape has {len(input_tape)} cells, machine has {m}")
    for v in input_tape:
        if not 0 <= v < m:
            raise ValueError(f"tape value {v} out of range for M={m}")
    prog_cfg_check(prog, cfg)

    if not 0 <= start_ir < m:
        raise ValueError(f"start_ir {start_ir} out of range for M={m}")
    pad = Command(Opcode.STOP, prog.scratch, prog.scratch, prog.scratch)
    mem = list(input_tape)
    regs = list(prog.initial_registers) + [0] * (cfg.reg_count - prog.n_registers)
    ir = start_ir
    steps = 0
    stopped = False
    trace: list[DiscreteState] = []

    def snapshot() -> None:
        if record_trace:
            trace.append(DiscreteState(tuple(mem), tuple(regs), ir, stopped, steps))

    snapshot()
    while not stopped and steps < cfg.max_steps:
        cmd = prog.lines[ir] if ir < len(prog.lines) else pad
        a, b = regs[cmd.arg1], regs[cmd.arg2]
        value, effect = apply_opcode(cmd.instr, a, b, mem[a], cfg)
        steps += 1
        regs[cmd.out] = value
        if effect.write_addr is not None:
            mem[effect.write_addr] = effect.write_value
        if effect.stop:
            stopped = True
        ir = effect.jump_to if effect.jump_to is not None else (ir + 1) % m
        snapshot()

    return DiscreteRun(tuple(mem), steps, stopped, tuple(trace))


def prog_cfg_check(prog: IrProgram, cfg: MachineConfig) -> None:
    if len(prog.lines) > cfg.mem_size:
        raise ValueError(
            f"program has {len(prog.lines)} lines, memory only addresses {cfg.mem_size}"
        )
    if prog.n_registers > cfg.reg_count:
        raise ValueError(
            f"program uses {prog.n_registers} registers, machine has {cfg.reg_count}"
        )
    for cmd in prog.lines:
        cmd.validate(cfg)


def format_trace(run: DiscreteRun, prog: IrProgram) -> str:
    """Render a run as one line per step: ``t | IR | cmd | regs | mem-diff``."""
    out = []
    for prev, cur in zip(run.trace, run.trace[1:]):
        ir = prev.ir
        cmd = prog.lines[ir] if ir < len(prog.lines) else None
        cmd_s = (
            f"R{cmd.out + 1} = {cmd.instr.name}(R{cmd.arg1 + 1}, R{cmd.arg2 + 1})"
            if cmd is not None
            else "STOP (pad)"
        )
        diffs = [
            f"m[{i}]={old}->{new}"
            for i, (old, new) in enumerate(zip(prev.memory, cur.memory))
            if old != new
        ]
        regs_s = " ".join(str(v) for v in cur.registers)
        out.append(
            f"{cur.steps_executed:4d} | {ir:3d} | {cmd_s:<28s} | {regs_s} | "
            + (", ".join(diffs) if diffs else "-")
        )
    return "\n".join(out)

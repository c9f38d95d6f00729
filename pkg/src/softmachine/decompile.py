"""Recover a readable approximate program from controller weights.

For every instruction-register state the decompiler reports the most
probable instruction, argument and output registers together with their
probabilities; entries whose best probability does not clear the floor
print as neutral tokens (``NOP`` / ``R-``).  A separate classifier grades
how faithfully a discrete program can be read back out of the weights by
inspecting the controller distributions actually visited on sample
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from softmachine.compiler import Params
from softmachine.isa import Command, MachineConfig, Opcode
from softmachine.lang import IrProgram
from softmachine.soft import run_soft


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class Pick:
    index: int
    prob: float


@dataclass(frozen=True)
class DecompiledLine:
    instr: Pick
    arg1: Pick
    arg2: Pick
    out: Pick


@dataclass(frozen=True)
class Decompilation:
    lines: tuple[DecompiledLine, ...]
    initial_registers: tuple[Pick, ...]
    initial_ir: Pick
    prob_floor: float

    def command(self, i: int) -> Command:
        ln = self.lines[i]
        return Command(Opcode(ln.instr.index), ln.arg1.index, ln.arg2.index, ln.out.index)


def decompile(params: Params, prob_floor: float = 0.5) -> Decompilation:
    """Argmax-decode every controller column and the initial state."""
    if not 0.0 < prob_floor < 1.0:
        raise ValueError(f"prob_floor must be in (0, 1), got {prob_floor}")
    e = _softmax(params.w_e)
    a = _softmax(params.w_a)
    b = _softmax(params.w_b)
    o = _softmax(params.w_o)

    def pick(mat: np.ndarray, j: int) -> Pick:
        idx = int(mat[:, j].argmax())
        return Pick(idx, float(mat[idx, j]))

    lines = tuple(
        DecompiledLine(pick(e, j), pick(a, j), pick(b, j), pick(o, j))
        for j in range(params.mem_size)
    )
    r0 = _softmax(params.r0.T)  # softmax over values, i.e. per register row
    regs = tuple(Pick(int(r0[:, i].argmax()), float(r0[:, i].max())) for i in range(params.reg_count))
    ir0 = _softmax(params.ir0[:, None])[:, 0]
    return Decompilation(
        lines=lines,
        initial_registers=regs,
        initial_ir=Pick(int(ir0.argmax()), float(ir0.max())),
        prob_floor=prob_floor,
    )


def render(dec: Decompilation) -> str:
    """Print the listing the way a debugger would show it."""

    def reg(p: Pick) -> str:
        return f"R{p.index + 1}" if p.prob > dec.prob_floor else "R-"

    def op(p: Pick) -> str:
        return Opcode(p.index).name if p.prob > dec.prob_floor else "NOP"

    def val(p: Pick) -> str:
        return str(p.index) if p.prob > dec.prob_floor else "-"

    out = []
    for i, p in enumerate(dec.initial_registers):
        out.append(f"R{i + 1} = {val(p)} ({p.prob:.2g})")
    out.append("")
    out.append(f"Initial state: {val(dec.initial_ir)} ({dec.initial_ir.prob:.2g})")
    out.append("")
    for i, ln in enumerate(dec.lines):
        out.append(
            f"{i}: {reg(ln.out)} ({ln.out.prob:.2g}) = {op(ln.instr)} ({ln.instr.prob:.2g}) "
            f"[{reg(ln.arg1)} ({ln.arg1.prob:.2g}), {reg(ln.arg2)} ({ln.arg2.prob:.2g})]"
        )
    return "\n".join(out) + "\n"


def to_ir(dec: Decompilation, n_lines: int) -> IrProgram:
    """Argmax commands of the first ``n_lines`` states as a program."""
    lines = tuple(dec.command(i) for i in range(n_lines))
    initial = tuple(p.index for p in dec.initial_registers)
    names = tuple(f"r{i + 1}" for i in range(len(initial)))
    return IrProgram(lines, initial, names)


def as_discrete_program(dec: Decompilation) -> tuple[IrProgram, int]:
    """The most probable discrete program over all states, plus its entry."""
    return to_ir(dec, len(dec.lines)), dec.initial_ir.index


def classify_interpretability(
    params: Params,
    cfg: MachineConfig,
    sample_tapes,
    eta: float | None = None,
    theta_dirac: float = 0.99,
) -> tuple[int, list[str]]:
    """Grade the controller distributions visited while running samples.

    Class 1: everything the controller outputs is (near-)deterministic, so
    the weights read back as an exact program.  Class 2: the only soft
    choices are instruction distributions split between JEZ and one other
    instruction, i.e. enumerable conditionals.  Class 3: anything else
    soft (blurred arguments, outputs or soft writes).
    """
    evidence: list[str] = []
    worst = 1
    for tape in sample_tapes:
        rollout = run_soft(params, tape, cfg, eta=eta, keep_controller=True)
        for t, ctrl in enumerate(rollout.controller_history, start=1):
            for name, dist in (("e", ctrl.e), ("a", ctrl.a), ("b", ctrl.b), ("o", ctrl.o)):
                top = float(dist.max())
                if top >= theta_dirac:
                    continue
                if name == "e":
                    order = np.argsort(dist)[::-1]
                    top2 = {int(order[0]), int(order[1])}
                    jez_split = (
                        Opcode.JEZ in top2
                        and float(dist[list(top2)].sum()) >= theta_dirac
                    )
                    if jez_split:
                        worst = max(worst, 2)
                        evidence.append(
                            f"step {t}: instruction mass split with JEZ "
                            f"(top={top:.3f})"
                        )
                        continue
                worst = 3
                evidence.append(f"step {t}: soft {name}-distribution (top={top:.3f})")
    return worst, evidence

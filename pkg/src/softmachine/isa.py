"""Instruction set and exact integer semantics of the register machine.

The machine owns a tape of ``M`` memory cells, ``R`` general registers and
one instruction register.  Every stored value is an integer in ``[0, M)``
and all arithmetic wraps mod ``M``, including DEC below zero and INC at
``M - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Opcode(IntEnum):
    """The eleven machine instructions.

    The enumeration order is canonical: it is the row index of each
    instruction in the controller's instruction distribution and must match
    between the compiler, both interpreters and the decompiler.
    """

    STOP = 0
    ZERO = 1
    INC = 2
    DEC = 3
    ADD = 4
    SUB = 5
    MIN = 6
    MAX = 7
    READ = 8
    WRITE = 9
    JEZ = 10


N_OPCODES = len(Opcode)

# Number of argument slots each instruction actually consumes.
ARITY = {
    Opcode.STOP: 0,
    Opcode.ZERO: 0,
    Opcode.INC: 1,
    Opcode.DEC: 1,
    Opcode.ADD: 2,
    Opcode.SUB: 2,
    Opcode.MIN: 2,
    Opcode.MAX: 2,
    Opcode.READ: 1,
    Opcode.WRITE: 2,
    Opcode.JEZ: 2,
}


class EffectKind(IntEnum):
    NONE = 0
    STOP_FLAG = 1
    MEM_READ = 2
    MEM_WRITE = 3
    JUMP = 4


EFFECT_KIND = {
    Opcode.STOP: EffectKind.STOP_FLAG,
    Opcode.ZERO: EffectKind.NONE,
    Opcode.INC: EffectKind.NONE,
    Opcode.DEC: EffectKind.NONE,
    Opcode.ADD: EffectKind.NONE,
    Opcode.SUB: EffectKind.NONE,
    Opcode.MIN: EffectKind.NONE,
    Opcode.MAX: EffectKind.NONE,
    Opcode.READ: EffectKind.MEM_READ,
    Opcode.WRITE: EffectKind.MEM_WRITE,
    Opcode.JEZ: EffectKind.JUMP,
}


@dataclass(frozen=True)
class MachineConfig:
    """Dimensions and execution limits of one machine instance.

    ``mem_size`` doubles as the value modulus: a machine with M cells can
    store the integers 0..M-1, which is also what lets the instruction
    register index any program line.
    """

    mem_size: int
    reg_count: int
    max_steps: int = 100
    stop_threshold: float = 0.9
    instr_count: int = N_OPCODES

    def __post_init__(self) -> None:
        if self.mem_size < 1:
            raise ValueError(f"mem_size must be positive, got {self.mem_size}")
        if self.reg_count < 1:
            raise ValueError(f"reg_count must be positive, got {self.reg_count}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if not 0.0 < self.stop_threshold <= 1.0:
            raise ValueError(
                f"stop_threshold must be in (0, 1], got {self.stop_threshold}"
            )
        if self.instr_count != N_OPCODES:
            raise ValueError(f"instr_count is fixed at {N_OPCODES}")


@dataclass(frozen=True)
class Command:
    """One machine command: an instruction plus three register indices."""

    instr: Opcode
    arg1: int
    arg2: int
    out: int

    def validate(self, cfg: MachineConfig) -> None:
        for idx in (self.arg1, self.arg2, self.out):
            if not 0 <= idx < cfg.reg_count:
                raise ValueError(f"register index {idx} out of range for R={cfg.reg_count}")


@dataclass(frozen=True)
class SideEffect:
    """What an instruction requested beyond returning a value.

    ``jump_to`` is set only when the jump is actually taken (JEZ with a
    zero first argument).
    """

    stop: bool = False
    write_addr: int | None = None
    write_value: int | None = None
    jump_to: int | None = None


NO_EFFECT = SideEffect()


@dataclass(frozen=True)
class DiscreteState:
    """Snapshot of the exact machine: all values are integers mod M."""

    memory: tuple[int, ...]
    registers: tuple[int, ...]
    ir: int
    stopped: bool
    steps_executed: int


def apply_opcode(
    op: Opcode, a: int, b: int, mem_a: int, cfg: MachineConfig
) -> tuple[int, SideEffect]:
    """Return the value and side effect of one instruction.

    ``mem_a`` is the content of memory cell ``a`` (only READ consumes it).
    Instructions that exist purely for their side effect return 0.
    """
    m = cfg.mem_size
    if not (0 <= a < m and 0 <= b < m and 0 <= mem_a < m):
        raise ValueError(f"operands ({a}, {b}, mem={mem_a}) out of range for M={m}")
    if op is Opcode.STOP:
        return 0, SideEffect(stop=True)
    if op is Opcode.ZERO:
        return 0, NO_EFFECT
    if op is Opcode.INC:
        return (a + 1) % m, NO_EFFECT
    if op is Opcode.DEC:
        return (a - 1) % m, NO_EFFECT
    if op is Opcode.ADD:
        return (a + b) % m, NO_EFFECT
    if op is Opcode.SUB:
        return (a - b) % m, NO_EFFECT
    if op is Opcode.MIN:
        return min(a, b), NO_EFFECT
    if op is Opcode.MAX:
        return max(a, b), NO_EFFECT
    if op is Opcode.READ:
        return mem_a, NO_EFFECT
    if op is Opcode.WRITE:
        return 0, SideEffect(write_addr=a, write_value=b)
    if op is Opcode.JEZ:
        return 0, (SideEffect(jump_to=b) if a == 0 else NO_EFFECT)
    raise ValueError(f"unknown opcode {op!r}")

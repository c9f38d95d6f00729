"""Parser and lowering for the flat register-machine source language.

Grammar (one construct per line, ``#`` starts a comment):

    var NAME = INT
    [LABEL:] [DEST =] OPCODE(ARG[, ARG])

Arguments are variable names, integer literals or label names.  Lowering
turns every statement into one :class:`~softmachine.isa.Command`, resolving
labels to line indices and materialising every constant into a read-only
register.  The last register is a scratch register: it fills unused
argument slots and receives discarded results.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from softmachine.isa import ARITY, Command, MachineConfig, Opcode


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LowerError(ValueError):
    pass


# Argument kinds attached at parse time, after name resolution.
VAR, CONST, LABEL = "var", "const", "label"


@dataclass(frozen=True)
class Arg:
    kind: str  # VAR | CONST | LABEL
    name: str | None = None
    value: int | None = None


@dataclass(frozen=True)
class Statement:
    label: str | None
    dest: str | None
    op: Opcode
    args: tuple[Arg, ...]
    line: int


@dataclass(frozen=True)
class SourceProgram:
    decls: tuple[tuple[str, int], ...]
    statements: tuple[Statement, ...]
    labels: dict[str, int] = field(compare=False, default_factory=dict)


_VAR_RE = re.compile(r"^var\s+(?P<name>[A-Za-z_]\w*)\s*=\s*(?P<value>\d+)$")
_STMT_RE = re.compile(
    r"^(?:(?P<label>[A-Za-z_]\w*)\s*:)?\s*"
    r"(?:(?P<dest>[A-Za-z_]\w*)\s*=\s*)?"
    r"(?P<op>[A-Za-z_]\w*)\s*\(\s*(?P<args>[^)]*)\)$"
)


def parse(text: str) -> SourceProgram:
    """Parse source text into a resolved :class:`SourceProgram`."""
    decls: list[tuple[str, int]] = []
    raw_stmts: list[tuple[str | None, str | None, str, list[str], int]] = []
    labels: dict[str, int] = {}
    seen_statement = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _VAR_RE.match(line)
        if m:
            if seen_statement:
                raise ParseError("var declarations must precede statements", lineno)
            name = m.group("name")
            if any(n == name for n, _ in decls):
                raise ParseError(f"variable {name!r} declared twice", lineno)
            decls.append((name, int(m.group("value"))))
            continue
        m = _STMT_RE.match(line)
        if m is None:
            raise ParseError(f"cannot parse statement {line!r}", lineno)
        seen_statement = True
        label = m.group("label")
        if label is not None:
            if label in labels:
                raise ParseError(f"duplicate label {label!r}", lineno)
            labels[label] = len(raw_stmts)
        args = [a.strip() for a in m.group("args").split(",") if a.strip()]
        raw_stmts.append((label, m.group("dest"), m.group("op"), args, lineno))

    if not raw_stmts:
        raise ParseError("no statements", max(1, text.count("\n") + 1))

    var_names = {name for name, _ in decls}
    clash = var_names & labels.keys()
    if clash:
        raise ParseError(f"name used as both variable and label: {sorted(clash)[0]!r}", 1)

    statements: list[Statement] = []
    for label, dest, opname, args, lineno in raw_stmts:
        try:
            op = Opcode[opname.upper()]
        except KeyError:
            raise ParseError(f"unknown opcode {opname!r}", lineno) from None
        if len(args) != ARITY[op]:
            raise ParseError(
                f"{op.name} takes {ARITY[op]} argument(s), got {len(args)}", lineno
            )
        if dest is not None and dest not in var_names:
            raise ParseError(f"undeclared variable {dest!r}", lineno)
        resolved: list[Arg] = []
        for a in args:
            if a.isdigit():
                resolved.append(Arg(CONST, value=int(a)))
            elif a in var_names:
                resolved.append(Arg(VAR, name=a))
            elif a in labels:
                resolved.append(Arg(LABEL, name=a, value=labels[a]))
            else:
                raise ParseError(f"unresolved name {a!r}", lineno)
        statements.append(Statement(label, dest, op, tuple(resolved), lineno))

    return SourceProgram(tuple(decls), tuple(statements), labels)


@dataclass(frozen=True)
class IrProgram:
    """Lowered program: one command per line plus initial register values.

    ``register_names`` records where each register came from (variable name,
    ``c<value>`` for a constant or label, ``tmp`` for the scratch register);
    it is diagnostic only and does not affect execution.
    """

    lines: tuple[Command, ...]
    initial_registers: tuple[int, ...]
    register_names: tuple[str, ...]

    @property
    def n_registers(self) -> int:
        return len(self.initial_registers)

    @property
    def scratch(self) -> int:
        return len(self.initial_registers) - 1


def lower(prog: SourceProgram, cfg: MachineConfig) -> IrProgram:
    """Allocate registers and emit one command per statement.

    Allocation order is deterministic: declared variables first (in
    declaration order), then one register per distinct constant value in
    first-use order, then the scratch register.  Two constants with equal
    values (including resolved labels) share a register.
    """
    n_lines = len(prog.statements)
    if n_lines > cfg.mem_size:
        raise LowerError(
            f"program has {n_lines} lines but the machine can only address "
            f"{cfg.mem_size} (memory size bounds program length)"
        )

    reg_index: dict[str, int] = {}
    initial: list[int] = []
    names: list[str] = []
    for name, value in prog.decls:
        if not 0 <= value < cfg.mem_size:
            raise LowerError(f"initial value {value} of {name!r} out of range for M={cfg.mem_size}")
        reg_index[name] = len(initial)
        initial.append(value)
        names.append(name)

    const_index: dict[int, int] = {}

    def const_reg(value: int) -> int:
        if not 0 <= value < cfg.mem_size:
            raise LowerError(f"constant {value} out of range for M={cfg.mem_size}")
        if value not in const_index:
            const_index[value] = len(initial)
            initial.append(value)
            names.append(f"c{value}")
        return const_index[value]

    # First pass fixes constant registers in first-use order.
    for stmt in prog.statements:
        for a in stmt.args:
            if a.kind in (CONST, LABEL):
                const_reg(a.value)  # type: ignore[arg-type]

    scratch = len(initial)
    initial.append(0)
    names.append("tmp")

    if len(initial) > cfg.reg_count:
        raise LowerError(
            f"program needs {len(initial)} registers but the machine has {cfg.reg_count}"
        )

    def arg_reg(a: Arg) -> int:
        if a.kind == VAR:
            return reg_index[a.name]  # type: ignore[index]
        return const_index[a.value]  # type: ignore[index]

    lines: list[Command] = []
    for stmt in prog.statements:
        regs = [arg_reg(a) for a in stmt.args]
        while len(regs) < 2:
            regs.append(scratch)
        out = reg_index[stmt.dest] if stmt.dest is not None else scratch
        lines.append(Command(stmt.op, regs[0], regs[1], out))

    return IrProgram(tuple(lines), tuple(initial), tuple(names))


def parse_and_lower(text: str, cfg: MachineConfig) -> IrProgram:
    return lower(parse(text), cfg)


_IR_HEADER = "softmachine-ir 1"
_IR_LINE_RE = re.compile(
    r"^(?P<idx>\d+):\s*R(?P<out>\d+)\s*=\s*(?P<op>[A-Z]+)\s*"
    r"\(\s*R(?P<a>\d+)\s*,\s*R(?P<b>\d+)\s*\)$"
)


def ir_to_text(prog: IrProgram) -> str:
    """Serialise a lowered program; the format round-trips bit-exactly.

    Registers are displayed one-indexed (R1 is the first register).
    """
    out = [_IR_HEADER]
    out.append("regs: " + " ".join(str(v) for v in prog.initial_registers))
    out.append("names: " + " ".join(prog.register_names))
    for i, cmd in enumerate(prog.lines):
        out.append(
            f"{i}: R{cmd.out + 1} = {cmd.instr.name}(R{cmd.arg1 + 1}, R{cmd.arg2 + 1})"
        )
    return "\n".join(out) + "\n"


def ir_from_text(text: str) -> IrProgram:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _IR_HEADER:
        raise ValueError("not a softmachine IR file (missing header)")
    if len(lines) < 3 or not lines[1].startswith("regs: ") or not lines[2].startswith("names: "):
        raise ValueError("malformed IR file: expected regs/names header lines")
    initial = tuple(int(v) for v in lines[1][len("regs: "):].split())
    names = tuple(lines[2][len("names: "):].split())
    if len(initial) != len(names):
        raise ValueError("regs/names length mismatch")
    cmds = []
    for i, ln in enumerate(lines[3:]):
        m = _IR_LINE_RE.match(ln)
        if m is None or int(m.group("idx")) != i:
            raise ValueError(f"malformed IR line: {ln!r}")
        cmds.append(
            Command(
                Opcode[m.group("op")],
                int(m.group("a")) - 1,
                int(m.group("b")) - 1,
                int(m.group("out")) - 1,
            )
        )
    return IrProgram(tuple(cmds), initial, names)

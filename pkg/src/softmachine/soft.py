"""The differentiable machine.

Every discrete value becomes a distribution over [0, M): memory rows,
register rows and the instruction register are probability vectors, and
one soft step mixes the outcome of all eleven instructions weighted by the
controller's choice probabilities.  All updates are convex combinations,
so normalisation is preserved by construction.

The heavy lifting happens on :class:`~softmachine.autodiff.Tensor` objects
so the same code path serves inference and gradient computation.  Instead
of the cubic sum over argument pairs, each arithmetic instruction has a
closed quadratic form: ADD is a circular convolution, SUB a circular
correlation, INC/DEC cyclic shifts, and MIN/MAX combine prefix/suffix
mass sums.  The test suite checks each against the brute-force sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from softmachine import autodiff as ad
from softmachine.autodiff import Tensor
from softmachine.compiler import PARAM_KEYS, Params
from softmachine.isa import MachineConfig, N_OPCODES, Opcode


@dataclass
class SoftState:
    """Distributional machine state for one execution.

    ``memory`` is M x M (row i = value distribution of cell i),
    ``registers`` is R x M, ``ir`` has length M.  ``p_stop`` is the
    cumulative probability that execution has halted; its per-step
    increments are recorded so the confidence loss can weight errors by
    the probability of stopping at each step.
    """

    memory: np.ndarray
    registers: np.ndarray
    ir: np.ndarray
    p_stop: float = 0.0
    halt_increments: tuple[float, ...] = ()


@dataclass
class ControllerOutput:
    e: np.ndarray
    a: np.ndarray
    b: np.ndarray
    o: np.ndarray


@dataclass
class RolloutResult:
    final_state: SoftState
    steps: int
    memory_history: list[np.ndarray]
    halt_history: list[float]
    state_history: list[SoftState] | None = None
    controller_history: list[ControllerOutput] | None = None

    @property
    def halt_increments(self) -> list[float]:
        prev = [0.0] + self.halt_history[:-1]
        return [p - q for p, q in zip(self.halt_history, prev)]


def lift_tape(tape, mem_size: int) -> np.ndarray:
    """One-hot encode an integer tape as Dirac memory rows."""
    tape = np.asarray(tape, dtype=np.int64)
    if tape.shape != (mem_size,):
        raise ValueError(f"tape must have {mem_size} cells, got {tape.shape}")
    if tape.min() < 0 or tape.max() >= mem_size:
        raise ValueError("tape value out of range")
    return np.eye(mem_size)[tape]


@lru_cache(maxsize=None)
def _minmax_tables(m: int) -> tuple[np.ndarray, ...]:
    c = np.arange(m)
    geq = (c[:, None] >= c[None, :]).astype(np.float64)
    gt = (c[:, None] > c[None, :]).astype(np.float64)
    leq = (c[:, None] <= c[None, :]).astype(np.float64)
    lt = (c[:, None] < c[None, :]).astype(np.float64)
    return geq, gt, leq, lt


def _opcode_outputs(
    arg1: Tensor, arg2: Tensor, mem: Tensor, tables: tuple[Tensor, ...]
) -> list[Tensor]:
    """Value distribution of each instruction, in opcode order."""
    geq, gt, leq, lt = tables
    batch, m = arg1.shape
    dirac0 = ad.constant(np.eye(1, m, 0).repeat(batch, axis=0))
    inc = ad.roll(arg1, 1)
    dec = ad.roll(arg1, -1)
    add_ = ad.conv_circ(arg1, arg2)
    sub_ = ad.corr_circ(arg1, arg2)
    # P(min = c) = P(a = c) P(b >= c) + P(b = c) P(a > c), and dually for max.
    minv = arg1 * ad.matmul(arg2, geq) + arg2 * ad.matmul(arg1, gt)
    maxv = arg1 * ad.matmul(arg2, leq) + arg2 * ad.matmul(arg1, lt)
    readv = (ad.reshape(arg1, (batch, m, 1)) * mem).sum(axis=1)
    return [dirac0, dirac0, inc, dec, add_, sub_, minv, maxv, readv, dirac0, dirac0]


class _Machine:
    """Per-rollout tensor context: wrapped parameters and constant tables."""

    def __init__(self, params: Params, cfg: MachineConfig, requires_grad: bool):
        params.check()
        if params.mem_size != cfg.mem_size or params.reg_count != cfg.reg_count:
            raise ValueError(
                f"params are {params.reg_count}x{params.mem_size}, config wants "
                f"{cfg.reg_count}x{cfg.mem_size}"
            )
        self.cfg = cfg
        wrap = ad.leaf if requires_grad else ad.constant
        self.leaves = {k: wrap(getattr(params, k)) for k in PARAM_KEYS}
        self.w_e_t = ad.transpose2(self.leaves["w_e"])
        self.w_a_t = ad.transpose2(self.leaves["w_a"])
        self.w_b_t = ad.transpose2(self.leaves["w_b"])
        self.w_o_t = ad.transpose2(self.leaves["w_o"])
        self.regs0 = ad.softmax(self.leaves["r0"])
        self.ir0 = ad.softmax(ad.reshape(self.leaves["ir0"], (1, cfg.mem_size)))
        self.tables = tuple(ad.constant(t) for t in _minmax_tables(cfg.mem_size))

    def controller(self, ir: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (
            ad.softmax(ad.matmul(ir, self.w_e_t)),
            ad.softmax(ad.matmul(ir, self.w_a_t)),
            ad.softmax(ad.matmul(ir, self.w_b_t)),
            ad.softmax(ad.matmul(ir, self.w_o_t)),
        )

    def opcode_outputs(self, arg1: Tensor, arg2: Tensor, mem: Tensor) -> list[Tensor]:
        return _opcode_outputs(arg1, arg2, mem, self.tables)

    def step(
        self, mem: Tensor, regs: Tensor, ir: Tensor, survive: Tensor
    ) -> tuple[Tensor, Tensor, Tensor, Tensor, tuple[Tensor, ...]]:
        batch, m = ir.shape
        r = regs.shape[1]
        e, a, b, o = self.controller(ir)

        arg1 = (ad.reshape(a, (batch, r, 1)) * regs).sum(axis=1)
        arg2 = (ad.reshape(b, (batch, r, 1)) * regs).sum(axis=1)

        outs = self.opcode_outputs(arg1, arg2, mem)
        out = (ad.reshape(e, (batch, N_OPCODES, 1)) * ad.stack(outs, axis=1)).sum(axis=1)

        # Soft write into the registers selected by o.
        regs_new = regs + ad.reshape(o, (batch, r, 1)) * (
            ad.reshape(out, (batch, 1, m)) - regs
        )

        # Memory rows blend toward the written value, gated by P(WRITE).
        e_write = ad.reshape(ad.col(e, Opcode.WRITE), (batch, 1, 1))
        addr = ad.reshape(arg1, (batch, m, 1))
        val = ad.reshape(arg2, (batch, 1, m))
        mem_new = mem + e_write * (addr * (val - mem))

        # The instruction register is incremented, then blended with the
        # jump target weighted by P(JEZ) and P(first argument = 0).
        ir_inc = ad.roll(ir, 1)
        cond0 = ad.reshape(ad.col(arg1, 0), (batch, 1))
        ir_jez = arg2 * cond0 + ir_inc * (1.0 - cond0)
        e_jez = ad.reshape(ad.col(e, Opcode.JEZ), (batch, 1))
        ir_new = ir_inc + e_jez * (ir_jez - ir_inc)

        survive_new = survive * (1.0 - ad.col(e, Opcode.STOP))
        return mem_new, regs_new, ir_new, survive_new, (e, a, b, o, arg1, arg2)


@dataclass
class BatchRollout:
    """Tensor-level result of a batched rollout (used by the trainer)."""

    leaves: dict[str, Tensor]
    mem_steps: list[Tensor]  # (B, M, M) after each step
    pstop_steps: list[Tensor]  # (B,) after each step
    t_halt: np.ndarray  # (B,) step at which each sample halted
    steps: int  # number of steps actually executed
    halted: np.ndarray  # (B,) bool, True if the threshold was crossed
    reg_steps: list[Tensor] | None = None
    ir_steps: list[Tensor] | None = None
    controller_steps: list[tuple[np.ndarray, ...]] | None = None


def run_batch(
    params: Params,
    tapes: np.ndarray,
    cfg: MachineConfig,
    eta: float | None = None,
    t_max: int | None = None,
    requires_grad: bool = False,
    collect_states: bool = False,
    collect_controller: bool = False,
) -> BatchRollout:
    """Roll the soft machine over a batch of tapes.

    Per sample, execution counts as halted at the first step whose
    cumulative stop probability exceeds ``eta``; the batch keeps stepping
    until every sample halted or ``t_max`` is reached.
    """
    eta = cfg.stop_threshold if eta is None else eta
    t_max = cfg.max_steps if t_max is None else t_max
    tapes = np.atleast_2d(np.asarray(tapes, dtype=np.int64))
    batch, m = tapes.shape
    machine = _Machine(params, cfg, requires_grad)

    mem = ad.constant(np.stack([lift_tape(t, m) for t in tapes]))
    ones_b = ad.constant(np.ones((batch, 1)))
    ir = ones_b * machine.ir0
    regs = ad.reshape(ones_b, (batch, 1, 1)) * ad.reshape(
        machine.regs0, (1, cfg.reg_count, m)
    )
    survive = ad.constant(np.ones(batch))

    t_halt = np.full(batch, t_max, dtype=np.int64)
    halted = np.zeros(batch, dtype=bool)
    mem_steps: list[Tensor] = []
    pstop_steps: list[Tensor] = []
    reg_steps: list[Tensor] = [] if collect_states else None
    ir_steps: list[Tensor] = [] if collect_states else None
    ctrl_steps = [] if collect_controller else None

    steps = 0
    for t in range(1, t_max + 1):
        mem, regs, ir, survive, taps = machine.step(mem, regs, ir, survive)
        steps = t
        p_stop = 1.0 - survive
        mem_steps.append(mem)
        pstop_steps.append(p_stop)
        if collect_states:
            reg_steps.append(regs)
            ir_steps.append(ir)
        if collect_controller:
            ctrl_steps.append(tuple(x.data.copy() for x in taps[:4]))
        newly = ~halted & (p_stop.data > eta)
        t_halt[newly] = t
        halted |= newly
        if halted.all():
            break

    return BatchRollout(
        leaves=machine.leaves,
        mem_steps=mem_steps,
        pstop_steps=pstop_steps,
        t_halt=t_halt,
        steps=steps,
        halted=halted,
        reg_steps=reg_steps,
        ir_steps=ir_steps,
        controller_steps=ctrl_steps,
    )


def initial_state(params: Params, tape, cfg: MachineConfig) -> SoftState:
    machine = _Machine(params, cfg, requires_grad=False)
    return SoftState(
        memory=lift_tape(tape, cfg.mem_size),
        registers=machine.regs0.data.copy(),
        ir=machine.ir0.data[0].copy(),
    )


def controller_forward(params: Params, ir: np.ndarray, cfg: MachineConfig) -> ControllerOutput:
    """Evaluate the four controller heads on one instruction-register state."""
    machine = _Machine(params, cfg, requires_grad=False)
    ir_t = ad.constant(np.asarray(ir, dtype=np.float64).reshape(1, cfg.mem_size))
    e, a, b, o = machine.controller(ir_t)
    return ControllerOutput(e.data[0], a.data[0], b.data[0], o.data[0])


def gather_args(registers: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination of register rows under the argument choices."""
    registers = np.asarray(registers, dtype=np.float64)
    return np.asarray(a) @ registers, np.asarray(b) @ registers


def instr_output(
    op: Opcode,
    arg1: np.ndarray,
    arg2: np.ndarray,
    memory: np.ndarray | None,
    cfg: MachineConfig,
) -> np.ndarray:
    """Value distribution of one instruction on distributional arguments."""
    a1 = ad.constant(np.asarray(arg1, dtype=np.float64).reshape(1, cfg.mem_size))
    a2 = ad.constant(np.asarray(arg2, dtype=np.float64).reshape(1, cfg.mem_size))
    if memory is None:
        memory = np.zeros((cfg.mem_size, cfg.mem_size))
    mem = ad.constant(np.asarray(memory, dtype=np.float64).reshape(1, cfg.mem_size, -1))
    tables = tuple(ad.constant(t) for t in _minmax_tables(cfg.mem_size))
    outs = _opcode_outputs(a1, a2, mem, tables)
    return outs[op].data[0].copy()


def _state_tensors(state: SoftState) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    mem = ad.constant(state.memory[None])
    regs = ad.constant(state.registers[None])
    ir = ad.constant(state.ir[None])
    survive = ad.constant(np.array([1.0 - state.p_stop]))
    return mem, regs, ir, survive


def soft_step(state: SoftState, params: Params, cfg: MachineConfig) -> SoftState:
    """One differentiable machine step on an explicit state."""
    machine = _Machine(params, cfg, requires_grad=False)
    mem, regs, ir, survive = _state_tensors(state)
    mem, regs, ir, survive, _ = machine.step(mem, regs, ir, survive)
    p_stop = float(1.0 - survive.data[0])
    return SoftState(
        memory=mem.data[0],
        registers=regs.data[0],
        ir=ir.data[0],
        p_stop=p_stop,
        halt_increments=state.halt_increments + (p_stop - state.p_stop,),
    )


def run_soft(
    params: Params,
    tape,
    cfg: MachineConfig,
    eta: float | None = None,
    t_max: int | None = None,
    keep_states: bool = False,
    keep_controller: bool = False,
) -> RolloutResult:
    """Roll out one tape until the stop probability crosses the threshold.

    Returns the final state, the number of steps taken and the per-step
    memory / stop-probability histories the losses need.
    """
    rollout = run_batch(
        params,
        np.asarray(tape, dtype=np.int64)[None],
        cfg,
        eta=eta,
        t_max=t_max,
        collect_states=True,
        collect_controller=keep_controller,
    )
    memory_history = [t.data[0].copy() for t in rollout.mem_steps]
    halt_history = [float(t.data[0]) for t in rollout.pstop_steps]
    increments = [p - q for p, q in zip(halt_history, [0.0] + halt_history[:-1])]
    states = [
        SoftState(
            memory=memory_history[i],
            registers=rollout.reg_steps[i].data[0].copy(),
            ir=rollout.ir_steps[i].data[0].copy(),
            p_stop=halt_history[i],
            halt_increments=tuple(increments[: i + 1]),
        )
        for i in range(rollout.steps)
    ]
    controller_history = None
    if keep_controller:
        controller_history = [
            ControllerOutput(*[arr[0] for arr in taps])
            for taps in rollout.controller_steps
        ]
    return RolloutResult(
        final_state=states[-1],
        steps=rollout.steps,
        memory_history=memory_history,
        halt_history=halt_history,
        state_history=states if keep_states else None,
        controller_history=controller_history,
    )

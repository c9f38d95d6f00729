"""Differentiable register machine toolkit.

Compile flat register-machine programs to controller weights, execute them
exactly or as distributions, tune them by gradient descent for a target
input distribution, and read the tuned weights back as programs.
"""

from softmachine.compiler import (
    KAPPA_SHARP,
    KAPPA_SOFT,
    Params,
    compile_program,
    load_params,
    perturb,
    save_params,
)
from softmachine.decompile import classify_interpretability, decompile, render
from softmachine.discrete import DiscreteRun, run_discrete
from softmachine.isa import Command, DiscreteState, MachineConfig, Opcode, apply_opcode
from softmachine.lang import (
    IrProgram,
    LowerError,
    ParseError,
    ir_from_text,
    ir_to_text,
    lower,
    parse,
    parse_and_lower,
)
from softmachine.loss import (
    LossWeights,
    TaskInstance,
    loss_confidence,
    loss_correctness,
    loss_efficiency,
    loss_halting,
    loss_total,
)
from softmachine.soft import (
    ControllerOutput,
    RolloutResult,
    SoftState,
    controller_forward,
    gather_args,
    initial_state,
    instr_output,
    run_soft,
    soft_step,
)
from softmachine.tasks import (
    TaskSpec,
    corpus,
    get_task,
    instance_from_text,
    instance_to_text,
    sample,
)
from softmachine.trainer import (
    Adam,
    TrainingConfig,
    TrainReport,
    evaluate_soft,
    gradient,
    train,
)

__version__ = "0.1.0"

"""The four training loss terms and their weighted total.

All terms compare distributional memory against a one-hot target under a
per-cell mask and live in probability space: correctness is a masked
squared distance on the final memory, halting penalises runs that hit the
step cap without stopping, confidence weights the per-step memory error by
the probability of stopping exactly there, and efficiency charges one unit
per surviving step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from softmachine.isa import MachineConfig
from softmachine.soft import RolloutResult


@dataclass(frozen=True)
class TaskInstance:
    """One sample: input tape, expected tape and the cells that count."""

    input_tape: tuple[int, ...]
    target_tape: tuple[int, ...]
    mask: tuple[bool, ...]
    bias_tag: str = ""

    def __post_init__(self) -> None:
        m = len(self.input_tape)
        if len(self.target_tape) != m or len(self.mask) != m:
            raise ValueError("input, target and mask must have equal length")
        if not any(self.mask):
            raise ValueError("mask must select at least one cell")
        bad = [v for v in (*self.input_tape, *self.target_tape) if not 0 <= v < m]
        if bad:
            raise ValueError(f"tape values {bad} out of range for M={m}")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the four terms: correctness, halting, confidence, efficiency."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.alpha == self.beta == self.gamma == self.delta == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    correctness: float
    halting: float
    confidence: float
    efficiency: float


def target_matrix(instance: TaskInstance) -> np.ndarray:
    m = len(instance.target_tape)
    return np.eye(m)[np.asarray(instance.target_tape, dtype=np.int64)]


def masked_sq_error(memory: np.ndarray, instance: TaskInstance) -> float:
    """Sum of squared distances to the one-hot target over masked rows."""
    target = target_matrix(instance)
    mask_col = np.asarray(instance.mask, dtype=np.float64)[:, None]
    return float((mask_col * (memory - target) ** 2).sum())


def loss_correctness(final_memory: np.ndarray, instance: TaskInstance) -> float:
    return masked_sq_error(final_memory, instance)


def loss_halting(p_stop_final: float, steps: int, cfg: MachineConfig) -> float:
    return (1.0 - p_stop_final) if steps == cfg.max_steps else 0.0


def loss_efficiency(halt_history: Sequence[float]) -> float:
    """Sum of survival probabilities over steps 1 .. T-1."""
    return float(sum(1.0 - p for p in halt_history[:-1]))


def loss_confidence(
    memory_history: Sequence[np.ndarray],
    halt_history: Sequence[float],
    instance: TaskInstance,
    include_first_step: bool = False,
) -> float:
    """Expected memory error at the moment of stopping, over steps 2 .. T.

    With ``include_first_step`` the first step's halt mass is charged too
    (the increment from nothing to ``p_stop,1``).  The trainer enables
    this: without it, parking stop probability on the very first step is
    never penalised, which opens degenerate optima.
    """
    total = 0.0
    if include_first_step and halt_history:
        total += halt_history[0] * masked_sq_error(memory_history[0], instance)
    for t in range(1, len(halt_history)):
        increment = halt_history[t] - halt_history[t - 1]
        total += increment * masked_sq_error(memory_history[t], instance)
    return total


def loss_total(
    rollout: RolloutResult,
    instance: TaskInstance,
    weights: LossWeights,
    cfg: MachineConfig,
    include_first_step: bool = False,
) -> LossBreakdown:
    lc = loss_correctness(rollout.memory_history[-1], instance)
    lh = loss_halting(rollout.halt_history[-1], rollout.steps, cfg)
    ls = loss_confidence(
        rollout.memory_history, rollout.halt_history, instance,
        include_first_step=include_first_step,
    )
    lt = loss_efficiency(rollout.halt_history)
    total = (
        weights.alpha * lc + weights.beta * lh + weights.gamma * ls + weights.delta * lt
    )
    return LossBreakdown(total, lc, lh, ls, lt)

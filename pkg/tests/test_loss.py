import numpy as np
import pytest

from softmachine.compiler import KAPPA_SHARP, compile_program
from softmachine.isa import MachineConfig
from softmachine.loss import (
    LossWeights,
    TaskInstance,
    loss_confidence,
    loss_correctness,
    loss_efficiency,
    loss_halting,
    loss_total,
)
from softmachine.soft import run_soft
from softmachine.tasks import sample


def one_cell_instance(m=10, cell=0, target_value=4):
    tape = tuple([1] * m)
    target = list(tape)
    target[cell] = target_value
    mask = tuple(i == cell for i in range(m))
    return TaskInstance(tape, tuple(target), mask)


def test_instance_validation():
    with pytest.raises(ValueError):
        TaskInstance((0, 1), (0, 1), (False, False))  # empty mask
    with pytest.raises(ValueError):
        TaskInstance((0, 5), (0, 1), (True, True))  # value out of range
    with pytest.raises(ValueError):
        TaskInstance((0, 1), (0,), (True,))  # length mismatch


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(0, 0, 0, 0)
    with pytest.raises(ValueError):
        LossWeights(alpha=-1)


def test_correctness_exact_match_is_zero():
    inst = one_cell_instance()
    memory = np.eye(10)[np.asarray(inst.target_tape)]
    assert loss_correctness(memory, inst) == 0.0


def test_correctness_wrong_dirac_counts_two_per_cell():
    m = 10
    tape = tuple([1] * m)
    target = tuple([2] * m)
    mask = (True, True, True) + (False,) * (m - 3)
    inst = TaskInstance(tape, target, mask)
    memory = np.eye(m)[np.asarray(tape)]  # every masked cell is wrong
    assert loss_correctness(memory, inst) == pytest.approx(2.0 * 3, abs=1e-10)


def test_correctness_uniform_row():
    inst = one_cell_instance(m=10)
    memory = np.eye(10)[np.asarray(inst.target_tape)]
    memory[0] = np.full(10, 0.1)
    # 9 entries off by 0.1 plus one off by 0.9
    assert loss_correctness(memory, inst) == pytest.approx(0.9, abs=1e-10)


def test_halting_cases():
    cfg = MachineConfig(10, 4, max_steps=20)
    assert loss_halting(0.3, 7, cfg) == 0.0
    assert loss_halting(0.3, 20, cfg) == pytest.approx(0.7, abs=1e-12)
    assert loss_halting(1.0, 20, cfg) == 0.0


def test_efficiency_cases():
    assert loss_efficiency([1.0]) == 0.0
    assert loss_efficiency([0.0] * 5) == pytest.approx(4.0, abs=1e-12)
    assert loss_efficiency([0.5, 0.75, 1.0]) == pytest.approx(0.75, abs=1e-10)


def test_confidence_cases():
    inst = one_cell_instance(m=4, target_value=2)
    right = np.eye(4)[np.asarray(inst.target_tape)]
    wrong = right.copy()
    wrong[0] = np.eye(4)[1]  # masked cell dirac at the wrong value: error 2
    # no stopping mass after step 1: zero confidence loss
    assert loss_confidence([wrong, wrong], [0.0, 0.0], inst) == 0.0
    # all mass stops at a step whose memory is right
    assert loss_confidence([wrong, right], [0.0, 1.0], inst) == 0.0
    # increment 0.5 onto a step with masked error 2 -> 1
    assert loss_confidence([right, wrong], [0.0, 0.5], inst) == pytest.approx(1.0, abs=1e-10)


def test_confidence_first_step_flag():
    inst = one_cell_instance(m=4, target_value=2)
    wrong = np.eye(4)[np.asarray(inst.input_tape)]
    # all stop mass on step 1 is free under the default definition
    assert loss_confidence([wrong], [0.9], inst) == 0.0
    assert loss_confidence([wrong], [0.9], inst, include_first_step=True) == pytest.approx(
        0.9 * 2.0, abs=1e-10
    )


def test_total_on_sharp_access(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    inst = sample(spec, biased=False, seed=2)
    params = compile_program(ir, cfg, KAPPA_SHARP, pad="stop")
    rollout = run_soft(params, inst.input_tape, cfg, eta=0.5)
    breakdown = loss_total(rollout, inst, LossWeights(1, 1, 1, 1), cfg)
    assert breakdown.correctness < 1e-12
    assert breakdown.halting == 0.0
    assert breakdown.confidence < 1e-12
    assert breakdown.efficiency == pytest.approx(rollout.steps - 1, abs=1e-12)
    assert breakdown.total == pytest.approx(rollout.steps - 1, abs=1e-10)


def test_total_weighting_reduces_to_correctness(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    inst = sample(spec, biased=False, seed=4)
    params = compile_program(ir, cfg, 3.0, pad="uniform")
    rollout = run_soft(params, inst.input_tape, cfg)
    w = LossWeights(1, 0, 0, 0)
    breakdown = loss_total(rollout, inst, w, cfg)
    assert breakdown.total == pytest.approx(
        loss_correctness(rollout.memory_history[-1], inst), abs=1e-12
    )


def test_total_nonnegative_random_rollouts():
    rng = np.random.default_rng(0)
    from test_soft import random_params

    cfg = MachineConfig(8, 4, max_steps=12)
    for seed in range(5):
        params = random_params(np.random.default_rng(seed), 8, 4, scale=2.0)
        tape = rng.integers(0, 8, 8).tolist()
        target = rng.integers(0, 8, 8).tolist()
        inst = TaskInstance(tuple(tape), tuple(target), (True,) * 8)
        rollout = run_soft(params, tape, cfg)
        breakdown = loss_total(rollout, inst, LossWeights(0.3, 1.2, 2.0, 0.1), cfg)
        assert breakdown.total >= 0
        for term in ("correctness", "halting", "confidence", "efficiency"):
            assert getattr(breakdown, term) >= -1e-12

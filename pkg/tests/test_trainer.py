import numpy as np
import pytest

from softmachine.compiler import KAPPA_SOFT, PARAM_KEYS, compile_program, perturb
from softmachine.isa import MachineConfig
from softmachine.loss import LossWeights, TaskInstance, loss_total
from softmachine.soft import run_soft
from softmachine.tasks import get_task, sample
from softmachine.trainer import (
    Adam,
    NonFiniteLossError,
    TrainingConfig,
    evaluate_soft,
    gradient,
    train,
)

from test_soft import random_params

W = LossWeights(1.0, 1.0, 1.0, 0.3)


def small_setup(seed=0, m=8, r=4):
    rng = np.random.default_rng(seed)
    cfg = MachineConfig(m, r, max_steps=8, stop_threshold=1.0)
    params = random_params(rng, m, r)
    tape = tuple(rng.integers(0, m, m).tolist())
    target = tuple(rng.integers(0, m, m).tolist())
    mask = tuple((rng.random(m) < 0.5).tolist())
    if not any(mask):
        mask = (True,) + mask[1:]
    return cfg, params, TaskInstance(tape, target, mask)


def max_rel_error(params, batch, cfg, h=1e-5, coords=40, seed=0):
    loss, grads = gradient(params, batch, W, cfg, eta=1.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for key in PARAM_KEYS:
        arr = getattr(params, key)
        flat = arr.ravel()
        picks = rng.choice(flat.size, size=min(coords, flat.size), replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + h
            plus, _ = gradient(params, batch, W, cfg, eta=1.0)
            flat[idx] = orig - h
            minus, _ = gradient(params, batch, W, cfg, eta=1.0)
            flat[idx] = orig
            fd = (plus - minus) / (2 * h)
            g = grads[key].ravel()[idx]
            if max(abs(g), abs(fd)) > 1e-6:
                worst = max(worst, abs(g - fd) / max(abs(g), abs(fd)))
    return worst


def test_gradient_matches_finite_differences():
    cfg, params, inst = small_setup(0)
    _, _, inst2 = small_setup(1)
    assert max_rel_error(params, [inst, inst2], cfg) < 1e-4


def test_gradient_check_holds_mid_training():
    spec = get_task("access")
    cfg = MachineConfig(8, 4, max_steps=8, stop_threshold=1.0)
    rng = np.random.default_rng(3)
    params = random_params(rng, 8, 4)
    adam = Adam(0.05)
    batch = [small_setup(s, 8, 4)[2] for s in range(4)]
    for it in range(15):
        loss, grads = gradient(params, batch, W, cfg, eta=1.0)
        adam.step(params, grads)
        if it in (4, 9, 14):
            assert max_rel_error(params, batch, cfg, coords=15, seed=it) < 1e-4


def test_duplicated_sample_same_gradient():
    cfg, params, inst = small_setup(5)
    loss1, grads1 = gradient(params, [inst], W, cfg)
    loss2, grads2 = gradient(params, [inst, inst], W, cfg)
    assert loss1 == pytest.approx(loss2, abs=1e-12)
    for key in PARAM_KEYS:
        np.testing.assert_allclose(grads1[key], grads2[key], atol=1e-12)


def test_empty_batch_rejected():
    cfg, params, _ = small_setup()
    with pytest.raises(ValueError):
        gradient(params, [], W, cfg)


def test_nonfinite_params_raise_carrying_terms():
    cfg, params, inst = small_setup(2)
    params.w_e[0, 0] = np.nan
    with pytest.raises((NonFiniteLossError, ValueError)):
        gradient(params, [inst], W, cfg)


def test_batched_loss_matches_per_sample_totals():
    """The trainer's batched objective equals the sum of single-rollout
    losses computed by the loss module (with the first-step confidence
    term the trainer enables)."""
    spec = get_task("access")
    cfg = spec.config(stop_threshold=0.9)
    ir = spec.generic_ir(cfg)
    params = perturb(compile_program(ir, cfg, KAPPA_SOFT, pad="uniform"), 0.8, seed=4)
    batch = [sample(spec, True, seed=s) for s in range(6)]
    w = LossWeights(0.7, 1.3, 2.0, 0.11)
    batched, _ = gradient(params, batch, w, cfg, eta=cfg.stop_threshold)
    singles = []
    for inst in batch:
        rollout = run_soft(params, inst.input_tape, cfg)
        singles.append(loss_total(rollout, inst, w, cfg, include_first_step=True).total)
    assert batched == pytest.approx(np.mean(singles), rel=1e-9)


def test_adam_matches_reference_formula():
    adam = Adam(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    rng = np.random.default_rng(0)
    from softmachine.compiler import Params

    params = Params(*[rng.normal(size=s) for s in
                      [(11, 4), (3, 4), (3, 4), (3, 4), (3, 4), (4,)]])
    before = params.w_e.copy()
    g = {k: np.ones_like(getattr(params, k)) for k in PARAM_KEYS}
    adam.step(params, g)
    # first step with unit gradient moves every entry by exactly -lr
    np.testing.assert_allclose(before - params.w_e, 0.1 * np.ones_like(before), atol=1e-9)


def test_zero_iteration_budget_returns_initialisation():
    tcfg = TrainingConfig(iterations=0, seeds=(0, 1), test_size=10, eval_every=0)
    report = train("access", tcfg)
    assert len(report.results) == 2
    assert all(not r.success for r in report.results)
    spec = get_task("access")
    cfg = spec.config(stop_threshold=tcfg.eta_stop)
    base = compile_program(spec.generic_ir(cfg), cfg, tcfg.kappa_soft, pad=tcfg.pad)
    for r in report.results:
        expected = perturb(base, tcfg.sigma, r.seed)
        np.testing.assert_array_equal(r.params.w_e, expected.w_e)
        assert np.isnan(r.final_loss)


def test_train_reproducible_bitwise():
    tcfg = TrainingConfig(iterations=12, seeds=(3,), batch_size=3, test_size=8,
                          eval_every=0, sigma=0.5)
    a = train("access", tcfg)
    b = train("access", tcfg)
    np.testing.assert_array_equal(a.results[0].params.w_e, b.results[0].params.w_e)
    assert a.results[0].loss_curve == b.results[0].loss_curve
    assert a.results[0].steps_learned == b.results[0].steps_learned


def test_success_requires_both_clauses():
    tcfg = TrainingConfig(iterations=0, seeds=(0,), test_size=10, eval_every=0, sigma=0.0)
    report = train("access", tcfg)
    r = report.results[0]
    # the unperturbed soft compilation answers correctly but is not faster
    assert not r.success
    assert r.steps_learned >= r.steps_generic or not r.correct


def test_evaluate_soft_counts_confidence():
    spec = get_task("access")
    cfg = spec.config()
    ir = spec.generic_ir(cfg)
    params = compile_program(ir, cfg, 50.0, pad="stop")
    instances = [sample(spec, True, seed=s) for s in range(10)]
    ev = evaluate_soft(params, instances, cfg, eta=0.9, min_confidence=0.9)
    assert ev.correct and ev.n_correct == 10
    assert ev.mean_steps == pytest.approx(5.0)
    # an impossible confidence bar fails every instance
    ev2 = evaluate_soft(params, instances, cfg, eta=0.9, min_confidence=1.1)
    assert not ev2.correct and ev2.n_correct == 0


def test_report_csv_columns(tmp_path):
    tcfg = TrainingConfig(iterations=2, seeds=(0, 1), batch_size=2, test_size=5,
                          eval_every=0)
    report = train("access", tcfg)
    path = tmp_path / "seeds.csv"
    report.write_csv(str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "seed,correct,steps_learned,steps_generic,success,class,final_loss"
    assert len(lines) == 3
    summary = report.summary()
    assert set(summary) >= {"task", "bias", "seeds", "success_rate", "steps_generic"}


def test_train_seed_divergence_is_recorded(monkeypatch):
    import softmachine.trainer as trainer_mod

    def boom(*args, **kwargs):
        raise NonFiniteLossError({"correctness": float("nan")})

    monkeypatch.setattr(trainer_mod, "gradient", boom)
    tcfg = TrainingConfig(iterations=5, seeds=(0,), test_size=5, eval_every=0)
    report = trainer_mod.train("access", tcfg)
    r = report.results[0]
    assert r.diverged and not r.success


def test_train_parallel_jobs_matches_sequential():
    tcfg = TrainingConfig(iterations=8, seeds=(0, 1), batch_size=3, test_size=6,
                          eval_every=0, sigma=0.5)
    seq = train("access", tcfg, jobs=1)
    par = train("access", tcfg, jobs=2)
    assert [r.seed for r in par.results] == [0, 1]
    for a, b in zip(seq.results, par.results):
        assert a.steps_learned == b.steps_learned
        np.testing.assert_array_equal(a.params.w_e, b.params.w_e)


def test_train_respects_machine_overrides():
    tcfg = TrainingConfig(iterations=1, seeds=(0,), batch_size=2, test_size=4,
                          eval_every=0)
    report = train("access", tcfg, mem_size=18, reg_count=7)
    assert report.results[0].params.mem_size == 18
    assert report.results[0].params.reg_count == 7

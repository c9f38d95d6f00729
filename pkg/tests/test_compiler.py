import numpy as np
import pytest

from softmachine.compiler import (
    KAPPA_SHARP,
    KAPPA_SOFT,
    compile_program,
    dump_params,
    parse_params,
    perturb,
)
from softmachine.decompile import decompile, to_ir
from softmachine.isa import MachineConfig, Opcode


def softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def test_shapes(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = compile_program(ir, cfg, KAPPA_SHARP)
    assert p.w_e.shape == (11, cfg.mem_size)
    for mat in (p.w_a, p.w_b, p.w_o, p.r0):
        assert mat.shape == (cfg.reg_count, cfg.mem_size)
    assert p.ir0.shape == (cfg.mem_size,)


def test_first_column_selects_first_line(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = compile_program(ir, cfg, KAPPA_SHARP)
    # line 0 reads through the register whose initial value is 1
    sel = int(p.w_a[:, 0].argmax())
    assert ir.initial_registers[sel] == 1
    assert int(p.w_e[:, 0].argmax()) == Opcode.READ


def test_sharp_mass_is_near_dirac(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = compile_program(ir, cfg, KAPPA_SHARP)
    for j in range(len(ir.lines)):
        for mat in (p.w_e, p.w_a, p.w_b, p.w_o):
            assert softmax(mat[:, j]).max() >= 1 - 1e-18


def test_soft_mass_is_argmax_correct_but_blurry(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    sharp = compile_program(ir, cfg, KAPPA_SHARP)
    soft = compile_program(ir, cfg, KAPPA_SOFT)
    for j in range(len(ir.lines)):
        for a, b in ((sharp.w_e, soft.w_e), (sharp.w_a, soft.w_a)):
            assert a[:, j].argmax() == b[:, j].argmax()
            top = softmax(b[:, j]).max()
            assert 0.85 < top < 0.98


def test_round_trip_through_decompiler(corpus_programs):
    for name, (spec, cfg, ir) in corpus_programs.items():
        p = compile_program(ir, cfg, KAPPA_SHARP)
        dec = decompile(p)
        back = to_ir(dec, len(ir.lines))
        assert back.lines == ir.lines, name
        assert back.initial_registers[: ir.n_registers] == ir.initial_registers
        assert dec.initial_ir.index == 0


def test_pad_stop_encodes_stop(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    p = compile_program(ir, cfg, KAPPA_SHARP, pad="stop")
    for j in range(len(ir.lines), cfg.mem_size):
        assert int(p.w_e[:, j].argmax()) == Opcode.STOP
        assert int(p.w_a[:, j].argmax()) == ir.scratch


def test_pad_uniform_leaves_zero_logits(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    p = compile_program(ir, cfg, KAPPA_SOFT, pad="uniform")
    for j in range(len(ir.lines), cfg.mem_size):
        assert (p.w_e[:, j] == 0).all()
        assert softmax(p.w_e[:, j]).max() == pytest.approx(1 / 11)


def test_initial_state_logits(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = compile_program(ir, cfg, KAPPA_SHARP)
    for i, value in enumerate(ir.initial_registers):
        assert int(p.r0[i].argmax()) == value
    # spare registers beyond the program default to zero
    for i in range(ir.n_registers, cfg.reg_count):
        assert int(p.r0[i].argmax()) == 0
    assert int(p.ir0.argmax()) == 0


def test_kappa_validation(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    with pytest.raises(ValueError):
        compile_program(ir, cfg, 0.0)
    with pytest.raises(ValueError):
        compile_program(ir, cfg, KAPPA_SHARP, pad="nonsense")


def test_dimension_mismatch(corpus_programs):
    spec, cfg, ir = corpus_programs["merge"]  # needs 15 registers
    with pytest.raises(ValueError):
        compile_program(ir, MachineConfig(30, 4), KAPPA_SHARP)


def test_perturb_zero_sigma_is_identity(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    p = compile_program(ir, cfg, KAPPA_SOFT)
    q = perturb(p, 0.0, seed=3)
    for key in ("w_e", "w_a", "w_b", "w_o", "r0", "ir0"):
        np.testing.assert_array_equal(getattr(p, key), getattr(q, key))


def test_perturb_small_sigma_keeps_argmax(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = compile_program(ir, cfg, KAPPA_SOFT)
    for seed in range(5):
        q = perturb(p, 0.1, seed=seed)
        for key in ("w_e", "w_a", "w_b", "w_o"):
            a, b = getattr(p, key), getattr(q, key)
            assert (a[:, : len(ir.lines)].argmax(0) == b[:, : len(ir.lines)].argmax(0)).all()


def test_perturb_large_sigma_still_valid(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    p = compile_program(ir, cfg, KAPPA_SOFT)
    q = perturb(p, 100.0, seed=0)
    q.check()  # finite, right shapes; argmaxes may differ


def test_perturb_deterministic(corpus_programs):
    spec, cfg, ir = corpus_programs["access"]
    p = compile_program(ir, cfg, KAPPA_SOFT)
    a, b = perturb(p, 0.5, seed=9), perturb(p, 0.5, seed=9)
    np.testing.assert_array_equal(a.w_e, b.w_e)
    c = perturb(p, 0.5, seed=10)
    assert not np.array_equal(a.w_e, c.w_e)


def test_params_text_round_trip(corpus_programs):
    spec, cfg, ir = corpus_programs["listk"]
    p = perturb(compile_program(ir, cfg, KAPPA_SOFT), 0.37, seed=1)
    q = parse_params(dump_params(p))
    for key in ("w_e", "w_a", "w_b", "w_o", "r0", "ir0"):
        np.testing.assert_array_equal(getattr(p, key), getattr(q, key))


def test_params_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_params("not a params file\n")

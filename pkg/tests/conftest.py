import numpy as np
import pytest

from softmachine.compiler import KAPPA_SHARP, compile_program
from softmachine.tasks import CORPUS_NAMES, get_task


@pytest.fixture(scope="session")
def corpus_programs():
    """(spec, cfg, ir) for every shipped program, lowered once."""
    out = {}
    for name in CORPUS_NAMES:
        spec = get_task(name)
        cfg = spec.config()
        out[name] = (spec, cfg, spec.generic_ir(cfg))
    return out


@pytest.fixture(scope="session")
def sharp_params(corpus_programs):
    return {
        name: compile_program(ir, cfg, KAPPA_SHARP, pad="stop")
        for name, (spec, cfg, ir) in corpus_programs.items()
    }


def rand_simplex(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.random(shape) + 1e-9
    return x / x.sum(axis=-1, keepdims=True)

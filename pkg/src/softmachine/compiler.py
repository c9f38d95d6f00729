"""Turn a lowered program into controller weights.

Each program line becomes one column of the four weight matrices: a logit
of ``kappa`` marks the selected row, everything else stays at zero, so the
softmax of column ``j`` is the command of line ``j``.  A large ``kappa``
(:data:`KAPPA_SHARP`) makes the controller reproduce the program exactly;
a small one (:data:`KAPPA_SOFT`) keeps the argmax correct while leaving
probability mass on the alternatives, which is what gradient descent
needs as a starting point.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from softmachine.isa import MachineConfig, N_OPCODES, Opcode
from softmachine.lang import IrProgram

KAPPA_SHARP = 50.0
KAPPA_SOFT = 5.0

PARAM_KEYS = ("w_e", "w_a", "w_b", "w_o", "r0", "ir0")


@dataclass
class Params:
    """The learnable set: four weight matrices plus initial-state logits.

    ``w_e`` is N x M (instruction choice per instruction-register value);
    ``w_a``, ``w_b``, ``w_o`` are R x M (argument and output registers);
    ``r0`` is R x M and ``ir0`` has length M (initial register and
    instruction-register value distributions, as logits).
    """

    w_e: np.ndarray
    w_a: np.ndarray
    w_b: np.ndarray
    w_o: np.ndarray
    r0: np.ndarray
    ir0: np.ndarray

    @property
    def mem_size(self) -> int:
        return self.w_e.shape[1]

    @property
    def reg_count(self) -> int:
        return self.w_a.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_KEYS}

    def copy(self) -> "Params":
        return Params(**{k: getattr(self, k).copy() for k in PARAM_KEYS})

    def check(self) -> None:
        n, m = self.w_e.shape
        r = self.w_a.shape[0]
        if n != N_OPCODES:
            raise ValueError(f"w_e must have {N_OPCODES} rows, got {n}")
        for k in ("w_a", "w_b", "w_o", "r0"):
            if getattr(self, k).shape != (r, m):
                raise ValueError(f"{k} must have shape ({r}, {m})")
        if self.ir0.shape != (m,):
            raise ValueError(f"ir0 must have shape ({m},)")
        for k in PARAM_KEYS:
            if not np.isfinite(getattr(self, k)).all():
                raise ValueError(f"{k} contains non-finite entries")


def compile_program(
    ir: IrProgram, cfg: MachineConfig, kappa: float = KAPPA_SHARP, pad: str = "stop"
) -> Params:
    """Encode ``ir`` as controller logits scaled by ``kappa``.

    Columns beyond the program length are padding.  ``pad="stop"`` encodes
    an explicit STOP with scratch arguments there, so an instruction
    register that drifts past the program halts instead of executing
    garbage; ``pad="uniform"`` leaves the logits at zero (a uniform
    command), the shape a learned controller typically shows in its
    unused rows.
    """
    if pad not in ("stop", "uniform"):
        raise ValueError(f"pad must be 'stop' or 'uniform', got {pad!r}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    m, r = cfg.mem_size, cfg.reg_count
    if len(ir.lines) > m:
        raise ValueError(f"program has {len(ir.lines)} lines, M={m}")
    if ir.n_registers > r:
        raise ValueError(f"program uses {ir.n_registers} registers, R={r}")

    w_e = np.zeros((N_OPCODES, m))
    w_a = np.zeros((r, m))
    w_b = np.zeros((r, m))
    w_o = np.zeros((r, m))
    for j, cmd in enumerate(ir.lines):
        w_e[cmd.instr, j] = kappa
        w_a[cmd.arg1, j] = kappa
        w_b[cmd.arg2, j] = kappa
        w_o[cmd.out, j] = kappa
    if pad == "stop":
        scr = ir.scratch
        for j in range(len(ir.lines), m):
            w_e[Opcode.STOP, j] = kappa
            w_a[scr, j] = kappa
            w_b[scr, j] = kappa
            w_o[scr, j] = kappa

    r0 = np.zeros((r, m))
    for i in range(r):
        value = ir.initial_registers[i] if i < ir.n_registers else 0
        r0[i, value] = kappa
    ir0 = np.zeros(m)
    ir0[0] = kappa
    return Params(w_e, w_a, w_b, w_o, r0, ir0)


def perturb(params: Params, noise_scale: float, seed: int) -> Params:
    """Add zero-mean Gaussian noise of scale ``noise_scale`` to every logit."""
    if noise_scale < 0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")
    rng = np.random.default_rng(seed)
    out = params.copy()
    for key in PARAM_KEYS:  # fixed order, so a seed pins the exact noise
        arr = getattr(out, key)
        arr += rng.normal(0.0, noise_scale, size=arr.shape) if noise_scale else 0.0
    return out


_PARAMS_HEADER = "softmachine-params 1"


def save_params(params: Params, path: str) -> None:
    params.check()
    with open(path, "w") as fh:
        fh.write(dump_params(params))


def dump_params(params: Params) -> str:
    buf = io.StringIO()
    n, m = params.w_e.shape
    r = params.w_a.shape[0]
    buf.write(f"{_PARAMS_HEADER}\n")
    buf.write(f"M {m} R {r} N {n}\n")
    for key in PARAM_KEYS:
        arr = np.atleast_2d(getattr(params, key))
        buf.write(f"{key}\n")
        for row in arr:
            buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def load_params(path: str) -> Params:
    with open(path) as fh:
        return parse_params(fh.read())


def parse_params(text: str) -> Params:
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _PARAMS_HEADER:
        raise ValueError("not a softmachine params file (missing header)")
    fields = lines[1].split()
    if len(fields) != 6 or fields[0] != "M" or fields[2] != "R" or fields[4] != "N":
        raise ValueError(f"malformed dimension line: {lines[1]!r}")
    m, r, n = int(fields[1]), int(fields[3]), int(fields[5])
    rows_for = {"w_e": n, "w_a": r, "w_b": r, "w_o": r, "r0": r, "ir0": 1}
    pos = 2
    arrays: dict[str, np.ndarray] = {}
    for key in PARAM_KEYS:
        if pos >= len(lines) or lines[pos] != key:
            raise ValueError(f"expected section {key!r} at line {pos + 1}")
        pos += 1
        rows = []
        for _ in range(rows_for[key]):
            rows.append([float(v) for v in lines[pos].split()])
            if len(rows[-1]) != m:
                raise ValueError(f"row in section {key!r} has wrong width")
            pos += 1
        arrays[key] = np.array(rows)
    arrays["ir0"] = arrays["ir0"].reshape(m)
    params = Params(**arrays)
    params.check()
    return params

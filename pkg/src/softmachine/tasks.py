"""Task corpus: tape encodings, instance samplers and reference solutions.

Every program under ``programs/`` gets a :class:`TaskSpec` with a machine
sizing, an unbiased sampler and (for the six trainable tasks) a biased
sampler whose structure a tuned program can exploit.  Expected outputs are
computed by plain Python reference implementations, independently of the
interpreters, so the samplers double as an oracle for the programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np

from softmachine.isa import MachineConfig
from softmachine.lang import IrProgram, parse_and_lower
from softmachine.loss import TaskInstance

CORPUS_NAMES = (
    "access",
    "copy",
    "increment",
    "reverse",
    "permutation",
    "swap",
    "listsearch",
    "listk",
    "walkbst",
    "merge",
    "dijkstra",
    "addition",
    "sort",
)

# Tasks with a biased input distribution and a training experiment.
EXPERIMENT_NAMES = ("access", "swap", "increment", "listk", "addition", "sort")

# Default bias parameters.
ACCESS_BIAS_K = 3
SWAP_BIAS_P = 1
SWAP_BIAS_Q = 3
INCREMENT_BIAS_LEN = 5
LISTK_BIAS_KS = (2, 3, 4)
SORT_LEN = 5
SORT_BIAS_PREFIX = 3
DIJKSTRA_BIG = 50


def program_source(name: str) -> str:
    path = resources.files("softmachine").joinpath(f"programs/{name}.anc")
    return path.read_text()


def corpus() -> list[tuple[str, str]]:
    """All shipped program sources, in canonical order."""
    return [(name, program_source(name)) for name in CORPUS_NAMES]


@dataclass(frozen=True)
class TaskSpec:
    """A task: machine sizing, program sources and instance samplers."""

    name: str
    mem_size: int
    reg_count: int
    max_steps: int
    generic_source: str
    ideal_source: str | None
    sampler: Callable[[np.random.Generator, int, bool], TaskInstance]

    def config(self, stop_threshold: float = 0.9) -> MachineConfig:
        return MachineConfig(
            mem_size=self.mem_size,
            reg_count=self.reg_count,
            max_steps=self.max_steps,
            stop_threshold=stop_threshold,
        )

    def generic_ir(self, cfg: MachineConfig | None = None) -> IrProgram:
        return parse_and_lower(self.generic_source, cfg or self.config())

    def ideal_ir(self, cfg: MachineConfig | None = None) -> IrProgram | None:
        if self.ideal_source is None:
            return None
        return parse_and_lower(self.ideal_source, cfg or self.config())


def sample(task: "TaskSpec | str", biased: bool, seed: int, mem_size: int | None = None) -> TaskInstance:
    """Draw one instance; the same seed always yields the same instance."""
    spec = get_task(task) if isinstance(task, str) else task
    rng = np.random.default_rng(seed)
    return spec.sampler(rng, mem_size or spec.mem_size, biased)


def sample_many(
    task: "TaskSpec | str", biased: bool, count: int, seed: int
) -> list[TaskInstance]:
    spec = get_task(task) if isinstance(task, str) else task
    root = np.random.default_rng(seed)
    return [spec.sampler(np.random.default_rng(s), spec.mem_size, biased)
            for s in root.integers(0, 2**63 - 1, size=count)]


_INSTANCE_HEADER = "softmachine-instance 1"


def instance_to_text(inst: TaskInstance) -> str:
    """Serialise one instance for experiment reproducibility."""
    return "\n".join(
        [
            _INSTANCE_HEADER,
            "input: " + " ".join(str(v) for v in inst.input_tape),
            "target: " + " ".join(str(v) for v in inst.target_tape),
            "mask: " + " ".join("1" if b else "0" for b in inst.mask),
            f"bias: {inst.bias_tag}",
        ]
    ) + "\n"


def instance_from_text(text: str) -> TaskInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _INSTANCE_HEADER:
        raise ValueError("not a softmachine instance (missing header)")
    fields: dict[str, str] = {}
    for ln in lines[1:]:
        key, _, value = ln.partition(":")
        fields[key.strip()] = value.strip()
    missing = {"input", "target", "mask"} - fields.keys()
    if missing:
        raise ValueError(f"instance is missing fields: {sorted(missing)}")
    return TaskInstance(
        input_tape=tuple(int(v) for v in fields["input"].split()),
        target_tape=tuple(int(v) for v in fields["target"].split()),
        mask=tuple(v == "1" for v in fields["mask"].split()),
        bias_tag=fields.get("bias", ""),
    )


def _tape(m: int, prefix: list[int]) -> tuple[int, ...]:
    if len(prefix) > m:
        raise ValueError(f"encoding needs {len(prefix)} cells, machine has {m}")
    bad = [v for v in prefix if not 0 <= v < m]
    if bad:
        raise ValueError(f"encoded values {bad} out of range for M={m}")
    return tuple(prefix) + (0,) * (m - len(prefix))


def _mask(m: int, cells) -> tuple[bool, ...]:
    mask = [False] * m
    for c in cells:
        mask[c] = True
    return tuple(mask)


# --- access ---------------------------------------------------------------


def _sample_access(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    if biased:
        k = ACCESS_BIAS_K
        length = int(rng.integers(k + 1, min(9, m - 2)))
    else:
        length = int(rng.integers(4, min(9, m - 2)))
        k = int(rng.integers(0, length))
    values = rng.integers(1, m, size=length).tolist()
    tape = _tape(m, [k] + values)
    target = (values[k],) + tape[1:]
    return TaskInstance(tape, target, _mask(m, [0]), "biased" if biased else "unbiased")


_ACCESS_IDEAL = f"""\
var v = 0

v = READ({ACCESS_BIAS_K + 1})
WRITE(0, v)
STOP()
"""


# --- copy / reverse -------------------------------------------------------


def _sample_copy_like(rng: np.random.Generator, m: int, reverse: bool) -> TaskInstance:
    length = int(rng.integers(3, 6))
    values = rng.integers(1, m, size=length).tolist()
    dest = int(rng.integers(length + 2, m - length))
    tape = _tape(m, [dest] + values)
    out = list(tape)
    written = values[::-1] if reverse else values
    out[dest : dest + length] = written
    return TaskInstance(tape, tuple(out), _mask(m, range(dest, dest + length)), "unbiased")


def _sample_copy(rng, m, biased):
    return _sample_copy_like(rng, m, reverse=False)


def _sample_reverse(rng, m, biased):
    return _sample_copy_like(rng, m, reverse=True)


# --- increment ------------------------------------------------------------


def _sample_increment(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    if biased:
        length = INCREMENT_BIAS_LEN
        values = [int(rng.integers(1, m - 1))] * length
    else:
        length = int(rng.integers(3, 8))
        values = rng.integers(1, m - 1, size=length).tolist()
    tape = _tape(m, values)
    target = tuple(v + 1 for v in values) + tape[length:]
    return TaskInstance(tape, target, _mask(m, range(length)), "biased" if biased else "unbiased")


# --- permutation ----------------------------------------------------------


def _sample_permutation(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    length = int(rng.integers(3, 6))
    indices = (rng.permutation(length) + 1).tolist()
    values = rng.integers(1, m, size=length).tolist()
    tape = _tape(m, indices + [0] + values)
    out = list(tape)
    out[:length] = [values[i - 1] for i in indices]
    return TaskInstance(tape, tuple(out), _mask(m, range(length)), "unbiased")


# --- swap -----------------------------------------------------------------


def _sample_swap(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    length = int(rng.integers(4, min(9, m - 3)))
    if biased:
        p, q = SWAP_BIAS_P, SWAP_BIAS_Q
    else:
        p, q = rng.choice(length, size=2, replace=False).tolist()
    values = rng.integers(1, m, size=length).tolist()
    tape = _tape(m, [p, q] + values)
    out = list(tape)
    out[2 + p], out[2 + q] = out[2 + q], out[2 + p]
    return TaskInstance(
        tape, tuple(out), _mask(m, range(2, 2 + length)), "biased" if biased else "unbiased"
    )


_SWAP_IDEAL = f"""\
var p_val = 0
var q_val = 0

p_val = READ({SWAP_BIAS_P + 2})
q_val = READ({SWAP_BIAS_Q + 2})
WRITE({SWAP_BIAS_Q + 2}, p_val)
WRITE({SWAP_BIAS_P + 2}, q_val)
STOP()
"""


# --- linked lists (listsearch / listk) ------------------------------------


def _linked_list_layout(
    rng: np.random.Generator, m: int, n_elems: int, values: list[int], ordered: bool
) -> tuple[int, list[int]]:
    """Place a linked list on the tape; returns (head, prefix cells)."""
    slots = list(range(3, m - 1, 2))[: (m - 4) // 2]
    if n_elems > len(slots):
        raise ValueError("list does not fit")
    order = list(range(n_elems)) if ordered else rng.permutation(len(slots))[:n_elems].tolist()
    cells = [0] * (m - 0)
    positions = [slots[i] for i in order]
    for i, pos in enumerate(positions):
        nxt = positions[i + 1] if i + 1 < n_elems else 0
        cells[pos] = nxt
        cells[pos + 1] = values[i]
    return positions[0], cells


def _sample_listk(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    k = int(rng.choice(LISTK_BIAS_KS))
    n_elems = int(rng.integers(k, min(8, (m - 4) // 2) + 1))
    values = rng.integers(1, m, size=n_elems).tolist()
    head, cells = _linked_list_layout(rng, m, n_elems, values, ordered=biased)
    cells[0], cells[1], cells[2] = head, k, 2
    tape = _tape(m, cells)
    out = list(tape)
    out[2] = values[k - 1]
    return TaskInstance(tape, tuple(out), _mask(m, [2]), "biased" if biased else "unbiased")


_LISTK_IDEAL = """\
var k = 0
var out = 0

k = READ(1)
out = READ(2)
k = ADD(k, k)
k = INC(k)
k = INC(k)
k = READ(k)
WRITE(out, k)
STOP()
"""


def _sample_listsearch(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    n_elems = int(rng.integers(2, 5))
    values = (rng.permutation(m - 1)[:n_elems] + 1).tolist()
    head, cells = _linked_list_layout(rng, m, n_elems, values, ordered=False)
    wanted = int(rng.integers(0, n_elems))
    cells[0], cells[1], cells[2] = head, values[wanted], 2
    tape = _tape(m, cells)
    # pointer of the matching element: walk the chain like the program does
    pos = head
    for _ in range(wanted):
        pos = tape[pos]
    out = list(tape)
    out[2] = pos
    return TaskInstance(tape, tuple(out), _mask(m, [2]), "unbiased")


# --- walkbst ----------------------------------------------------------------


def _sample_walkbst(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    n_nodes = int(rng.integers(2, 5))
    children: list[list[int]] = [[0, 0] for _ in range(n_nodes)]
    for i in range(1, n_nodes):
        open_slots = [
            (p, s) for p in range(i) for s in (0, 1) if children[p][s] == 0
        ]
        p, s = open_slots[rng.integers(0, len(open_slots))]
        children[p][s] = i
    # random valid walk from the root
    path: list[int] = []
    node = 0
    while True:
        options = [d for d in (0, 1) if children[node][d] != 0]
        if not options or rng.random() < 0.35 or len(path) >= 3:
            break
        d = int(options[rng.integers(0, len(options))])
        path.append(d + 1)  # 1 = left, 2 = right
        node = children[node][d]
    base = 2 + len(path) + 1
    addr = [base + 3 * i for i in range(n_nodes)]
    values = rng.integers(1, m, size=n_nodes).tolist()
    cells = [0] * (base + 3 * n_nodes)
    cells[0] = addr[0]
    cells[1] = 1  # result cell
    cells[2 : 2 + len(path)] = path
    for i in range(n_nodes):
        cells[addr[i]] = values[i]
        cells[addr[i] + 1] = addr[children[i][0]] if children[i][0] else 0
        cells[addr[i] + 2] = addr[children[i][1]] if children[i][1] else 0
    tape = _tape(m, cells)
    out = list(tape)
    out[1] = values[node]
    return TaskInstance(tape, tuple(out), _mask(m, [1]), "unbiased")


# --- merge ------------------------------------------------------------------


def _merge_desc(first: list[int], second: list[int]) -> list[int]:
    out: list[int] = []
    i = j = 0
    while i < len(first) and j < len(second):
        if first[i] > second[j]:
            out.append(first[i])
            i += 1
        else:
            out.append(second[j])
            j += 1
    return out + first[i:] + second[j:]


def _sample_merge(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    l1 = int(rng.integers(1, 5))
    l2 = int(rng.integers(1, 5))
    first = sorted(rng.integers(1, m, size=l1).tolist(), reverse=True)
    second = sorted(rng.integers(1, m, size=l2).tolist(), reverse=True)
    p1 = 3
    p2 = p1 + l1 + 1
    p_out = p2 + l2 + 1
    cells = [p1, p2, p_out] + first + [0] + second + [0]
    tape = _tape(m, cells)
    merged = _merge_desc(first, second)
    out = list(tape)
    out[p_out : p_out + len(merged)] = merged
    return TaskInstance(
        tape, tuple(out), _mask(m, range(p_out, p_out + len(merged))), "unbiased"
    )


# --- dijkstra ---------------------------------------------------------------


def _shortest_paths(n: int, edges: list[list[tuple[int, int]]], big: int) -> list[int]:
    dist = [big] * n
    dist[0] = 0
    visited = [False] * n
    for _ in range(n):
        u, best = -1, big
        for i in range(n):
            if not visited[i] and dist[i] < best:
                u, best = i, dist[i]
        if u < 0:
            break
        visited[u] = True
        for child, w in edges[u]:
            if dist[u] + w < dist[child]:
                dist[child] = dist[u] + w
    return dist


def _sample_dijkstra(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    n = int(rng.integers(2, 6))
    edges: list[list[tuple[int, int]]] = []
    for i in range(n):
        degree = int(rng.integers(0, 3))
        targets = [t for t in range(n) if t != i]
        rng.shuffle(targets)
        edges.append([(t, int(rng.integers(1, 10))) for t in targets[:degree]])

    list_base = 1 + n + 1
    addrs = []
    pos = list_base
    for i in range(n):
        addrs.append(pos)
        pos += 2 * len(edges[i]) + 1
    p_out = pos
    cells = [0] * (p_out + 2 * n)
    cells[0] = p_out
    for i in range(n):
        cells[1 + i] = addrs[i]
        at = addrs[i]
        for child, w in edges[i]:
            cells[at], cells[at + 1] = child + 1, w
            at += 2
    tape = _tape(m, cells)

    dist = _shortest_paths(n, edges, DIJKSTRA_BIG)
    out = list(tape)
    for i in range(n):
        reached = dist[i] < DIJKSTRA_BIG
        out[p_out + 2 * i] = dist[i]
        out[p_out + 2 * i + 1] = 0 if reached else 1
    return TaskInstance(
        tape, tuple(out), _mask(m, range(p_out, p_out + 2 * n)), "unbiased"
    )


# --- addition ---------------------------------------------------------------


def _sample_addition(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    a = int(rng.integers(1, 13))
    b = int(rng.integers(1, 7))
    tape = _tape(m, [a, b])
    out = list(tape)
    out[2] = a + b
    return TaskInstance(tape, tuple(out), _mask(m, [2]), "unbiased")


_ADDITION_IDEAL = """\
var a = 0
var b = 0

a = READ(0)
b = READ(1)
a = ADD(a, b)
WRITE(2, a)
STOP()
"""


# --- sort -------------------------------------------------------------------


def _sample_sort(rng: np.random.Generator, m: int, biased: bool) -> TaskInstance:
    length = SORT_LEN if biased else int(rng.integers(4, 7))
    values = sorted(rng.integers(1, m, size=length).tolist())
    if biased:
        prefix = values[:SORT_BIAS_PREFIX]
        rng.shuffle(prefix)
        scrambled = prefix + values[SORT_BIAS_PREFIX:]
    else:
        scrambled = values[:]
        rng.shuffle(scrambled)
    tape = _tape(m, scrambled)
    target = tuple(sorted(scrambled)) + tape[length:]
    return TaskInstance(tape, target, _mask(m, range(length)), "biased" if biased else "unbiased")


_SPECS: dict[str, tuple[int, int, int, str | None, Callable]] = {
    #               M    R   T_max  ideal
    "access":      (15,  6,   20, _ACCESS_IDEAL, _sample_access),
    "copy":        (15,  7,   60, None, _sample_copy),
    "increment":   (15,  7,   60, None, _sample_increment),
    "reverse":     (15,  8,   80, None, _sample_reverse),
    "permutation": (15,  7,   90, None, _sample_permutation),
    "swap":        (15,  9,   30, _SWAP_IDEAL, _sample_swap),
    "listsearch":  (15,  9,   60, None, _sample_listsearch),
    "listk":       (20,  9,   45, _LISTK_IDEAL, _sample_listk),
    "walkbst":     (30,  9,   60, None, _sample_walkbst),
    "merge":       (30, 15,  180, None, _sample_merge),
    "dijkstra":    (64, 22, 1500, None, _sample_dijkstra),
    "addition":    (25,  8,   50, _ADDITION_IDEAL, _sample_addition),
    "sort":        (20, 12,  400, None, _sample_sort),
}


@lru_cache(maxsize=None)
def get_task(name: str) -> TaskSpec:
    if name not in _SPECS:
        raise KeyError(f"unknown task {name!r}; known: {', '.join(CORPUS_NAMES)}")
    m, r, t_max, ideal, sampler = _SPECS[name]
    return TaskSpec(
        name=name,
        mem_size=m,
        reg_count=r,
        max_steps=t_max,
        generic_source=program_source(name),
        ideal_source=ideal,
        sampler=sampler,
    )

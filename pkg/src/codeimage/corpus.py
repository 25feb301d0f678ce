"""Synthetic paired vulnerable/safe C functions.

Each pair shares its signature, identifiers and filler statements; the two
variants differ only in the few lines that introduce or guard against the
flaw (unchecked copies, unvalidated indices, format strings, off-by-one
loops, unchecked allocation sizes, dangling pointers).
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import SAFE, VULNERABLE, FunctionSample, extract_functions

_NAMES = """buf data input len count idx value total size ptr msg item node cur
offset limit tmp acc flag res state key entry pos width height score step
chunk part text line field mode slot""".split()
_FUNCS = """process handle parse copy update read_packet store load build
render decode encode fill apply merge scan emit pack unpack dispatch""".split()
_HELPERS = ["log_event", "notify", "checksum", "trace_value", "record"]


@dataclass(frozen=True)
class PairSource:
    index: int
    vulnerable: str
    safe: str


class _Names:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def fresh(self, pool=_NAMES) -> str:
        while True:
            base = pool[self.rng.integers(len(pool))]
            name = base if base not in self.used else f"{base}{self.rng.integers(2, 99)}"
            if name not in self.used:
                self.used.add(name)
                return name


def _filler(rng: np.random.Generator, names: _Names, count: int, ind: str = "    ") -> list[str]:
    """Benign statements totalling exactly ``count`` lines."""
    out: list[str] = []
    locals_: list[str] = []
    while len(out) < count:
        room = count - len(out)
        choice = rng.integers(6)
        if not locals_ or (choice == 0 and len(locals_) < 6):
            v = names.fresh()
            locals_.append(v)
            out.append(f"{ind}int {v} = {rng.integers(0, 100)};")
        elif choice == 1:
            v = locals_[rng.integers(len(locals_))]
            out.append(f"{ind}{v} = {v} + {rng.integers(1, 9)};")
        elif choice == 2:
            v = locals_[rng.integers(len(locals_))]
            helper = _HELPERS[rng.integers(len(_HELPERS))]
            comment = "  // bookkeeping" if rng.random() < 0.3 else ""
            out.append(f'{ind}{helper}("{helper} %d", {v});{comment}')
        elif choice == 3 and room >= 3:
            v = locals_[rng.integers(len(locals_))]
            out.append(f"{ind}if ({v} > {rng.integers(10, 90)}) {{")
            out.append(f"{ind}    {v} = {v} - {rng.integers(1, 9)};")
            out.append(f"{ind}}}")
        elif choice == 4 and room >= 3:
            v = locals_[rng.integers(len(locals_))]
            j = names.fresh()
            out.append(f"{ind}for (int {j} = 0; {j} < {rng.integers(2, 16)}; {j}++) {{")
            out.append(f"{ind}    {v} += {j};")
            out.append(f"{ind}}}")
        else:
            v = locals_[rng.integers(len(locals_))]
            out.append(f"{ind}{v} *= {rng.integers(2, 5)};")
    return out


def _template(kind: int, names: _Names, rng: np.random.Generator):
    """(signature, prologue, vulnerable core, safe core, epilogue)."""
    size = int(rng.choice([16, 32, 64, 128, 256]))
    i = "    "
    if kind == 0:  # unchecked string copy into a fixed buffer
        src, buf = names.fresh(), names.fresh()
        return (
            f"void {{f}}(const char *{src})",
            [f"{i}char {buf}[{size}];"],
            [f"{i}strcpy({buf}, {src});"],
            [f"{i}strncpy({buf}, {src}, sizeof({buf}) - 1);", f"{i}{buf}[sizeof({buf}) - 1] = '\\0';"],
            [f'{i}printf("%s\\n", {buf});'],
        )
    if kind == 1:  # unvalidated array index
        arr, idx, val = names.fresh(), names.fresh(), names.fresh()
        return (
            f"int {{f}}(int *{arr}, int {idx}, int {val})",
            [],
            [f"{i}{arr}[{idx}] = {val};"],
            [f"{i}if ({idx} < 0 || {idx} >= {size}) {{", f"{i}    return -1;", f"{i}}}", f"{i}{arr}[{idx}] = {val};"],
            [f"{i}return 0;"],
        )
    if kind == 2:  # caller-controlled memcpy length
        data, n, buf = names.fresh(), names.fresh(), names.fresh()
        return (
            f"void {{f}}(const char *{data}, size_t {n})",
            [f"{i}char {buf}[{size}];"],
            [f"{i}memcpy({buf}, {data}, {n});"],
            [f"{i}if ({n} > sizeof({buf})) {{", f"{i}    {n} = sizeof({buf});", f"{i}}}", f"{i}memcpy({buf}, {data}, {n});"],
            [f"{i}consume({buf}, {n});"],
        )
    if kind == 3:  # unbounded read from stdin
        buf = names.fresh()
        return (
            "int {f}(void)",
            [f"{i}char {buf}[{size}];"],
            [f"{i}gets({buf});"],
            [f"{i}fgets({buf}, sizeof({buf}), stdin);"],
            [f"{i}return (int)strlen({buf});"],
        )
    if kind == 4:  # format string
        msg = names.fresh()
        return (
            f"void {{f}}(const char *{msg})",
            [],
            [f"{i}printf({msg});"],
            [f'{i}printf("%s", {msg});'],
            [f"{i}fflush(stdout);"],
        )
    if kind == 5:  # off-by-one write loop
        arr, j = names.fresh(), names.fresh()
        return (
            "void {f}(void)",
            [f"{i}int {arr}[{size}];"],
            [f"{i}for (int {j} = 0; {j} <= {size}; {j}++) {{", f"{i}    {arr}[{j}] = {j};", f"{i}}}"],
            [f"{i}for (int {j} = 0; {j} < {size}; {j}++) {{", f"{i}    {arr}[{j}] = {j};", f"{i}}}"],
            [f"{i}consume({arr}, {size});"],
        )
    if kind == 6:  # allocation size without an upper bound
        cnt, ptr = names.fresh(), names.fresh()
        return (
            f"int *{{f}}(unsigned int {cnt})",
            [f"{i}int *{ptr};"],
            [f"{i}{ptr} = malloc({cnt} * sizeof(int));"],
            [f"{i}if ({cnt} > {size * 1024}) {{", f"{i}    return NULL;", f"{i}}}", f"{i}{ptr} = malloc({cnt} * sizeof(int));"],
            [f"{i}return {ptr};"],
        )
    # kind 7: pointer used after free
    ptr, out = names.fresh(), names.fresh()
    return (
        f"int {{f}}(struct item *{ptr})",
        [f"{i}int {out} = 0;"],
        [f"{i}free({ptr});", f"{i}{out} = {ptr}->value;"],
        [f"{i}{out} = {ptr}->value;", f"{i}free({ptr});", f"{i}{ptr} = NULL;"],
        [f"{i}return {out};"],
    )


N_TEMPLATES = 8


def synthetic_pairs(num_pairs: int, seed: int = 0) -> list[PairSource]:
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for index in range(num_pairs):
        names = _Names(rng)
        kind = index % N_TEMPLATES if index < N_TEMPLATES else int(rng.integers(N_TEMPLATES))
        signature, pro, vul, safe, epi = _template(kind, names, rng)
        fname = names.fresh(_FUNCS)
        fixed = 2 + len(pro) + len(epi)
        longest = max(len(vul), len(safe))
        target = int(rng.integers(10, 61 - (longest - min(len(vul), len(safe)))))
        budget = max(0, target - fixed - min(len(vul), len(safe)))
        before = int(rng.integers(0, budget + 1))
        head = _filler(rng, names, before)
        tail = _filler(rng, names, budget - before)
        header = f"/* synthetic pair {index}, template {kind} */\n"

        def render(core):
            body = [signature.format(f=fname) + " {"] + pro + head + core + tail + epi + ["}"]
            return header + "\n".join(body) + "\n"

        pairs.append(PairSource(index, render(vul), render(safe)))
    return pairs


def pair_paths(index: int) -> tuple[str, str]:
    return f"{VULNERABLE}/pair_{index:04d}.c", f"{SAFE}/pair_{index:04d}.c"


def generate_synthetic_corpus(num_pairs: int, seed: int = 0) -> list[FunctionSample]:
    """Vulnerable and safe samples (raw, not yet normalized), pair by pair."""
    samples = []
    for pair in synthetic_pairs(num_pairs, seed):
        vpath, spath = pair_paths(pair.index)
        samples.extend(extract_functions(pair.vulnerable, vpath, VULNERABLE))
        samples.extend(extract_functions(pair.safe, spath, SAFE))
    return samples


def write_synthetic_corpus(out_dir, num_pairs: int, seed: int = 0) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for pair in synthetic_pairs(num_pairs, seed):
        for rel, text in zip(pair_paths(pair.index), (pair.vulnerable, pair.safe)):
            path = out_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            written.append(path)
    return written


def line_diff_size(a: list[str] | tuple[str, ...], b: list[str] | tuple[str, ...]) -> int:
    """Lines touched by the edit script from ``a`` to ``b``."""
    ops = difflib.SequenceMatcher(a=list(a), b=list(b), autojunk=False).get_opcodes()
    return sum(max(i2 - i1, j2 - j1) for tag, i1, i2, j1, j2 in ops if tag != "equal")

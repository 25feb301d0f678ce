"""Function extraction and normalization for C-family source files."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import UnbalancedBraces
from .lexer import (
    C_KEYWORDS,
    QUALIFIERS,
    TYPE_KEYWORDS,
    Token,
    mask_source,
    strip_comments,
    tokenize_lines,
)

VULNERABLE, SAFE, UNLABELED = "vulnerable", "safe", "unlabeled"
LABELS = (VULNERABLE, SAFE, UNLABELED)

_LABEL_ALIASES = {
    "vulnerable": VULNERABLE, "vuln": VULNERABLE, "bad": VULNERABLE, "1": VULNERABLE,
    "safe": SAFE, "good": SAFE, "benign": SAFE, "0": SAFE,
}
SOURCE_SUFFIXES = (".c", ".h", ".cc", ".cpp", ".cxx", ".hpp")

_CONTROL_WORDS = frozenset({"if", "for", "while", "switch", "do", "else", "return"})
_DECL_FOLLOWERS = frozenset({"=", ",", "[", ";", ")"})


@dataclass(frozen=True)
class Origin:
    path: str
    start: int  # byte offsets into the UTF-8 encoded file
    end: int


@dataclass(frozen=True)
class FunctionSample:
    id: str
    origin: Origin
    lines: tuple[str, ...]
    label: str = UNLABELED
    name: str = ""

    @property
    def line_count(self) -> int:
        return len(self.lines)


def canonical_label(raw: str) -> str:
    return _LABEL_ALIASES.get(raw.strip().lower(), UNLABELED)


def sample_id(path: str, start: int, end: int) -> str:
    return hashlib.sha1(f"{path}:{start}:{end}".encode()).hexdigest()[:16]


def _is_function_header(chunk: str) -> bool:
    body = chunk.strip()
    if "(" not in body or not body.endswith(")"):
        return False
    first = re.match(r"[A-Za-z_]\w*", body)
    if first and first.group() in _CONTROL_WORDS:
        return False
    depth = 0
    for c in body:
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        elif c == "=" and depth == 0:
            return False
    return True


def _header_name(chunk: str) -> str:
    m = re.search(r"([A-Za-z_]\w*)\s*\(", chunk)
    return m.group(1) if m else ""


def extract_functions(
    source_text: str, origin: str | Path, label: str = UNLABELED
) -> list[FunctionSample]:
    """Return one sample per top-level function definition, in file order."""
    path = str(origin)
    if not source_text.strip():
        return []
    masked = mask_source(source_text, strings=True, preprocessor=True)
    found: list[tuple[int, int, str]] = []
    depth = 0
    boundary = 0
    open_pos = -1
    in_function = False
    for pos, c in enumerate(masked):
        if c == "{":
            if depth == 0:
                open_pos = pos
                chunk = masked[boundary:pos]
                in_function = _is_function_header(chunk)
                if in_function:
                    sig = boundary + (len(chunk) - len(chunk.lstrip()))
                    line_start = masked.rfind("\n", 0, sig) + 1
                    start = line_start if not masked[line_start:sig].strip() else sig
                    name = _header_name(chunk)
            depth += 1
        elif c == "}":
            depth -= 1
            if depth < 0:
                raise UnbalancedBraces("unmatched '}'", pos)
            if depth == 0:
                if in_function:
                    found.append((start, pos + 1, name))
                in_function = False
                boundary = pos + 1
        elif c == ";" and depth == 0:
            boundary = pos + 1
    if depth != 0:
        raise UnbalancedBraces("unclosed '{'", open_pos)

    samples = []
    for start, end, name in found:
        raw = source_text[start:end]
        b_start = len(source_text[:start].encode("utf-8"))
        b_end = b_start + len(raw.encode("utf-8"))
        lines = tuple(line.rstrip("\r") for line in raw.split("\n"))
        samples.append(
            FunctionSample(
                id=sample_id(path, b_start, b_end),
                origin=Origin(path, b_start, b_end),
                lines=lines,
                label=label,
                name=name,
            )
        )
    return samples


# -- normalization -----------------------------------------------------------


def _match_paren(tokens: Sequence[Token], open_index: int) -> int:
    depth = 0
    for j in range(open_index, len(tokens)):
        if tokens[j].text == "(":
            depth += 1
        elif tokens[j].text == ")":
            depth -= 1
            if depth == 0:
                return j
    return len(tokens) - 1


def find_header(tokens: Sequence[Token]) -> tuple[int, int, int] | None:
    """Locate a function header as (name index, params open, body brace).

    Returns None when the token stream is a bare statement list.
    """
    for i, tok in enumerate(tokens):
        if tok.text == ";":
            return None
        if tok.text == "{":
            break
    else:
        return None
    brace = i
    if brace < 3 or tokens[brace - 1].text != ")":
        return None
    for j in range(brace):
        if tokens[j].text == "(":
            if j == 0 or tokens[j - 1].kind != "ident":
                return None
            if tokens[j - 1].text in C_KEYWORDS or tokens[0].text in _CONTROL_WORDS:
                return None
            return j - 1, j, brace
    return None


def _split_top(tokens: Sequence[Token], sep: str) -> list[list[Token]]:
    parts: list[list[Token]] = [[]]
    depth = 0
    for tok in tokens:
        if tok.text in "([{":
            depth += 1
        elif tok.text in ")]}":
            depth -= 1
        if tok.text == sep and depth == 0:
            parts.append([])
        else:
            parts[-1].append(tok)
    return [p for p in parts if p]


def _plain_ident(tok: Token) -> bool:
    return tok.kind == "ident" and tok.text not in C_KEYWORDS and tok.text not in TYPE_KEYWORDS


def declared_names(segment: Sequence[Token]) -> list[Token]:
    """Declarator name tokens if ``segment`` is a declaration, else []."""
    i, n = 0, len(segment)
    saw_type = False
    while i < n:
        text = segment[i].text
        if text in QUALIFIERS:
            i += 1
        elif text in TYPE_KEYWORDS:
            saw_type = True
            i += 1
        elif text in ("struct", "union", "enum") and i + 1 < n and segment[i + 1].kind == "ident":
            saw_type = True
            i += 2
        else:
            break
    if not saw_type:
        # typedef-name heuristic: `T x`, `T *x`, `T x = ...`, `T x[...]`
        if i >= n or not _plain_ident(segment[i]):
            return []
        j = i + 1
        while j < n and (segment[j].text == "*" or segment[j].text in QUALIFIERS):
            j += 1
        if j >= n or not _plain_ident(segment[j]):
            return []
        if j + 1 < n and segment[j + 1].text not in _DECL_FOLLOWERS:
            return []
        i += 1
    names = []
    for decl in _split_top(segment[i:], ","):
        for k, tok in enumerate(decl):
            if tok.text in ("*", "(") or tok.text in QUALIFIERS:
                continue
            if _plain_ident(tok):
                # `int f(int);` declares a function, not a variable
                if k + 1 < len(decl) and decl[k + 1].text == "(":
                    break
                names.append(tok)
            break
    return names


def parameter_names(params: Sequence[Token]) -> list[Token]:
    names = []
    for param in _split_top(params, ","):
        if len(param) < 2:
            continue
        # function-pointer parameter: ( * name ) ( ... )
        for k in range(len(param) - 2):
            if param[k].text == "(" and param[k + 1].text == "*" and _plain_ident(param[k + 2]):
                names.append(param[k + 2])
                break
        else:
            depth = 0
            candidate = None
            for tok in param:
                if tok.text in "[(":
                    depth += 1
                elif tok.text in "])":
                    depth -= 1
                elif depth == 0 and _plain_ident(tok):
                    candidate = tok
            if candidate is not None and candidate is not param[0]:
                names.append(candidate)
    return names


def _body_segments(tokens: Sequence[Token]) -> Iterable[list[Token]]:
    segment: list[Token] = []
    depth = 0
    for idx, tok in enumerate(tokens):
        if tok.text == "(":
            depth += 1
            # a `for (` header's init clause may hold a declaration
            if idx > 0 and tokens[idx - 1].text == "for":
                init = []
                for inner in tokens[idx + 1:]:
                    if inner.text == ";":
                        break
                    init.append(inner)
                yield init
        elif tok.text == ")":
            depth -= 1
        if depth == 0 and tok.text in (";", "{", "}"):
            if segment:
                yield segment
            segment = []
        elif tok.kind != "preproc":
            segment.append(tok)
    if segment:
        yield segment


def _strip_control_prefix(segment: list[Token]) -> list[Token]:
    while segment and segment[0].text in ("else", "do"):
        segment = segment[1:]
    return segment


def normalize(sample: FunctionSample, defined_functions: Iterable[str] = ()) -> FunctionSample:
    """Strip comments and rename the function and its local variables.

    The defined function becomes FUNC1; other functions named in
    ``defined_functions`` (defined in the same translation unit) become
    FUNC2, FUNC3, ... in order of first appearance. Parameters and local
    variables become VAR1, VAR2, ... in order of first appearance. Blank
    lines are dropped and trailing whitespace is trimmed.
    """
    text = strip_comments("\n".join(sample.lines))
    lines = [line.rstrip() for line in text.split("\n")]
    lines = [line for line in lines if line.strip()]
    tokens = tokenize_lines(lines)

    header = find_header(tokens)
    variables: set[str] = set()
    func_map: dict[str, str] = {}
    body = tokens
    if header is not None:
        name_i, open_i, brace_i = header
        func_map[tokens[name_i].text] = "FUNC1"
        close_i = _match_paren(tokens, open_i)
        variables.update(t.text for t in parameter_names(tokens[open_i + 1:close_i]))
        body = tokens[brace_i:]
    for segment in _body_segments(body):
        variables.update(t.text for t in declared_names(_strip_control_prefix(segment)))
    others = set(defined_functions) - set(func_map)
    variables -= set(func_map) | others

    var_map: dict[str, str] = {}
    edits: dict[int, list[tuple[int, int, str]]] = {}
    prev = None
    for tok in tokens:
        if tok.kind == "ident" and not (prev is not None and prev.text in (".", "->")):
            new = None
            if tok.text in func_map:
                new = func_map[tok.text]
            elif tok.text in others:
                new = func_map.setdefault(tok.text, f"FUNC{len(func_map) + 1}")
            elif tok.text in variables:
                new = var_map.setdefault(tok.text, f"VAR{len(var_map) + 1}")
            if new is not None and new != tok.text:
                edits.setdefault(tok.line, []).append((tok.start, tok.end, new))
        prev = tok
    for index, spans in edits.items():
        line = lines[index]
        for start, end, new in sorted(spans, reverse=True):
            line = line[:start] + new + line[end:]
        lines[index] = line
    return replace(sample, lines=tuple(lines))


def filter_short(samples: Iterable[FunctionSample], min_lines: int = 10) -> list[FunctionSample]:
    if min_lines < 1:
        raise ValueError("min_lines must be >= 1")
    return [s for s in samples if s.line_count >= min_lines]


# -- corpus I/O --------------------------------------------------------------


def extract_and_normalize(text: str, path: str, label: str) -> list[FunctionSample]:
    raw = extract_functions(text, path, label)
    defined = {s.name for s in raw if s.name}
    return [normalize(s, defined - {s.name}) for s in raw]


def load_corpus(root: str | Path, *, min_lines: int = 10) -> list[FunctionSample]:
    """Load ``root/<label>/<file>`` or a ``root/manifest.csv`` corpus.

    Samples come back normalized, filtered by length and sorted by id.
    """
    root = Path(root)
    samples: list[FunctionSample] = []
    manifest = root / "manifest.csv"
    if manifest.exists():
        with manifest.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        cache: dict[str, list[FunctionSample]] = {}
        for row in rows:
            rel = row["path"]
            if rel not in cache:
                cache[rel] = extract_and_normalize(
                    (root / rel).read_text(encoding="utf-8"), rel, UNLABELED
                )
            wanted = row.get("function_name", "").strip()
            for s in cache[rel]:
                if wanted in ("", "*") or s.name == wanted:
                    samples.append(replace(s, label=canonical_label(row["label"])))
    else:
        for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            label = canonical_label(label_dir.name)
            for path in sorted(label_dir.rglob("*")):
                if path.suffix in SOURCE_SUFFIXES and path.is_file():
                    rel = path.relative_to(root).as_posix()
                    samples.extend(
                        extract_and_normalize(path.read_text(encoding="utf-8"), rel, label)
                    )
    samples = filter_short(samples, min_lines)
    return sorted(samples, key=lambda s: s.id)


def sample_to_record(sample: FunctionSample) -> dict:
    return {
        "id": sample.id,
        "origin": {"path": sample.origin.path, "start": sample.origin.start, "end": sample.origin.end},
        "label": sample.label,
        "name": sample.name,
        "lines": list(sample.lines),
    }


def sample_from_record(record: dict) -> FunctionSample:
    o = record["origin"]
    return FunctionSample(
        id=record["id"],
        origin=Origin(o["path"], int(o["start"]), int(o["end"])),
        lines=tuple(record["lines"]),
        label=record.get("label", UNLABELED),
        name=record.get("name", ""),
    )


def write_samples(path: str | Path, samples: Iterable[FunctionSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s), ensure_ascii=False) + "\n")


def read_samples(path: str | Path) -> list[FunctionSample]:
    with open(path, encoding="utf-8") as fh:
        return [sample_from_record(json.loads(line)) for line in fh if line.strip()]

"""Line-granularity code property graph for one normalized function.

Statements are parsed from tokens, a statement-level control-flow graph is
built with a virtual exit, and control dependence (post-dominators) and data
dependence (reaching definitions) are computed on it. Everything is then
collapsed onto source lines; edges whose endpoints share a line are dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedControlStructure
from .ingest import FunctionSample, declared_names, find_header, parameter_names, _match_paren, _split_top
from .lexer import Token, tokenize_lines

EDGE_KINDS = ("AST", "CFG", "CDG", "DDG")
EXIT = -1

_VAR_RE = re.compile(r"VAR\d+$")
_ASSIGN_OPS = frozenset({"+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="})
_UNSUPPORTED = frozenset({"switch", "goto", "case", "default"})


@dataclass(frozen=True)
class CodeGraph:
    num_lines: int
    edges: frozenset  # of (src_line, dst_line, kind), 1-based lines
    adjacency: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, num_lines: int, edges: Iterable[tuple[int, int, str]]) -> "CodeGraph":
        edges = frozenset((int(s), int(d), k) for s, d, k in edges if s != d)
        for s, d, k in edges:
            if not (1 <= s <= num_lines and 1 <= d <= num_lines) or k not in EDGE_KINDS:
                raise ValueError(f"bad edge {(s, d, k)} for {num_lines} lines")
        adj = np.zeros((num_lines, num_lines), dtype=np.uint8)
        for s, d, _ in edges:
            adj[s - 1, d - 1] = 1
        return cls(num_lines, edges, adj)

    @property
    def nodes(self) -> range:
        return range(1, self.num_lines + 1)

    def edges_of(self, kind: str) -> set[tuple[int, int]]:
        return {(s, d) for s, d, k in self.edges if k == kind}

    def symmetric(self) -> np.ndarray:
        return self.adjacency | self.adjacency.T

    def edge_dump(self) -> str:
        rows = sorted(self.edges, key=lambda e: (e[0], EDGE_KINDS.index(e[2]), e[1]))
        return "".join(f"{s} {k} {d}\n" for s, d, k in rows)


def degree_profile(graph: CodeGraph) -> np.ndarray:
    """(in_degree, out_degree, degree) per line on the collapsed adjacency."""
    adj = graph.adjacency.astype(np.int64)
    indeg = adj.sum(axis=0)
    outdeg = adj.sum(axis=1)
    return np.stack([indeg, outdeg, indeg + outdeg], axis=1)


# -- generic flow-graph analyses ---------------------------------------------


def postdominators(succ: dict[int, list[int]], exit: int = EXIT) -> dict[int, set[int]]:
    """Iterative post-dominator sets; ``succ`` must map every node."""
    nodes = list(succ)
    everything = set(nodes) | {exit}
    pdom = {n: set(everything) for n in nodes}
    pdom[exit] = {exit}
    changed = True
    while changed:
        changed = False
        for n in reversed(nodes):
            out = succ[n]
            new = set.intersection(*(pdom[s] for s in out)) if out else set()
            new = new | {n}
            if new != pdom[n]:
                pdom[n] = new
                changed = True
    return pdom


def immediate_postdominators(pdom: dict[int, set[int]], exit: int = EXIT) -> dict[int, int]:
    ipdom = {}
    for n, doms in pdom.items():
        if n == exit:
            continue
        strict = doms - {n}
        # the closest strict post-dominator is the one with the most post-dominators
        ipdom[n] = max(strict, key=lambda d: len(pdom[d])) if strict else exit
    return ipdom


def control_dependences(succ: dict[int, list[int]], exit: int = EXIT) -> set[tuple[int, int]]:
    """Pairs (branch, dependent) from the post-dominator tree walk."""
    pdom = postdominators(succ, exit)
    ipdom = immediate_postdominators(pdom, exit)
    deps = set()
    for a, outs in succ.items():
        for b in outs:
            if b != a and b in pdom[a]:  # b strictly post-dominates a
                continue
            runner = b
            stop = ipdom[a]
            while runner != stop and runner != exit:
                deps.add((a, runner))
                runner = ipdom[runner]
    return deps


def reaching_definitions(
    succ: dict[int, list[int]],
    defs: dict[int, dict[str, bool]],
) -> dict[int, set[tuple[int, str]]]:
    """IN sets of (defining node, variable).

    ``defs[n][v]`` is True for a killing definition of v at n and False for
    a weak one (element store, address taken) that leaves others alive.
    """
    nodes = list(succ)
    preds: dict[int, list[int]] = {n: [] for n in nodes}
    for n, outs in succ.items():
        for s in outs:
            if s in preds:
                preds[s].append(n)
    gen = {n: {(n, v) for v in defs.get(n, {})} for n in nodes}
    killed = {n: {v for v, strong in defs.get(n, {}).items() if strong} for n in nodes}
    IN = {n: set() for n in nodes}
    OUT = {n: set(gen[n]) for n in nodes}
    changed = True
    while changed:
        changed = False
        for n in nodes:
            new_in = set().union(*(OUT[p] for p in preds[n])) if preds[n] else set()
            new_out = gen[n] | {(d, v) for d, v in new_in if v not in killed[n]}
            if new_in != IN[n] or new_out != OUT[n]:
                IN[n], OUT[n] = new_in, new_out
                changed = True
    return IN


# -- statement parsing --------------------------------------------------------


@dataclass
class _Node:
    id: int
    line: int
    tokens: list = field(default_factory=list)
    defs: dict = field(default_factory=dict)
    uses: set = field(default_factory=set)


@dataclass
class _Stmt:
    kind: str
    line: int
    node: _Node | None = None
    cond: _Node | None = None  # do-while condition
    children: list = field(default_factory=list)  # block / loop body / then
    orelse: list = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.tokens = tokens
        self.pos = 0
        self.nodes: list[_Node] = []
        self.attached: dict[int, int] = {}  # line -> owner line
        self.owners: list[int] = []

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        line = tok.line + 1
        if line not in self.attached and self.owners:
            self.attached[line] = self.owners[-1]
        return tok

    def fail(self, message: str, tok: Token | None = None) -> MalformedControlStructure:
        if tok is None:
            tok = self.peek() or (self.tokens[-1] if self.tokens else None)
        return MalformedControlStructure(message, tok.line + 1 if tok else 0)

    def new_node(self, line: int, tokens: list) -> _Node:
        node = _Node(len(self.nodes), line, tokens)
        self.nodes.append(node)
        return node

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text:
            raise self.fail(f"expected '{text}'", tok)
        return self.take()

    def paren_group(self) -> list[Token]:
        self.expect("(")
        depth = 1
        inner = []
        while True:
            tok = self.peek()
            if tok is None:
                raise self.fail("unbalanced parentheses")
            self.take()
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
                if depth == 0:
                    return inner
            inner.append(tok)

    def block(self, owner_line: int) -> list[_Stmt]:
        self.owners.append(owner_line)
        self.expect("{")
        stmts = []
        while True:
            tok = self.peek()
            if tok is None:
                raise self.fail("missing '}'")
            if tok.text == "}":
                self.take()
                break
            stmts.append(self.statement())
        self.owners.pop()
        return stmts

    def body(self, owner_line: int) -> list[_Stmt]:
        tok = self.peek()
        if tok is None:
            raise self.fail("missing statement body")
        if tok.text == "{":
            return self.block(owner_line)
        self.owners.append(owner_line)
        stmt = self.statement()
        self.owners.pop()
        return [stmt]

    def statement(self) -> _Stmt:
        tok = self.peek()
        line = tok.line + 1
        text = tok.text
        if text == "{":
            return _Stmt("block", line, children=self.block(line))
        if text == "}":
            raise self.fail("unmatched '}'", tok)
        if text == "else":
            raise self.fail("'else' without 'if'", tok)
        if text in _UNSUPPORTED:
            raise self.fail(f"unsupported control structure '{text}'", tok)
        nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
        if tok.kind == "ident" and nxt is not None and nxt.text == ":":
            raise self.fail("labels are not supported", tok)

        self.owners.append(line)
        try:
            if text == "if":
                self.take()
                node = self.new_node(line, self.paren_group())
                stmt = _Stmt("if", line, node, children=self.body(line))
                if self.peek() is not None and self.peek().text == "else":
                    self.take()
                    stmt.orelse = self.body(line)
                return stmt
            if text in ("while", "for"):
                self.take()
                node = self.new_node(line, self.paren_group())
                return _Stmt(text, line, node, children=self.body(line))
            if text == "do":
                self.take()
                node = self.new_node(line, [])
                children = self.body(line)
                wtok = self.expect("while")
                cond = self.new_node(wtok.line + 1, self.paren_group())
                self.expect(";")
                return _Stmt("do", line, node, cond=cond, children=children)
            if tok.kind == "preproc":
                self.take()
                return _Stmt("simple", line, self.new_node(line, []))
            return self.simple(line)
        finally:
            self.owners.pop()

    def simple(self, line: int) -> _Stmt:
        first = self.peek().text
        tokens = []
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                break
            if depth == 0 and tok.text == "}":
                break  # tolerate a missing ';' before a closing brace
            self.take()
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth -= 1
            elif tok.text == ";" and depth == 0:
                break
            tokens.append(tok)
        kind = first if first in ("return", "break", "continue") else "simple"
        return _Stmt(kind, line, self.new_node(line, tokens))


# -- def/use extraction ---------------------------------------------------------


def _is_var(tok: Token) -> bool:
    return tok.kind == "ident" and _VAR_RE.match(tok.text) is not None


def _defs_uses(tokens: Sequence[Token], declared: set[int]) -> tuple[dict[str, bool], set[str]]:
    defs: dict[str, bool] = {}
    uses: set[str] = set()

    def define(name: str, strong: bool) -> None:
        defs[name] = defs.get(name, False) or strong

    n = len(tokens)
    for i, tok in enumerate(tokens):
        if not _is_var(tok):
            continue
        prev = tokens[i - 1].text if i > 0 else ""
        nxt = tokens[i + 1].text if i + 1 < n else ""
        if prev in (".", "->"):
            continue
        if id(tok) in declared:
            define(tok.text, True)
            continue
        if nxt == "=":
            define(tok.text, True)
        elif nxt in _ASSIGN_OPS or nxt in ("++", "--") or prev in ("++", "--"):
            define(tok.text, True)
            uses.add(tok.text)
        elif nxt == "[":
            depth = 0
            j = i + 1
            while j < n:
                if tokens[j].text == "[":
                    depth += 1
                elif tokens[j].text == "]":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            after = tokens[j + 1].text if j + 1 < n else ""
            if after == "=" or after in _ASSIGN_OPS:
                define(tok.text, False)
            uses.add(tok.text)
        elif prev == "&" and i >= 2 and tokens[i - 2].text in ("(", ","):
            define(tok.text, False)
            uses.add(tok.text)
        else:
            uses.add(tok.text)
    return defs, uses


def _declared_ids(tokens: Sequence[Token]) -> set[int]:
    out = set()
    for segment in _split_top(tokens, ";"):
        for name in declared_names(segment):
            out.add(id(name))
    return out


# -- graph assembly -----------------------------------------------------------


def _link(stmts: list[_Stmt], nxt: int, brk: int, cont: int, succ: dict[int, list[int]]) -> int:
    entry = nxt
    for stmt in reversed(stmts):
        entry = _link_one(stmt, entry, brk, cont, succ)
    return entry


def _add(succ: dict[int, list[int]], a: int, b: int) -> None:
    if b not in succ[a]:
        succ[a].append(b)


def _link_one(stmt: _Stmt, nxt: int, brk: int, cont: int, succ) -> int:
    kind = stmt.kind
    if kind == "block":
        return _link(stmt.children, nxt, brk, cont, succ)
    me = stmt.node.id
    if kind == "if":
        _add(succ, me, _link(stmt.children, nxt, brk, cont, succ))
        _add(succ, me, _link(stmt.orelse, nxt, brk, cont, succ) if stmt.orelse else nxt)
    elif kind in ("while", "for"):
        _add(succ, me, _link(stmt.children, me, nxt, me, succ))
        _add(succ, me, nxt)
    elif kind == "do":
        cond = stmt.cond.id
        _add(succ, me, _link(stmt.children, cond, nxt, cond, succ))
        _add(succ, cond, me)
        _add(succ, cond, nxt)
    elif kind == "return":
        _add(succ, me, EXIT)
    elif kind == "break":
        if brk is None:
            raise MalformedControlStructure("'break' outside a loop", stmt.line)
        _add(succ, me, brk)
    elif kind == "continue":
        if cont is None:
            raise MalformedControlStructure("'continue' outside a loop", stmt.line)
        _add(succ, me, cont)
    else:
        _add(succ, me, nxt)
    return me


def _ast_edges(stmts: list[_Stmt], owner: int, out: set[tuple[int, int]]) -> None:
    for stmt in stmts:
        out.add((owner, stmt.line))
        if stmt.kind == "block":
            _ast_edges(stmt.children, stmt.line, out)
            continue
        _ast_edges(stmt.children, stmt.line, out)
        _ast_edges(stmt.orelse, stmt.line, out)
        if stmt.cond is not None:
            out.add((stmt.line, stmt.cond.line))


def build_cpg(sample: FunctionSample | Sequence[str]) -> CodeGraph:
    """Build the line-level CPG of a normalized function (or bare statements)."""
    lines = list(sample.lines if isinstance(sample, FunctionSample) else sample)
    L = len(lines)
    tokens = tokenize_lines(lines)
    parser = _Parser(tokens)
    header = find_header(tokens)
    entry_node = None
    if header is not None:
        name_i, open_i, brace_i = header
        head_line = tokens[0].line + 1
        parser.owners.append(head_line)
        for tok in tokens[:brace_i]:
            parser.attached.setdefault(tok.line + 1, head_line)
        close_i = _match_paren(tokens, open_i)
        entry_node = parser.new_node(head_line, [])
        entry_node.defs = {t.text: True for t in parameter_names(tokens[open_i + 1:close_i]) if _is_var(t)}
        parser.pos = brace_i
        body = parser.block(head_line)
        if parser.peek() is not None:
            raise parser.fail("tokens after the function body")
    else:
        body = []
        while parser.peek() is not None:
            body.append(parser.statement())

    for node in parser.nodes:
        if node is entry_node:
            continue
        node.defs, node.uses = _defs_uses(node.tokens, _declared_ids(node.tokens))

    succ: dict[int, list[int]] = {node.id: [] for node in parser.nodes}
    body_entry = _link(body, EXIT, None, None, succ)
    if entry_node is not None:
        _add(succ, entry_node.id, body_entry)

    line_of = {node.id: node.line for node in parser.nodes}
    edges: set[tuple[int, int, str]] = set()
    for a, outs in succ.items():
        for b in outs:
            if b != EXIT:
                edges.add((line_of[a], line_of[b], "CFG"))
    for a, b in control_dependences(succ):
        edges.add((line_of[a], line_of[b], "CDG"))
    reach = reaching_definitions(succ, {node.id: node.defs for node in parser.nodes})
    for node in parser.nodes:
        for d, var in reach[node.id]:
            if var in node.uses:
                edges.add((line_of[d], node.line, "DDG"))

    ast: set[tuple[int, int]] = set()
    if header is not None:
        _ast_edges(body, entry_node.line, ast)
    else:
        for stmt in body:
            _ast_edges(stmt.children, stmt.line, ast)
            _ast_edges(stmt.orelse, stmt.line, ast)
    head_lines = set(line_of.values())
    for line, owner in parser.attached.items():
        if line not in head_lines:
            ast.add((owner, line))
    edges.update((a, b, "AST") for a, b in ast)
    return CodeGraph.from_edges(L, edges)


def statement_cfg(sample: FunctionSample | Sequence[str]) -> tuple[dict[int, list[int]], dict[int, int]]:
    """Statement-level successor map (with EXIT) and node -> line, for tests."""
    lines = list(sample.lines if isinstance(sample, FunctionSample) else sample)
    tokens = tokenize_lines(lines)
    parser = _Parser(tokens)
    header = find_header(tokens)
    entry = None
    if header is not None:
        parser.owners.append(tokens[0].line + 1)
        entry = parser.new_node(tokens[0].line + 1, [])
        parser.pos = header[2]
        body = parser.block(entry.line)
    else:
        body = []
        while parser.peek() is not None:
            body.append(parser.statement())
    succ = {node.id: [] for node in parser.nodes}
    first = _link(body, EXIT, None, None, succ)
    if entry is not None:
        _add(succ, entry.id, first)
    return succ, {node.id: node.line for node in parser.nodes}

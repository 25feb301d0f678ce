"""A small lexer for the C-family subset the pipeline understands.

Two views of a source text are provided. ``mask_source`` keeps every
offset intact and blanks out comments (and optionally string literals and
preprocessor lines) so brace matching can run on raw offsets.
``tokenize_lines`` produces positioned tokens for already-normalized lines.
"""

from __future__ import annotations

import re
from typing import NamedTuple

C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex bool""".split()
)

TYPE_KEYWORDS = frozenset(
    """char short int long float double signed unsigned void _Bool _Complex
    bool size_t ssize_t wchar_t int8_t int16_t int32_t int64_t uint8_t
    uint16_t uint32_t uint64_t uintptr_t intptr_t ptrdiff_t off_t FILE""".split()
)

QUALIFIERS = frozenset(
    "const volatile static register extern auto inline restrict".split()
)

_OPERATORS = [
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::",
]

_TOKEN_RE = re.compile(
    r"""
    (?P<string>"(?:\\.|[^"\\\n])*"?)
  | (?P<char>'(?:\\.|[^'\\\n])*'?)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<number>\.?\d[\w.]*)
  | (?P<op>""" + "|".join(re.escape(op) for op in _OPERATORS) + r""")
  | (?P<punct>\S)
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str  # string | char | ident | number | op | punct | preproc
    text: str
    line: int  # 0-based line index
    start: int  # column of first character
    end: int  # column one past the last character


def mask_source(text: str, *, strings: bool = False, preprocessor: bool = False) -> str:
    """Return ``text`` with comments replaced by spaces, offsets preserved.

    Newlines inside block comments are kept so line numbers survive. With
    ``strings=True`` the bodies of string and character literals are blanked
    too (quotes stay), and ``preprocessor=True`` blanks ``#`` lines.
    """
    out = list(text)
    i, n = 0, len(text)
    line_start = True
    while i < n:
        c = text[i]
        if c == "\n":
            line_start = True
            i += 1
            continue
        if preprocessor and line_start and c == "#":
            j = i
            while j < n and text[j] != "\n":
                # backslash continuation keeps the directive going
                if text[j] == "\\" and j + 1 < n and text[j + 1] == "\n":
                    j += 2
                    continue
                j += 1
            for p in range(i, j):
                if out[p] != "\n":
                    out[p] = " "
            i = j
            continue
        if not c.isspace():
            line_start = False
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            for p in range(i, j):
                out[p] = " "
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            for p in range(i, j):
                if text[p] != "\n":
                    out[p] = " "
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j, n)
            if strings:
                for p in range(i + 1, j):
                    if text[p] != "\n":
                        out[p] = " "
            i = j + 1 if j < n and text[j] == c else j
        else:
            i += 1
    return "".join(out)


def strip_comments(text: str) -> str:
    """Remove comments, keeping string literals and line structure intact.

    An inline block comment collapses to a single space; one spanning
    several lines leaves its newlines behind.
    """
    pieces = []
    i, n = 0, len(text)
    last = 0
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            pieces.append(text[last:i])
            j = text.find("\n", i)
            i = last = n if j < 0 else j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            pieces.append(text[last:i])
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            newlines = text.count("\n", i, j)
            pieces.append("\n" * newlines if newlines else " ")
            i = last = j
        elif c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            i = j + 1 if j < n and text[j] == c else min(j, n)
        else:
            i += 1
    pieces.append(text[last:])
    return "".join(pieces)


def tokenize_line(line: str, index: int = 0) -> list[Token]:
    if line.lstrip().startswith("#"):
        start = len(line) - len(line.lstrip())
        return [Token("preproc", line.strip(), index, start, len(line.rstrip()))]
    return [
        Token(m.lastgroup, m.group(), index, m.start(), m.end())
        for m in _TOKEN_RE.finditer(line)
    ]


def tokenize_lines(lines: list[str]) -> list[Token]:
    tokens: list[Token] = []
    for index, line in enumerate(lines):
        tokens.extend(tokenize_line(line, index))
    return tokens


def is_identifier(tok: Token) -> bool:
    return tok.kind == "ident" and tok.text not in C_KEYWORDS

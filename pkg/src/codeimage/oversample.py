"""Pixel-row oversampling: spliced rows between adjacent code lines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .centrality import CentralityTriple
from .errors import InvalidSplice, LengthMismatch

ORIGINAL, SPLICED = "original", "spliced"
DEFAULT_K = 5


@dataclass(frozen=True)
class SplicePlan:
    k: int
    n: int
    left_length: int
    right_length: int

    def __post_init__(self):
        if not 1 <= self.n < self.k:
            raise InvalidSplice(f"n={self.n} outside [1, {self.k})")
        if self.left_length < 0 or self.right_length < 0:
            raise InvalidSplice("lengths must be non-negative")

    @property
    def counts(self) -> tuple[int, int]:
        return token_counts(self.left_length, self.right_length, self.k, self.n)


@dataclass(frozen=True)
class Row:
    text: str
    vector: np.ndarray
    centrality: CentralityTriple
    kind: str = ORIGINAL


def token_counts(left_length: int, right_length: int, k: int, n: int) -> tuple[int, int]:
    """Characters taken from the end of line i and the start of line i+1."""
    if not 1 <= n < k:
        raise InvalidSplice(f"n={n} outside [1, {k})")
    if left_length < 0 or right_length < 0:
        raise InvalidSplice("lengths must be non-negative")
    return (left_length * (k - n)) // k, (right_length * n) // k


def _alpha(c: str) -> bool:
    return c.isalpha() or c == "_"


def _word(c: str) -> bool:
    return c.isalnum() or c == "_"


def _cut_left(line: str, count: int) -> str:
    """Trailing ``count`` characters, widened leftward to a whole identifier."""
    if count <= 0:
        return ""
    start = len(line) - count
    if 0 < start < len(line) and _word(line[start - 1]) and _word(line[start]):
        while start > 0 and _word(line[start - 1]):
            start -= 1
    return line[start:]


def _cut_right(line: str, count: int) -> str:
    """Leading ``count`` characters, widened rightward over letters and '_'.

    The widening stops at the first digit, so ``VA|R2[`` completes to
    ``VAR``.
    """
    if count <= 0:
        return ""
    end = count
    if 0 < end < len(line) and _word(line[end - 1]) and _word(line[end]):
        while end < len(line) and _alpha(line[end]):
            end += 1
    return line[:end]


def splice_lines(line_i: str, line_i1: str, k: int) -> list[str]:
    if k < 1:
        raise InvalidSplice("k must be >= 1")
    out = []
    for n in range(1, k):
        num_left, num_right = token_counts(len(line_i), len(line_i1), k, n)
        out.append(_cut_left(line_i, num_left) + _cut_right(line_i1, num_right))
    return out


def interpolate_values(left: np.ndarray, right: np.ndarray, k: int, n: int) -> np.ndarray:
    if not 1 <= n < k:
        raise InvalidSplice(f"n={n} outside [1, {k})")
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    mixed = ((k - n) * left + n * right) / k
    # rounding may step one ulp outside the neighbours; clamp it back
    return np.clip(mixed, np.minimum(left, right), np.maximum(left, right))


def interpolate_centrality(
    c_left: CentralityTriple, c_right: CentralityTriple, k: int, n: int
) -> CentralityTriple:
    return CentralityTriple(*interpolate_values(c_left.as_array(), c_right.as_array(), k, n))


def oversample_function(
    lines: Sequence[str],
    vectors: np.ndarray,
    centralities: np.ndarray,
    k: int,
    embed: Callable[[str], np.ndarray],
) -> list[Row]:
    """Interleave every adjacent pair of lines with ``k - 1`` spliced rows.

    ``embed`` maps a text line to its vector (e.g. a partial of
    ``embed_sentence``); spliced rows are embedded afresh.
    """
    L = len(lines)
    vectors = np.asarray(vectors)
    centralities = np.asarray(centralities, dtype=np.float64)
    if vectors.shape[0] != L or centralities.shape[0] != L:
        raise LengthMismatch(f"{L} lines, {vectors.shape[0]} vectors, {centralities.shape[0]} centralities")
    if L == 0:
        raise LengthMismatch("at least one line is required")
    if k < 1:
        raise InvalidSplice("k must be >= 1")
    rows = []
    for i in range(L):
        rows.append(Row(lines[i], vectors[i], CentralityTriple(*centralities[i]), ORIGINAL))
        if i + 1 == L:
            break
        for n, text in enumerate(splice_lines(lines[i], lines[i + 1], k), start=1):
            cen = interpolate_values(centralities[i], centralities[i + 1], k, n)
            rows.append(Row(text, np.asarray(embed(text)), CentralityTriple(*cen), SPLICED))
    return rows


def oversampled_length(L: int, k: int) -> int:
    return L + (L - 1) * (k - 1) if L > 0 else 0

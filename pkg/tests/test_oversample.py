import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codeimage.centrality import CentralityTriple
from codeimage.embed import embed_sentence, hashed_model
from codeimage.errors import InvalidSplice, LengthMismatch
from codeimage.oversample import (
    ORIGINAL,
    SPLICED,
    SplicePlan,
    interpolate_centrality,
    interpolate_values,
    oversample_function,
    oversampled_length,
    splice_lines,
    token_counts,
)

MODEL = hashed_model(0)


def embed(text):
    return embed_sentence(MODEL, text)


def completed_suffix(line, count):
    """Regex oracle: last ``count`` chars, pulled left to the start of a split word."""
    if count <= 0:
        return ""
    cut = len(line) - count
    head, tail = line[:cut], line[cut:]
    if head and tail and re.match(r"\w", tail) and re.search(r"\w$", head):
        tail = re.search(r"\w*$", head).group() + tail
    return tail


def completed_prefix(line, count):
    """Regex oracle: first ``count`` chars, pushed right over letters/underscores."""
    if count <= 0:
        return ""
    head, tail = line[:count], line[count:]
    if head and tail and re.search(r"\w$", head) and re.match(r"\w", tail):
        head = head + re.match(r"[A-Za-z_]*", tail).group()
    return head


def test_worked_example_counts_and_text():
    assert token_counts(12, 15, 2, 1) == (6, 7)
    assert splice_lines("char * VAR1;", "char VAR2[100];", 2) == [" VAR1;char VAR"]


def test_count_examples():
    assert token_counts(0, 0, 3, 1) == (0, 0)
    assert token_counts(10, 10, 5, 1) == (8, 2)
    assert SplicePlan(5, 1, 10, 10).counts == (8, 2)
    for bad in [(10, 10, 2, 0), (10, 10, 2, 2), (-1, 3, 2, 1)]:
        with pytest.raises(InvalidSplice):
            token_counts(*bad)


def test_splice_edge_cases():
    assert splice_lines("a;", "b;", 1) == []
    assert splice_lines("", "", 3) == ["", ""]


_line = st.text(alphabet="abcXYZ_019 ;*()[]=+", max_size=30)


@settings(max_examples=300, deadline=None)
@given(_line, _line, st.integers(1, 8))
def test_splice_matches_regex_oracle(left, right, k):
    out = splice_lines(left, right, k)
    assert len(out) == k - 1
    for n, text in enumerate(out, start=1):
        nl, nr = token_counts(len(left), len(right), k, n)
        assert text == completed_suffix(left, nl) + completed_prefix(right, nr)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 200), st.integers(0, 200), st.integers(2, 12), st.data())
def test_counts_are_floors(L, R, k, data):
    n = data.draw(st.integers(1, k - 1))
    nl, nr = token_counts(L, R, k, n)
    assert nl == (L * (k - n)) // k and nr == (R * n) // k
    assert 0 <= nl <= L and 0 <= nr <= R


def test_interpolation_examples():
    mid = interpolate_centrality(CentralityTriple(0.4, 1.2, 0.8), CentralityTriple(0.2, 1.0, 0.6), 2, 1)
    assert mid.as_array() == pytest.approx([0.3, 1.1, 0.7], abs=1e-15)
    same = CentralityTriple(0.25, 1.5, 0.125)
    for n in range(1, 6):
        assert interpolate_centrality(same, same, 6, n) == same
    quarter = interpolate_values(np.array([0.8, 1, 1]), np.array([0.0, 1, 1]), 4, 1)
    assert quarter[0] == pytest.approx(0.6, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_subnormal=False), min_size=3, max_size=3),
       st.lists(st.floats(0, 1e3, allow_subnormal=False), min_size=3, max_size=3),
       st.integers(2, 10), st.data())
def test_interpolation_within_neighbours(a, b, k, data):
    n = data.draw(st.integers(1, k - 1))
    out = interpolate_values(np.array(a), np.array(b), k, n)
    assert np.all(out >= np.minimum(a, b)) and np.all(out <= np.maximum(a, b))


def make_inputs(L, rng):
    lines = [f"VAR{i} = VAR{i + 1} + {i};" for i in range(L)]
    vectors = np.stack([embed(line) for line in lines])
    cen = rng.random((L, 3))
    return lines, vectors, cen


def test_row_counts_and_kinds(rng):
    lines, vectors, cen = make_inputs(3, rng)
    rows = oversample_function(lines, vectors, cen, 3, embed)
    assert len(rows) == 7
    assert [r.kind for r in rows] == [ORIGINAL, SPLICED, SPLICED, ORIGINAL, SPLICED, SPLICED, ORIGINAL]
    np.testing.assert_array_equal(rows[1].vector, embed(rows[1].text))
    assert rows[1].centrality == CentralityTriple(*interpolate_values(cen[0], cen[1], 3, 1))


def test_identity_cases(rng):
    lines, vectors, cen = make_inputs(4, rng)
    rows = oversample_function(lines, vectors, cen, 1, embed)
    assert [r.text for r in rows] == lines and all(r.kind == ORIGINAL for r in rows)
    one = oversample_function(lines[:1], vectors[:1], cen[:1], 5, embed)
    assert len(one) == 1


def test_length_mismatch(rng):
    lines, vectors, cen = make_inputs(3, rng)
    with pytest.raises(LengthMismatch):
        oversample_function(lines, vectors[:2], cen, 2, embed)
    with pytest.raises(LengthMismatch):
        oversample_function([], vectors[:0], cen[:0], 2, embed)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(1, 7))
def test_row_count_law(L, k):
    rng = np.random.default_rng(L * 31 + k)
    lines, vectors, cen = make_inputs(L, rng)
    rows = oversample_function(lines, vectors, cen, k, embed)
    assert len(rows) == L + (L - 1) * (k - 1) == oversampled_length(L, k)

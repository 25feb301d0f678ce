import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codeimage.errors import UnbalancedBraces
from codeimage.ingest import (
    SAFE,
    UNLABELED,
    VULNERABLE,
    FunctionSample,
    Origin,
    canonical_label,
    extract_functions,
    filter_short,
    load_corpus,
    normalize,
    read_samples,
    write_samples,
)
from codeimage.lexer import mask_source, strip_comments, tokenize_line

TWO_FUNCS = """#include <stdio.h>
struct point { int x; int y; };

int f(int a) {
    return a + 1;
}

static void g(void)
{
    puts("}");
}
"""

NESTED = """int walk(int *items, int count) {
    int total = 0;
    for (int i = 0; i < count; i++) {
        if (items[i] > 0) {
            while (items[i] > 10) {
                items[i] -= 10;
            }
            total += items[i];
        }
    }
    return total;
}
"""


def brace_span_oracle(text: str) -> tuple[int, int]:
    """Offsets of the first '{' and its matching '}' by counting, no masking."""
    start = text.index("{")
    depth = 0
    for pos in range(start, len(text)):
        depth += {"{": 1, "}": -1}.get(text[pos], 0)
        if depth == 0:
            return start, pos
    raise AssertionError("unbalanced fixture")


def sample(lines, label=UNLABELED):
    return FunctionSample("x", Origin("x.c", 0, 0), tuple(lines), label)


def test_two_functions_in_file_order():
    found = extract_functions(TWO_FUNCS, "two.c")
    assert [s.name for s in found] == ["f", "g"]
    assert found[1].lines[-2].strip() == 'puts("}");'


def test_struct_only_file_is_empty():
    assert extract_functions("struct s { int a; };\ntypedef int t;\n", "s.c") == []


def test_nested_braces_single_span():
    found = extract_functions(NESTED, "n.c")
    assert len(found) == 1
    open_pos, close_pos = brace_span_oracle(NESTED)
    s = found[0]
    assert s.origin.start == 0 and s.origin.end == close_pos + 1
    assert NESTED.encode()[s.origin.start:s.origin.end].decode() == "\n".join(s.lines)
    assert len(s.lines) == 12


def test_byte_offsets_with_multibyte_text():
    text = "/* café */\nint h(void) {\n    return 1;\n}\n"
    (s,) = extract_functions(text, "u.c")
    assert text.encode()[s.origin.start:s.origin.end].decode() == "\n".join(s.lines)


def test_unbalanced_braces():
    with pytest.raises(UnbalancedBraces):
        extract_functions("int f(void) {\n  if (1) {\n}\n", "bad.c")
    with pytest.raises(UnbalancedBraces):
        extract_functions("}\n", "bad.c")


def test_ids_are_stable_and_distinct():
    a = extract_functions(TWO_FUNCS, "two.c")
    b = extract_functions(TWO_FUNCS, "two.c")
    assert [s.id for s in a] == [s.id for s in b]
    assert len({s.id for s in a}) == 2
    assert extract_functions(TWO_FUNCS, "other.c")[0].id != a[0].id


def test_normalize_worked_line():
    s = normalize(sample(["void f(void) {", "    char * buf;", "    use(buf);", "}"]))
    assert s.lines[1].strip() == "char * VAR1;"
    assert s.lines[0] == "void FUNC1(void) {"
    assert s.lines[2].strip() == "use(VAR1);"


def test_normalize_drops_comment():
    s = normalize(sample(["int x; // counter"]))
    assert s.lines == ("int VAR1;",)


def test_normalize_params_first_and_members_untouched():
    s = normalize(sample(["int g(struct node *n, int len) {", "    int len2 = n->len + len;", "    return len2;", "}"]))
    assert s.lines[0] == "int FUNC1(struct node *VAR1, int VAR2) {"
    assert s.lines[1].strip() == "int VAR3 = VAR1->len + VAR2;"


def test_normalize_other_defined_functions():
    text = "int helper(int a) {\n    return a;\n}\nint main(void) {\n    int v = helper(2);\n    return v;\n}\n"
    from codeimage.ingest import extract_and_normalize

    helper, main = extract_and_normalize(text, "m.c", SAFE)
    assert main.lines[0] == "int FUNC1(void) {"
    assert main.lines[1].strip() == "int VAR1 = FUNC2(2);"
    assert helper.lines[0] == "int FUNC1(int VAR1) {"


def test_normalize_idempotent_on_corpus(corpus_samples):
    for s in corpus_samples[:60]:
        assert normalize(s) == s


_ident = st.sampled_from(["a", "b", "count", "buf", "p", "tmp"])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_ident, st.integers(0, 99)), min_size=1, max_size=8))
def test_normalize_idempotent_property(decls):
    body = [f"    int {name}{i} = {v};" for i, (name, v) in enumerate(decls)]
    body.append("    return " + " + ".join(f"{n}{i}" for i, (n, _) in enumerate(decls)) + ";")
    once = normalize(sample(["int f(int q) {"] + body + ["}"]))
    assert normalize(once) == once
    assert "VAR" in once.lines[1]


def test_filter_short_boundaries():
    nine = sample([f"x{i};" for i in range(9)])
    ten = sample([f"x{i};" for i in range(10)])
    assert filter_short([nine, ten]) == [ten]
    assert filter_short([nine, ten], min_lines=1) == [nine, ten]


def test_canonical_labels():
    assert canonical_label("bad") == VULNERABLE
    assert canonical_label(" Good ") == SAFE
    assert canonical_label("1") == VULNERABLE
    assert canonical_label("???") == UNLABELED


def test_load_corpus_directories_and_manifest(tmp_path):
    body = "int f(int a) {\n" + "".join(f"    a = a + {i};\n" for i in range(10)) + "    return a;\n}\n"
    (tmp_path / "bad").mkdir()
    (tmp_path / "good").mkdir()
    (tmp_path / "bad" / "x.c").write_text(body)
    (tmp_path / "good" / "y.c").write_text(body.replace("f(", "g("))
    loaded = load_corpus(tmp_path)
    assert sorted(s.label for s in loaded) == [SAFE, VULNERABLE]
    assert [s.id for s in loaded] == sorted(s.id for s in loaded)

    (tmp_path / "manifest.csv").write_text("path,function_name,label\nbad/x.c,f,safe\n")
    (only,) = load_corpus(tmp_path)
    assert only.label == SAFE and only.name == "f"


def test_jsonl_round_trip(tmp_path, corpus_samples):
    path = tmp_path / "s.jsonl"
    write_samples(path, corpus_samples[:5])
    assert read_samples(path) == corpus_samples[:5]
    record = json.loads(path.read_text().splitlines()[0])
    assert set(record) == {"id", "origin", "label", "name", "lines"}


# -- lexer -----------------------------------------------------------------------------


def test_mask_keeps_offsets():
    text = 'a = "x{y}"; /* { */ b = \'}\';\n// }\nc;'
    masked = mask_source(text, strings=True)
    assert len(masked) == len(text)
    assert "{" not in masked and "}" not in masked
    assert masked.count("\n") == text.count("\n")


def test_strip_comments():
    assert strip_comments("int a; /* x */ int b; // y") == "int a;   int b; "
    assert strip_comments("a /* one\ntwo */ b").count("\n") == 1
    assert strip_comments('s = "// not a comment";') == 's = "// not a comment";'


def test_tokenize_line_kinds():
    kinds = [(t.kind, t.text) for t in tokenize_line('x += f(y, "a b") -> z;', 0)]
    assert ("ident", "x") in kinds
    assert any(text == '"a b"' for _, text in kinds)
    assert any(text == "->" for _, text in kinds)
    assert any(text == "+=" for _, text in kinds)

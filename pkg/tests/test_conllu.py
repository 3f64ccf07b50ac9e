import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deptransfer.conllu import (ConlluParseError, Sentence, Token, Treebank, TreebankValidationError,
                                parse_conllu, read_treebank, simplify_label, split_indices,
                                split_treebank, treebank_stats, validate_sentence, write_conllu)
from deptransfer.synthetic import generate_treebank

from conftest import DATA, FIXTURE_2TOK

MWT = (
    "# sent_id = mwt\n"
    "1-2\tdakkeh\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "1\tdak\tdak\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tkeh\tkeh\tVERB\t_\t_\t0\troot\t_\t_\n"
    "2.1\tada\tada\tVERB\t_\t_\t_\t_\t2:conj\t_\n"
    "3\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\tSpaceAfter=No\n"
    "\n"
)


def test_empty_input():
    assert len(parse_conllu("")) == 0
    assert write_conllu(Treebank(())) == ""


def test_two_token_fixture(two_token):
    (s,) = two_token.sentences
    assert [t.form for t in s.tokens] == ["Aku", "mangan"]
    assert s.heads == [2, 0]
    assert s.deprels == ["nsubj", "root"]
    assert s.sent_id == "jv-1" and s.text == "Aku mangan"
    validate_sentence(s)


def test_two_token_write_exact(two_token):
    assert write_conllu(two_token) == FIXTURE_2TOK


def test_multiword_and_empty_nodes_skipped_but_kept():
    tb = parse_conllu(MWT)
    (s,) = tb.sentences
    assert [t.id for t in s.tokens] == [1, 2, 3]
    assert write_conllu(tb) == MWT


def test_wrong_column_count_reports_line():
    text = "# c\n1\ta\ta\tX\t_\t_\t0\troot\t_\n"
    with pytest.raises(ConlluParseError) as e:
        parse_conllu(text)
    assert e.value.lineno == 2


def test_non_integer_head():
    with pytest.raises(ConlluParseError, match="line 1"):
        parse_conllu("1\ta\ta\tX\t_\t_\tx\troot\t_\t_\n")


def test_head_out_of_range_names_sentence():
    text = "# sent_id = bad-7\n1\ta\ta\tX\t_\t_\t5\troot\t_\t_\n"
    with pytest.raises(TreebankValidationError, match="bad-7"):
        parse_conllu(text)


def test_validation_is_separate_step():
    # two roots parse fine but fail validation
    text = "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n"
    tb = parse_conllu(text)
    with pytest.raises(TreebankValidationError, match="one root"):
        validate_sentence(tb.sentences[0])


def test_cycle_detected():
    toks = (Token(1, "a", "X", 0, "root"), Token(2, "b", "X", 3, "dep"), Token(3, "c", "X", 2, "dep"))
    with pytest.raises(TreebankValidationError, match="not reachable"):
        validate_sentence(Sentence(toks))


@pytest.mark.parametrize("label, expected", [("nsubj", "nsubj"), ("obl:tmod", "obl"),
                                             ("acl:relcl", "acl"), ("a:b:c", "a")])
def test_simplify_label(label, expected):
    assert simplify_label(label) == expected


@given(st.text(min_size=1))
def test_simplify_idempotent(label):
    assert simplify_label(simplify_label(label)) == simplify_label(label)


def test_roundtrip_shipped_files():
    for path in sorted(DATA.glob("*.conllu")):
        text = path.read_text(encoding="utf-8")
        tb = parse_conllu(text)
        assert write_conllu(tb) == text
        assert parse_conllu(write_conllu(tb)) == tb


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_roundtrip_random_treebanks(n, seed):
    tb = generate_treebank("r", n, seed)
    again = parse_conllu(write_conllu(tb), tb.language_code, tb.name)
    assert again == parse_conllu(write_conllu(again), tb.language_code, tb.name)
    assert [s.tokens for s in again] == [s.tokens for s in tb]


def _numbered(n):
    return Treebank(tuple(Sentence((Token(1, f"w{i}", "X", 0, "root"),), sent_id=str(i))
                          for i in range(n)))


def test_split_counts():
    assert [len(p) for p in split_treebank(_numbered(1000), (0.8, 0.1, 0.1), 3)] == [800, 100, 100]
    assert [len(p) for p in split_treebank(_numbered(10), (0.8, 0.1, 0.1), 3)] == [8, 1, 1]
    # remainder goes to train
    assert [len(p) for p in split_treebank(_numbered(13), (0.8, 0.1, 0.1), 3)] == [11, 1, 1]


def test_split_determinism():
    tb = _numbered(100)
    a = split_treebank(tb, (0.8, 0.1, 0.1), 5)
    b = split_treebank(tb, (0.8, 0.1, 0.1), 5)
    c = split_treebank(tb, (0.8, 0.1, 0.1), 6)
    assert a == b
    assert [s.sent_id for s in a[1]] != [s.sent_id for s in c[1]]


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split_treebank(_numbered(10), (0.8, 0.1, 0.2), 0)
    with pytest.raises(ValueError):
        split_treebank(Treebank(()), (0.8, 0.1, 0.1), 0)


@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_split_is_partition(n, seed):
    parts = split_indices(n, (0.8, 0.1, 0.1), seed)
    flat = [i for p in parts for i in p]
    assert sorted(flat) == list(range(n))


def test_stats_single_sentence():
    s = Sentence((Token(1, "a", "X", 2, "nsubj"), Token(2, "b", "Y", 0, "root"),
                  Token(3, "c", "X", 2, "obj")))
    st_ = treebank_stats(Treebank((s,)))
    assert (st_.sentence_count, st_.word_count, st_.unique_word_count, st_.avg_sentence_length) == (1, 3, 3, 3.0)
    assert st_.upos_count == 2


def test_stats_relation_counts():
    s = Sentence((Token(1, "a", "X", 0, "obl:tmod"), ))
    t = Sentence((Token(1, "b", "X", 0, "obl"), ))
    st_ = treebank_stats(Treebank((s, t)))
    assert (st_.universal_relation_count, st_.language_specific_relation_count,
            st_.total_relation_count) == (1, 1, 2)


def test_stats_unique_is_case_sensitive():
    s = Sentence((Token(1, "Aku", "X", 0, "root"), ))
    t = Sentence((Token(1, "aku", "X", 0, "root"), ))
    assert treebank_stats(Treebank((s, t))).unique_word_count == 2


def test_read_validates_gold(tmp_path):
    p = tmp_path / "bad.conllu"
    p.write_text("1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n")
    with pytest.raises(TreebankValidationError):
        read_treebank(p)
    assert len(read_treebank(p, validate=False)) == 1


def test_with_annotation_length_check(two_token):
    with pytest.raises(ValueError):
        two_token.sentences[0].with_annotation([0], ["root"])
    out = two_token.sentences[0].with_annotation([0, 1], ["root", "obj"])
    assert out.heads == [0, 1] and dataclasses.replace(out, tokens=()).sent_id == "jv-1"


def test_javanese_file(jv_csui):
    text = jv_csui.read_text(encoding="utf-8")
    tb = parse_conllu(text)
    assert (len(tb), tb.n_words) == (1000, 14344)
    assert write_conllu(tb) == text
    labels = {t.deprel for s in tb for t in s.tokens}
    assert len(labels) == 46
    assert len({simplify_label(l) for l in labels}) == 32
    assert [len(p) for p in split_treebank(tb, (0.8, 0.1, 0.1), 0)] == [800, 100, 100]

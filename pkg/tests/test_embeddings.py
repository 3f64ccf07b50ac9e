import numpy as np
import pytest

from deptransfer.conllu import Sentence, Token, Treebank, parse_conllu
from deptransfer.embeddings import (ROOT_TAG, EmbeddingLoadError, EncodingError, Vocab,
                                    build_vocab, encode_sentence, load_vectors, lookup,
                                    save_vectors)
from deptransfer.synthetic import generate_vectors

from conftest import FIXTURE_2TOK


def _write(tmp_path, text, name="v.vec"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_header_and_headerless_agree(tmp_path):
    body = "aku 1 2 3\nmangan 0.5 -1 4\n"
    a = load_vectors(_write(tmp_path, "2 3\n" + body, "a.vec"))
    b = load_vectors(_write(tmp_path, body, "b.vec"))
    assert a.dim == b.dim == 3
    assert a.words == b.words == ("aku", "mangan")
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_oov_is_mean_vector(tmp_path):
    t = load_vectors(_write(tmp_path, "2 2\na 1 3\nb 3 5\n"))
    np.testing.assert_array_equal(lookup(t, "zzz"), [2.0, 4.0])


def test_lowercase_fallback(tmp_path):
    t = load_vectors(_write(tmp_path, "aku 1 1\nAku 2 2\nmangan 3 3\n"))
    np.testing.assert_array_equal(lookup(t, "Aku"), [2, 2])  # exact match first
    np.testing.assert_array_equal(lookup(t, "MANGAN"), [3, 3])


def test_duplicate_keeps_first(tmp_path):
    t = load_vectors(_write(tmp_path, "a 1 1\na 9 9\n"))
    assert len(t) == 1
    np.testing.assert_array_equal(lookup(t, "a"), [1, 1])


def test_dimension_mismatch_reports_line(tmp_path):
    with pytest.raises(EmbeddingLoadError, match="line 3"):
        load_vectors(_write(tmp_path, "2 2\na 1 1\nb 1 1 1\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmbeddingLoadError):
        load_vectors(_write(tmp_path, ""))


def test_save_load_roundtrip(tmp_path):
    t = generate_vectors("xx", dim=5)
    p = tmp_path / "x.vec"
    save_vectors(t, p)
    u = load_vectors(p)
    assert u.words == t.words
    np.testing.assert_array_equal(u.matrix, t.matrix)


def test_vocab_sorted_ids_and_root():
    tb = parse_conllu(FIXTURE_2TOK)
    v = build_vocab([tb])
    assert v.upos_index == {ROOT_TAG: 0, "PRON": 1, "VERB": 2}
    assert v.label_index == {"nsubj": 0, "root": 1}
    assert Vocab.from_json(v.to_json()) == v


def test_vocab_simplifies_labels():
    s = Sentence((Token(1, "a", "X", 0, "obl:tmod"),))
    assert build_vocab([Treebank((s,))]).labels == ["obl"]


def test_encode_sentence(tmp_path):
    tb = parse_conllu(FIXTURE_2TOK)
    table = load_vectors(_write(tmp_path, "aku 1 0\nmangan 0 1\n"))
    enc = encode_sentence(tb.sentences[0], table, build_vocab([tb]))
    assert len(enc) == 2
    np.testing.assert_array_equal(enc.word_vectors, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(enc.pos_ids, [1, 2])
    np.testing.assert_array_equal(enc.gold_heads, [2, 0])
    np.testing.assert_array_equal(enc.gold_label_ids, [0, 1])


def test_encode_unknown_is_error_unless_lenient(tmp_path):
    tb = parse_conllu(FIXTURE_2TOK)
    vocab = Vocab({ROOT_TAG: 0, "PRON": 1}, {"nsubj": 0})
    table = load_vectors(_write(tmp_path, "aku 1 0\n"))
    with pytest.raises(EncodingError, match="VERB"):
        encode_sentence(tb.sentences[0], table, vocab)
    enc = encode_sentence(tb.sentences[0], table, vocab, strict=False)
    np.testing.assert_array_equal(enc.pos_ids, [1, 0])
    np.testing.assert_array_equal(enc.gold_label_ids, [0, -1])


def test_single_vector_is_its_own_unk(tmp_path):
    t = load_vectors(_write(tmp_path, "1 3\nx 1 2 3\n"))
    np.testing.assert_array_equal(t.unk_vector, [1, 2, 3])


def test_lookup_always_has_dim(tmp_path):
    t = load_vectors(_write(tmp_path, "a 1 1\n"))
    for w in ["a", "A", "", "zz", "ÄÖ"]:
        assert lookup(t, w).shape == (2,)


def test_empty_vocab_has_only_root():
    v = build_vocab([])
    assert v.upos_index == {ROOT_TAG: 0} and v.label_index == {}


def _tb(*rows):
    return Treebank(tuple(Sentence(tuple(Token(i + 1, f, u, 0 if i == 0 else 1, l)
                                         for i, (f, u, l) in enumerate(r))) for r in rows))


def test_vocab_union_and_order_independence():
    a = _tb([("x", "NOUN", "root"), ("y", "ADJ", "amod")])
    b = _tb([("z", "VERB", "root"), ("w", "PRON", "nsubj:pass")])
    v = build_vocab([a, b])
    assert v.labels == ["amod", "nsubj", "root"]
    assert v == build_vocab([b, a])


def test_one_token_and_oov_rows(tmp_path):
    table = load_vectors(_write(tmp_path, "a 1 0\nb 3 2\n"))
    s = Sentence((Token(1, "zzz", "X", 0, "root"),))
    vocab = build_vocab([Treebank((s,))])
    enc = encode_sentence(s, table, vocab)
    assert enc.word_vectors.shape == (1, 2)
    np.testing.assert_array_equal(enc.gold_heads, [0])
    np.testing.assert_array_equal(enc.word_vectors[0], table.unk_vector)


def test_javanese_vocab(jv_csui):
    from deptransfer.conllu import read_treebank
    v = build_vocab([read_treebank(jv_csui)])
    assert len(v.upos_index) == 17 + 1
    assert len(v.label_index) == 32

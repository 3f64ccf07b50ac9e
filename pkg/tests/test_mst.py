import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deptransfer.conllu import parse_conllu
from deptransfer.embeddings import build_vocab
from deptransfer.mst import (ArcGraph, assemble, brute_force_heads, decode_heads, decode_labels,
                             is_tree, tree_weight)

from conftest import FIXTURE_2TOK


def graph(n, entries=(), fill=0.0):
    s = np.full((n + 1, n + 1), fill)
    for (h, j), w in entries:
        s[h, j] = w
    return s


def test_two_word_example():
    s = graph(2, {(0, 1): 1, (0, 2): 5, (1, 2): 2, (2, 1): 4}.items())
    assert decode_heads(s) == [2, 0]
    assert brute_force_heads(s) == [2, 0]
    assert tree_weight(s, [2, 0]) == 9


def test_single_word():
    assert decode_heads(np.zeros((2, 2))) == [0]


def test_cycle_is_contracted():
    # 1 <-> 2 is the greedy cycle; the best entry into it is via word 3
    s = graph(3, {(2, 1): 10, (1, 2): 10, (0, 1): 1, (0, 2): 2, (0, 3): 5,
                  (3, 1): 3, (3, 2): 1}.items())
    assert decode_heads(s) == [3, 1, 0]
    assert brute_force_heads(s) == [3, 1, 0]


def test_single_root_is_enforced():
    s = graph(3, {(0, 1): 100, (0, 2): 100, (0, 3): 100}.items(), fill=1.0)
    heads = decode_heads(s)
    assert heads == [0, 1, 1]
    assert is_tree(heads)


def test_all_ties_pick_lexicographically_smallest():
    for n in range(2, 7):
        expect = [0] + [1] * (n - 1)
        assert decode_heads(np.zeros((n + 1, n + 1))) == expect
        assert brute_force_heads(np.zeros((n + 1, n + 1))) == expect


def test_near_ties_are_exact():
    s = graph(3, {(0, 1): 1.0, (1, 2): 1.0, (1, 3): 1.0, (0, 2): 1.0, (2, 1): 1.0 + 1e-12,
                  (2, 3): 1.0}.items())
    assert decode_heads(s) == brute_force_heads(s) == [2, 0, 1]


def test_is_tree():
    assert is_tree([2, 0, 2])
    assert not is_tree([0, 0])
    assert not is_tree([2, 0, 4, 3])
    assert not is_tree([0, 5])


def _random_graph(rng, n, kind):
    if kind == "float":
        return rng.normal(size=(n + 1, n + 1))
    if kind == "int":
        return rng.integers(-2, 3, size=(n + 1, n + 1)).astype(float)
    base = rng.integers(0, 2, size=(n + 1, n + 1)).astype(float)
    return base + 1e-12 * rng.integers(-1, 2, size=base.shape)


@pytest.mark.parametrize("n", range(2, 8))
@pytest.mark.parametrize("kind", ["float", "int", "near"])
def test_matches_brute_force(n, kind):
    rng = np.random.default_rng([n, len(kind)])
    for _ in range(150 if n < 7 else 20):
        s = _random_graph(rng, n, kind)
        assert decode_heads(s) == brute_force_heads(s)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31), st.integers(-5, 5), st.integers(1, 5))
def test_column_shift_invariance(n, seed, shift, col):
    rng = np.random.default_rng(seed)
    s = rng.integers(-3, 4, size=(n + 1, n + 1)).astype(float)
    t = s.copy()
    t[:, min(col, n)] += shift  # every tree uses exactly one arc into each word
    assert decode_heads(s) == decode_heads(t)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_decoded_weight_is_max(n, seed):
    s = np.random.default_rng(seed).normal(size=(n + 1, n + 1))
    heads = decode_heads(s)
    assert is_tree(heads)
    assert tree_weight(s, heads) == tree_weight(s, brute_force_heads(s))


def test_long_sentence_speed():
    s = np.random.default_rng(0).normal(size=(201, 201))
    start = time.perf_counter()
    heads = decode_heads(s)
    assert time.perf_counter() - start < 1.0
    assert is_tree(heads)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        ArcGraph(np.zeros((3, 2)))
    with pytest.raises(ValueError, match="finite"):
        decode_heads(graph(2, {(0, 1): np.nan}.items()))
    with pytest.raises(ValueError):
        brute_force_heads(np.zeros((10, 10)))


def test_labels_argmax_and_ties():
    scores = np.array([[1.0, 0.0, 2.0], [1.0, 3.0, 2.0]])
    assert decode_labels(scores) == [0, 1, 0]
    with pytest.raises(ValueError):
        decode_labels(scores, heads=[0, 1])


def test_assemble(two_token):
    s = two_token.sentences[0]
    vocab = build_vocab([two_token])
    out = assemble([2, 0], [0, 1], s, vocab)
    assert out.heads == [2, 0] and out.deprels == ["nsubj", "root"]
    assert [t.form for t in out.tokens] == ["Aku", "mangan"]
    with pytest.raises(RuntimeError):
        assemble([0, 0], [0, 1], s, vocab)


def test_label_decoding_oracles():
    assert decode_labels(np.eye(4)[[2, 0, 3]].T) == [2, 0, 3]
    assert decode_labels(np.ones((5, 3))) == [0, 0, 0]
    scores = np.random.default_rng(0).normal(size=(32, 5))
    naive = []
    for j in range(5):
        best = 0
        for l in range(32):
            if scores[l, j] > scores[best, j]:
                best = l
        naive.append(best)
    assert decode_labels(scores) == naive


def test_brute_force_single_word():
    assert brute_force_heads(np.zeros((2, 2))) == [0]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31), st.integers(-7, 7))
def test_global_shift_invariance(n, seed, c):
    s = np.random.default_rng(seed).integers(-3, 4, size=(n + 1, n + 1)).astype(float)
    heads = decode_heads(s)
    assert decode_heads(s + c) == heads
    assert tree_weight(s + c, heads) == tree_weight(s, heads) + n * c


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_assembled_output_is_valid(n, seed):
    from deptransfer.conllu import Sentence, Token, Treebank, validate_sentence
    rng = np.random.default_rng(seed)
    s = Sentence(tuple(Token(i, f"w{i}", "X", 0 if i == 1 else 1, "dep") for i in range(1, n + 1)))
    vocab = build_vocab([Treebank((s,))])
    out = assemble(decode_heads(rng.normal(size=(n + 1, n + 1))), [0] * n, s, vocab)
    validate_sentence(out)


def test_assemble_identity_and_label_roundtrip(two_token):
    s = two_token.sentences[0]
    vocab = build_vocab([two_token])
    ids = [vocab.label_index[l] for l in s.deprels]
    assert assemble(s.heads, ids, s, vocab) == s
    assert [vocab.label_of(i) for i in ids] == s.deprels


def test_dependency_tree_invariants():
    from deptransfer.mst import DependencyTree
    t = DependencyTree([2, 0], [1, 0])
    assert t.heads == (2, 0) and len(t) == 2
    with pytest.raises(ValueError, match="single-root"):
        DependencyTree([0, 0], [0, 0])
    with pytest.raises(ValueError, match="labels"):
        DependencyTree([0], [0, 1])

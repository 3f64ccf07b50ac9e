"""Tree decoding: maximum spanning arborescence heads and argmax labels.

Heads come from Chu-Liu-Edmonds over exact integer arc keys. Each float
weight is scaled to an exact integer (every double is an integer multiple
of a power of two), then three criteria are folded into one Python int:

1. fewest arcs leaving ROOT (forces the single-root constraint, since every
   arborescence has at least one such arc),
2. largest total weight,
3. lexicographically smallest head list (head ``h`` of word ``j`` costs
   ``h * (n+1)**(n-j)``, so lexicographic order becomes a sum).

Every distinct head list then has a distinct total key, so the maximum is
unique and ties never depend on float rounding or argmax order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .conllu import Sentence, validate_sentence
from .embeddings import Vocab

__all__ = ["ArcGraph", "DependencyTree", "decode_heads", "brute_force_heads", "decode_labels", "assemble",
           "tree_weight", "is_tree"]

BRUTE_FORCE_MAX_N = 8


@dataclass(frozen=True, eq=False)
class ArcGraph:
    """Arc weights ``scores[h, j]`` for head ``h`` in 0..n and dependent ``j`` in 1..n.

    The diagonal and column 0 are ignored.
    """

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 2:
            raise ValueError(f"arc scores must be (n+1)x(n+1) with n >= 1, got {s.shape}")
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return self.scores.shape[0] - 1

    def weight(self, head: int, dep: int) -> float:
        return float(self.scores[head, dep])


@dataclass(frozen=True)
class DependencyTree:
    """Decoded heads ``H[j-1]`` in 0..n and label ids for one sentence."""

    heads: tuple[int, ...]
    label_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "label_ids", tuple(int(l) for l in self.label_ids))
        if len(self.heads) != len(self.label_ids):
            raise ValueError(f"{len(self.heads)} heads but {len(self.label_ids)} labels")
        if not is_tree(self.heads):
            raise ValueError(f"heads {list(self.heads)} do not form a single-root tree")

    def __len__(self) -> int:
        return len(self.heads)


def _as_graph(g) -> ArcGraph:
    return g if isinstance(g, ArcGraph) else ArcGraph(g)


def _permitted(n: int) -> np.ndarray:
    mask = ~np.eye(n + 1, dtype=bool)
    mask[:, 0] = False
    return mask


def tree_weight(g, heads: Sequence[int]) -> Fraction:
    """Exact total weight of a head list."""
    g = _as_graph(g)
    return sum((Fraction(g.weight(h, j)) for j, h in enumerate(heads, start=1)), Fraction(0))


def is_tree(heads: Sequence[int]) -> bool:
    """Single root, every word reaches ROOT."""
    n = len(heads)
    if sum(1 for h in heads if h == 0) != 1:
        return False
    for j in range(1, n + 1):
        node, steps = j, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n or not 0 <= node <= n:
                return False
    return True


def _integer_keys(g: ArcGraph) -> np.ndarray:
    n = g.n
    mask = _permitted(n)
    w = g.scores
    if not np.all(np.isfinite(w[mask])):
        raise ValueError("permitted arc weights must be finite")
    ratios = [float(x).as_integer_ratio() for x in w[mask]]
    shift = max(d.bit_length() - 1 for _, d in ratios)
    ints = [num << (shift - (den.bit_length() - 1)) for num, den in ratios]
    base = n + 1
    lex_scale = 2 * base ** n + 1
    w_max = max(abs(v) for v in ints) + 1
    root_penalty = lex_scale * (2 * n * w_max + 2)
    floor = -root_penalty * (4 * n + 8)

    keys = np.full((n + 1, n + 1), floor, dtype=object)
    it = iter(ints)
    for h, j in zip(*np.nonzero(mask)):
        h, j = int(h), int(j)
        key = next(it) * lex_scale - h * base ** (n - j)
        if h == 0:
            key -= root_penalty
        keys[h, j] = key
    return keys, floor


def _find_cycle(heads: list[int]) -> list[int] | None:
    m = len(heads)
    state = [0] * m  # 0 unvisited, 1 on current path, 2 done
    state[0] = 2
    for start in range(1, m):
        if state[start]:
            continue
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            return path[path.index(node):]
        for p in path:
            state[p] = 2
    return None


def _cle(keys: np.ndarray, floor: int) -> list[int]:
    m = keys.shape[0]
    heads = [-1] + [int(np.argmax(keys[:, d])) for d in range(1, m)]
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(m, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(sorted(cycle))
    rest = np.array([v for v in range(m) if not in_cycle[v]])  # contains ROOT at index 0
    k = len(rest)
    c = k

    reduced = np.full((k + 1, k + 1), floor, dtype=object)
    reduced[:k, :k] = keys[np.ix_(rest, rest)]
    cycle_in = np.array([keys[heads[d], d] for d in cyc], dtype=object)
    into = keys[np.ix_(rest, cyc)] - cycle_in[None, :]
    into_arg = np.array([int(np.argmax(row)) for row in into])
    reduced[:k, c] = [into[a, into_arg[a]] for a in range(k)]
    out = keys[np.ix_(cyc, rest)]
    out_arg = np.array([int(np.argmax(out[:, b])) for b in range(k)])
    reduced[c, :k] = [out[out_arg[b], b] for b in range(k)]
    reduced[:, 0] = floor
    reduced[c, c] = floor

    sub = _cle(reduced, floor)
    result = list(heads)
    for b in range(1, k):
        h = sub[b]
        result[rest[b]] = int(cyc[out_arg[b]]) if h == c else int(rest[h])
    a = sub[c]
    result[int(cyc[into_arg[a]])] = int(rest[a])
    return result


def decode_heads(g) -> list[int]:
    """Maximum-weight single-root arborescence as a head list ``H[0..n-1]``.

    Ties go to the lexicographically smallest head list.
    """
    g = _as_graph(g)
    if g.n == 1:
        return [0]
    keys, floor = _integer_keys(g)
    heads = _cle(keys, floor)
    return [int(h) for h in heads[1:]]


@lru_cache(maxsize=None)
def _all_trees(n: int) -> np.ndarray:
    """Every single-root arborescence over n words, rows in lexicographic order."""
    choices = [[h for h in range(n + 1) if h != j] for j in range(1, n + 1)]
    grid = np.array(list(itertools.product(*choices)), dtype=np.int16)
    grid = grid[(grid == 0).sum(axis=1) == 1]
    # Follow head pointers n times from every word; a tree sends all to 0.
    padded = np.concatenate([np.zeros((len(grid), 1), dtype=np.int16), grid], axis=1)
    node = np.tile(np.arange(1, n + 1, dtype=np.int16), (len(grid), 1))
    rows = np.arange(len(grid))[:, None]
    for _ in range(n):
        node = padded[rows, node]
    return grid[(node == 0).all(axis=1)]


def brute_force_heads(g) -> list[int]:
    """Exhaustive search over all single-root arborescences (n <= 8)."""
    g = _as_graph(g)
    n = g.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force supports n <= {BRUTE_FORCE_MAX_N}, got {n}")
    trees = _all_trees(n)
    cols = np.arange(1, n + 1)
    totals = g.scores[trees.astype(np.int64), cols].sum(axis=1)
    tol = 1e-9 * n * (1.0 + float(np.abs(g.scores[_permitted(n)]).max()))
    candidates = np.nonzero(totals >= totals.max() - tol)[0]
    best, best_total = None, None
    for idx in candidates:
        heads = [int(h) for h in trees[idx]]
        total = tree_weight(g, heads)
        if best_total is None or total > best_total:
            best, best_total = heads, total
    return best


def decode_labels(label_scores: np.ndarray, heads: Sequence[int] | None = None) -> list[int]:
    """Per-dependent argmax over the rows of a ``(num_labels, n)`` matrix; ties pick the smallest id."""
    scores = np.asarray(label_scores)
    if heads is not None and scores.shape[1] != len(heads):
        raise ValueError(f"label scores have {scores.shape[1]} columns for {len(heads)} words")
    return [int(i) for i in np.argmax(scores, axis=0)]


def assemble(heads: Sequence[int], labels: Sequence[int], s: Sentence, vocab: Vocab) -> Sentence:
    if len(heads) != len(s) or len(labels) != len(s):
        raise ValueError(f"sentence {s.label}: {len(s)} tokens but {len(heads)} heads, {len(labels)} labels")
    out = s.with_annotation(list(heads), [vocab.label_of(i) for i in labels])
    try:
        validate_sentence(out)
    except ValueError as exc:
        raise RuntimeError(f"decoder produced an invalid tree: {exc}") from exc
    return out

"""Reading, writing, simplifying and splitting CoNLL-U treebanks.

Only basic dependency lines (integer IDs) become :class:`Token` objects.
Multiword-token ranges (``3-4``) and empty nodes (``5.1``) carry no basic
head, so they are kept as raw lines attached to their position in the
sentence and written back unchanged.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ConlluParseError",
    "TreebankValidationError",
    "Token",
    "Sentence",
    "Treebank",
    "TreebankStats",
    "parse_conllu",
    "write_conllu",
    "read_treebank",
    "write_treebank",
    "validate_sentence",
    "validate_treebank",
    "simplify_label",
    "simplify_treebank",
    "split_indices",
    "split_treebank",
    "treebank_stats",
]


class ConlluParseError(ValueError):
    """A line of CoNLL-U input could not be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TreebankValidationError(ValueError):
    """A sentence violates the dependency-tree constraints."""


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    upos: str
    head: int
    deprel: str
    lemma: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"

    def to_line(self) -> str:
        return "\t".join(
            (str(self.id), self.form, self.lemma, self.upos, self.xpos,
             self.feats, str(self.head), self.deprel, self.deps, self.misc)
        )


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    sent_id: str | None = None
    text: str | None = None
    # Raw '#' lines preceding the first token, verbatim.
    comments: tuple[str, ...] = ()
    # (number of tokens preceding the line, raw line) for range/empty-node lines.
    extras: tuple[tuple[int, str], ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    @property
    def label(self) -> str:
        return self.sent_id if self.sent_id is not None else "<unnamed>"

    def with_annotation(self, heads: Sequence[int], deprels: Sequence[str]) -> "Sentence":
        """Return a copy with HEAD and DEPREL columns replaced."""
        if len(heads) != len(self.tokens) or len(deprels) != len(self.tokens):
            raise ValueError(
                f"sentence {self.label}: expected {len(self.tokens)} heads/labels, "
                f"got {len(heads)}/{len(deprels)}"
            )
        tokens = tuple(
            dataclasses.replace(t, head=int(h), deprel=str(r))
            for t, h, r in zip(self.tokens, heads, deprels)
        )
        return dataclasses.replace(self, tokens=tokens)


@dataclass(frozen=True)
class Treebank:
    sentences: tuple[Sentence, ...]
    language_code: str = "und"
    name: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def n_words(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class TreebankStats:
    sentence_count: int
    word_count: int
    unique_word_count: int
    avg_sentence_length: float
    upos_count: int
    universal_relation_count: int
    language_specific_relation_count: int
    total_relation_count: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _is_range_or_empty(token_id: str) -> bool:
    return "-" in token_id or "." in token_id


def _finish_sentence(lines, start_lineno) -> Sentence:
    comments: list[str] = []
    extras: list[tuple[int, str]] = []
    tokens: list[Token] = []
    for lineno, line in lines:
        if line.startswith("#"):
            if tokens or extras:
                extras.append((len(tokens), line))
            else:
                comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(lineno, f"expected 10 tab-separated columns, found {len(cols)}")
        if _is_range_or_empty(cols[0]):
            extras.append((len(tokens), line))
            continue
        try:
            tid = int(cols[0])
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer token id {cols[0]!r}") from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer head {cols[6]!r}") from None
        if not cols[7]:
            raise ConlluParseError(lineno, "empty deprel")
        tokens.append(Token(
            id=tid, form=cols[1], lemma=cols[2], upos=cols[3], xpos=cols[4], feats=cols[5],
            head=head, deprel=cols[7], deps=cols[8], misc=cols[9],
        ))

    sent_id = text = None
    for c in comments:
        body = c[1:].strip()
        key, sep, value = body.partition("=")
        if not sep:
            continue
        key = key.strip()
        if key == "sent_id":
            sent_id = value.strip()
        elif key == "text":
            text = value.strip()

    sentence = Sentence(tuple(tokens), sent_id, text, tuple(comments), tuple(extras))
    name = sent_id if sent_id is not None else f"starting at line {start_lineno}"
    n = len(tokens)
    for i, t in enumerate(tokens, start=1):
        if t.id != i:
            raise TreebankValidationError(
                f"sentence {name}: token ids must be 1..{n} in order, found {t.id} at position {i}"
            )
        if not 0 <= t.head <= n:
            raise TreebankValidationError(
                f"sentence {name}: token {t.id} has head {t.head} outside 0..{n}"
            )
        if t.head == t.id:
            raise TreebankValidationError(f"sentence {name}: token {t.id} is its own head")
    return sentence


def parse_conllu(text: str, language_code: str = "und", name: str = "") -> Treebank:
    """Parse CoNLL-U text into a :class:`Treebank`.

    Head ranges are checked here; tree shape is checked by
    :func:`validate_treebank`, which callers run explicitly.
    """
    sentences: list[Sentence] = []
    block: list[tuple[int, str]] = []
    start = 1
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line.strip() == "":
            if block:
                sentences.append(_finish_sentence(block, start))
                block = []
            continue
        if not block:
            start = lineno
        block.append((lineno, line))
    if block:
        sentences.append(_finish_sentence(block, start))
    return Treebank(tuple(sentences), language_code, name)


def write_conllu(tb: Treebank | Iterable[Sentence]) -> str:
    sentences = tb.sentences if isinstance(tb, Treebank) else tuple(tb)
    out: list[str] = []
    for s in sentences:
        if s.comments:
            out.extend(s.comments)
        else:
            if s.sent_id is not None:
                out.append(f"# sent_id = {s.sent_id}")
            if s.text is not None:
                out.append(f"# text = {s.text}")
        extras = list(s.extras)
        k = 0
        for i, t in enumerate(s.tokens):
            while k < len(extras) and extras[k][0] <= i:
                out.append(extras[k][1])
                k += 1
            out.append(t.to_line())
        out.extend(line for _, line in extras[k:])
        out.append("")
    return "".join(line + "\n" for line in out)


def read_treebank(path: str | Path, language_code: str | None = None,
                  validate: bool = True) -> Treebank:
    """Load a CoNLL-U file; gold files are validated unless ``validate=False``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lang = language_code or path.name.split("_")[0].split("-")[0]
    tb = parse_conllu(text, language_code=lang, name=path.stem)
    if validate:
        validate_treebank(tb)
    return tb


def write_treebank(tb: Treebank, path: str | Path) -> None:
    Path(path).write_text(write_conllu(tb), encoding="utf-8", newline="\n")


def validate_sentence(s: Sentence) -> None:
    """Raise if ``s`` is not a single-rooted tree over ``0..n``."""
    n = len(s.tokens)
    if n == 0:
        raise TreebankValidationError(f"sentence {s.label}: no tokens")
    roots = [t.id for t in s.tokens if t.head == 0]
    if len(roots) != 1:
        raise TreebankValidationError(
            f"sentence {s.label}: expected exactly one root, found {len(roots)} {roots}"
        )
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for t in s.tokens:
        if not 0 <= t.head <= n or t.head == t.id:
            raise TreebankValidationError(f"sentence {s.label}: bad head {t.head} for token {t.id}")
        children[t.head].append(t.id)
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for c in children[node]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    if len(seen) != n + 1:
        missing = sorted(set(range(1, n + 1)) - seen)
        raise TreebankValidationError(
            f"sentence {s.label}: tokens {missing} are not reachable from ROOT (cycle)"
        )


def validate_treebank(tb: Treebank) -> None:
    for s in tb.sentences:
        validate_sentence(s)


def simplify_label(deprel: str) -> str:
    """Strip the language-specific subtype: ``obl:tmod`` -> ``obl``."""
    return deprel.split(":", 1)[0]


def simplify_treebank(tb: Treebank) -> Treebank:
    sentences = tuple(
        s.with_annotation(s.heads, [simplify_label(r) for r in s.deprels]) for s in tb.sentences
    )
    return dataclasses.replace(tb, sentences=sentences)


def split_indices(n: int, ratios: tuple[float, float, float], seed: int) -> tuple[list[int], list[int], list[int]]:
    """Seeded shuffle of ``range(n)`` cut into train/dev/test index lists.

    Dev and test sizes are ``floor(n * ratio)``; the remainder goes to train.
    Each part is returned in corpus order.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_dev = int(np.floor(n * ratios[1] + 1e-9))
    n_test = int(np.floor(n * ratios[2] + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    n_train = n - n_dev - n_test
    train = sorted(int(i) for i in perm[:n_train])
    dev = sorted(int(i) for i in perm[n_train:n_train + n_dev])
    test = sorted(int(i) for i in perm[n_train + n_dev:])
    return train, dev, test


def split_treebank(tb: Treebank, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                   seed: int = 0) -> tuple[Treebank, Treebank, Treebank]:
    if len(tb) == 0:
        raise ValueError("cannot split an empty treebank")
    parts = split_indices(len(tb), ratios, seed)
    return tuple(
        Treebank(tuple(tb.sentences[i] for i in idx), tb.language_code, f"{tb.name}-{tag}")
        for idx, tag in zip(parts, ("train", "dev", "test"))
    )


def treebank_stats(tb: Treebank) -> TreebankStats:
    forms = [t.form for s in tb.sentences for t in s.tokens]
    upos = {t.upos for s in tb.sentences for t in s.tokens}
    rels = {t.deprel for s in tb.sentences for t in s.tokens}
    universal = {simplify_label(r) for r in rels}
    specific = {r for r in rels if ":" in r}
    n_sent = len(tb.sentences)
    return TreebankStats(
        sentence_count=n_sent,
        word_count=len(forms),
        unique_word_count=len(set(forms)),
        avg_sentence_length=len(forms) / n_sent if n_sent else 0.0,
        upos_count=len(upos),
        universal_relation_count=len(universal),
        language_specific_relation_count=len(specific),
        total_relation_count=len(universal) + len(specific),
    )

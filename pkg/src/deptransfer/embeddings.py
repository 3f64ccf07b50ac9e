"""Static word vectors, vocabularies and sentence encoding."""

from __future__ import annotations

import json
from functools import cached_property
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .conllu import Sentence, Treebank, simplify_label

ROOT_TAG = "<ROOT>"


class EmbeddingLoadError(ValueError):
    pass


class EncodingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    dim: int
    words: tuple[str, ...]
    matrix: np.ndarray
    unk_vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})
        self.matrix.setflags(write=False)
        self.unk_vector.setflags(write=False)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    @property
    def entries(self) -> dict[str, np.ndarray]:
        return {w: self.matrix[i] for w, i in self._index.items()}

    def index_of(self, word: str) -> int | None:
        return self._index.get(word)


def _parse_header(line: str) -> tuple[int, int] | None:
    parts = line.split()
    if len(parts) == 2 and all(p.isdigit() for p in parts):
        return int(parts[0]), int(parts[1])
    return None


def load_vectors(path: str | Path) -> EmbeddingTable:
    """Read a word2vec/fastText text file (header line optional).

    Duplicate words keep their first vector. The OOV vector is the mean of
    all loaded vectors.
    """
    words: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if lineno == 1:
                header = _parse_header(line)
                if header is not None:
                    dim = header[1]
                    continue
            if not line.strip():
                continue
            parts = line.rstrip(" ").split(" ")
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise EmbeddingLoadError(
                    f"{path}: line {lineno}: expected {dim} values for {word!r}, found {len(values)}"
                )
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise EmbeddingLoadError(f"{path}: line {lineno}: {exc}") from None
            if word in seen:
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if dim is None or not rows:
        raise EmbeddingLoadError(f"{path}: no vectors found")
    matrix = np.asarray(rows, dtype=np.float64)
    return EmbeddingTable(dim, tuple(words), matrix, matrix.mean(axis=0))


def save_vectors(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(table.words)} {table.dim}\n")
        for w, row in zip(table.words, table.matrix):
            f.write(w + " " + " ".join(repr(float(x)) for x in row) + "\n")


def lookup(table: EmbeddingTable, word: str) -> np.ndarray:
    i = table.index_of(word)
    if i is None:
        i = table.index_of(word.lower())
    return table.unk_vector if i is None else table.matrix[i]


@dataclass(frozen=True)
class Vocab:
    upos_index: dict[str, int]
    label_index: dict[str, int]

    @cached_property
    def labels(self) -> list[str]:
        return self.labels_by_id(self.label_index)

    @property
    def root_id(self) -> int:
        return self.upos_index[ROOT_TAG]

    def label_of(self, label_id: int) -> str:
        return self.labels[label_id]

    def to_json(self) -> dict:
        return {"upos": self.labels_by_id(self.upos_index), "labels": self.labels}

    @staticmethod
    def labels_by_id(index: dict[str, int]) -> list[str]:
        return sorted(index, key=index.__getitem__)

    @classmethod
    def from_json(cls, data: dict) -> "Vocab":
        return cls({u: i for i, u in enumerate(data["upos"])},
                   {l: i for i, l in enumerate(data["labels"])})

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def build_vocab(treebanks: Iterable[Treebank]) -> Vocab:
    """Vocabularies over every treebank of a scenario, ids assigned in sorted key order."""
    upos = {ROOT_TAG}
    labels: set[str] = set()
    for tb in treebanks:
        for s in tb.sentences:
            for t in s.tokens:
                upos.add(t.upos)
                labels.add(simplify_label(t.deprel))
    return Vocab({u: i for i, u in enumerate(sorted(upos))},
                 {l: i for i, l in enumerate(sorted(labels))})


@dataclass(frozen=True, eq=False)
class EncodedSentence:
    word_vectors: np.ndarray
    pos_ids: np.ndarray
    gold_heads: np.ndarray
    gold_label_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.pos_ids)


def encode_sentence(s: Sentence, table: EmbeddingTable, vocab: Vocab,
                    strict: bool = True) -> EncodedSentence:
    """Vectorize a sentence for the encoder.

    With ``strict=False`` (used for unseen evaluation data) an unknown UPOS
    maps to the reserved ROOT tag and an unknown label to -1.
    """
    if not s.tokens:
        raise EncodingError(f"sentence {s.label}: no tokens")
    pos_ids, label_ids = [], []
    for t in s.tokens:
        p = vocab.upos_index.get(t.upos)
        if p is None:
            if strict:
                raise EncodingError(f"sentence {s.label}, token {t.id} {t.form!r}: unknown UPOS {t.upos!r}")
            p = vocab.root_id
        lab = vocab.label_index.get(simplify_label(t.deprel))
        if lab is None:
            if strict:
                raise EncodingError(
                    f"sentence {s.label}, token {t.id} {t.form!r}: unknown label {t.deprel!r}"
                )
            lab = -1
        pos_ids.append(p)
        label_ids.append(lab)
    vectors = np.stack([lookup(table, t.form) for t in s.tokens])
    return EncodedSentence(
        word_vectors=vectors,
        pos_ids=np.asarray(pos_ids, dtype=np.int64),
        gold_heads=np.asarray(s.heads, dtype=np.int64),
        gold_label_ids=np.asarray(label_ids, dtype=np.int64),
    )

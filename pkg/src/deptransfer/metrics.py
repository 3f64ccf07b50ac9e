"""Attachment scores, margin of error, and label confusion counts."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

from .conllu import Treebank, simplify_label

Z_95 = 1.96


class AlignmentError(ValueError):
    """Gold and predicted treebanks do not line up token for token."""


@dataclass(frozen=True)
class EvalReport:
    uas: float
    las: float
    uas_moe: float
    las_moe: float
    n_words: int
    n_sentences: int

    def as_dict(self) -> dict:
        return asdict(self)

    def row(self) -> str:
        """``UAS ± MOE  LAS ± MOE`` in percent with two decimals."""
        return (f"{100 * self.uas:.2f} ± {100 * self.uas_moe:.2f}  "
                f"{100 * self.las:.2f} ± {100 * self.las_moe:.2f}")


def margin_of_error(p: float, n: int, z: float = Z_95) -> float:
    """Half-width of the normal-approximation interval for a proportion."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"proportion must be in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    return z * math.sqrt(p * (1.0 - p) / n)


def _aligned_pairs(gold: Treebank, pred: Treebank):
    if len(gold.sentences) != len(pred.sentences):
        raise AlignmentError(
            f"gold has {len(gold.sentences)} sentences, prediction has {len(pred.sentences)}"
        )
    for k, (g, p) in enumerate(zip(gold.sentences, pred.sentences), start=1):
        if len(g.tokens) != len(p.tokens):
            raise AlignmentError(
                f"sentence {k} ({g.label}): gold has {len(g.tokens)} tokens, prediction has {len(p.tokens)}"
            )
        yield g, p


def attachment_scores(gold: Treebank, pred: Treebank, z: float = Z_95) -> EvalReport:
    """UAS and LAS over every token (punctuation included) with their margins."""
    total = heads_ok = labels_ok = 0
    for g, p in _aligned_pairs(gold, pred):
        for gt, pt in zip(g.tokens, p.tokens):
            total += 1
            if gt.head == pt.head:
                heads_ok += 1
                if simplify_label(gt.deprel) == simplify_label(pt.deprel):
                    labels_ok += 1
    if total == 0:
        return EvalReport(0.0, 0.0, 0.0, 0.0, 0, len(gold.sentences))
    uas, las = heads_ok / total, labels_ok / total
    return EvalReport(uas, las, margin_of_error(uas, total, z), margin_of_error(las, total, z),
                      total, len(gold.sentences))


def label_confusion(gold: Treebank, pred: Treebank, k: int | None = 10) -> list[tuple[str, str, int]]:
    """Top ``k`` (gold label, predicted label, count) pairs over all label mismatches.

    Head correctness is not required. Sorted by count, then label pair.
    """
    counts: Counter[tuple[str, str]] = Counter()
    for g, p in _aligned_pairs(gold, pred):
        for gt, pt in zip(g.tokens, p.tokens):
            a, b = simplify_label(gt.deprel), simplify_label(pt.deprel)
            if a != b:
                counts[a, b] += 1
    rows = sorted(((a, b, c) for (a, b), c in counts.items()), key=lambda r: (-r[2], r[0], r[1]))
    return rows if k is None else rows[:k]

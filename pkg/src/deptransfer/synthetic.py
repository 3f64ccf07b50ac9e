"""Deterministic toy grammar for desk-scale training runs.

All languages share one grammar and one set of POS-cluster centroids in
vector space; they differ in word forms and per-word vector noise. Run as
``python -m deptransfer.synthetic OUT_DIR`` to regenerate the shipped data.

Sentence shape::

    [ADV] SUBJ VERB [OBJ] [ADP [DET] NOUN] PUNCT
    SUBJ, OBJ := PRON | [DET] [ADJ] NOUN

The ADP phrase noun is ``obl``, or ``obl:tmod`` when drawn from the
time-noun list.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .conllu import Sentence, Token, Treebank, write_treebank
from .embeddings import EmbeddingTable, save_vectors

POS_CLASSES = ("NOUN", "TIME", "VERB", "ADJ", "DET", "ADP", "PRON", "ADV", "PUNCT")
WORDS_PER_CLASS = {"NOUN": 12, "TIME": 3, "VERB": 8, "ADJ": 6, "DET": 3, "ADP": 3,
                   "PRON": 4, "ADV": 4, "PUNCT": 1}
GRAMMAR_SEED = 2024


def word_forms(lang: str) -> dict[str, list[str]]:
    return {c: [f"{lang}{c.lower()}{i}" for i in range(WORDS_PER_CLASS[c])] for c in POS_CLASSES}


def _noun_phrase(rng, forms, head_label):
    """Tokens as (form, upos, local head index or None for the phrase head, label)."""
    if rng.random() < 0.25:
        return [(rng.choice(forms["PRON"]), "PRON", None, head_label)]
    out = []
    if rng.random() < 0.6:
        out.append((rng.choice(forms["DET"]), "DET", "H", "det"))
    if rng.random() < 0.4:
        out.append((rng.choice(forms["ADJ"]), "ADJ", "H", "amod"))
    out.append((rng.choice(forms["NOUN"]), "NOUN", None, head_label))
    return out


def generate_sentence(rng: np.random.Generator, forms: dict[str, list[str]], sent_id: str) -> Sentence:
    # Each phrase is a list of (form, upos, "H" = attaches to phrase head | None, label).
    phrases: list[tuple[str, list]] = []
    if rng.random() < 0.3:
        phrases.append(("verb", [(rng.choice(forms["ADV"]), "ADV", None, "advmod")]))
    phrases.append(("verb", _noun_phrase(rng, forms, "nsubj")))
    phrases.append(("root", [(rng.choice(forms["VERB"]), "VERB", None, "root")]))
    if rng.random() < 0.6:
        phrases.append(("verb", _noun_phrase(rng, forms, "obj")))
    if rng.random() < 0.5:
        pp = [(rng.choice(forms["ADP"]), "ADP", "H", "case")]
        if rng.random() < 0.5:
            pp.append((rng.choice(forms["DET"]), "DET", "H", "det"))
        if rng.random() < 0.3:
            pp.append((rng.choice(forms["TIME"]), "NOUN", None, "obl:tmod"))
        else:
            pp.append((rng.choice(forms["NOUN"]), "NOUN", None, "obl"))
        phrases.append(("verb", pp))
    phrases.append(("verb", [(forms["PUNCT"][0], "PUNCT", None, "punct")]))

    flat = []
    verb_pos = None
    pos = 1
    for attach, phrase in phrases:
        head_pos = pos + next(i for i, t in enumerate(phrase) if t[2] is None)
        for form, upos, local, label in phrase:
            flat.append([pos, form, upos, head_pos if local == "H" else attach, label])
            if attach == "root":
                verb_pos = pos
            pos += 1
    tokens = []
    for tid, form, upos, head, label in flat:
        h = 0 if head == "root" else (verb_pos if head == "verb" else head)
        tokens.append(Token(id=tid, form=str(form), upos=upos, head=int(h), deprel=label,
                            lemma=str(form)))
    text = " ".join(t.form for t in tokens)
    return Sentence(tuple(tokens), sent_id=sent_id, text=text)


def generate_treebank(lang: str, n_sentences: int, seed: int, prefix: str | None = None) -> Treebank:
    rng = np.random.default_rng([GRAMMAR_SEED, seed])
    forms = word_forms(lang)
    tag = prefix or lang
    sentences = tuple(generate_sentence(rng, forms, f"{tag}-{i + 1}") for i in range(n_sentences))
    return Treebank(sentences, lang, tag)


def generate_vectors(lang: str, dim: int = 16, noise: float = 0.3, seed: int = 0) -> EmbeddingTable:
    """Word vectors clustered by word class; centroids are shared by every language."""
    centroid_rng = np.random.default_rng(GRAMMAR_SEED)
    centroids = {c: centroid_rng.normal(size=dim) for c in POS_CLASSES}
    rng = np.random.default_rng([GRAMMAR_SEED, seed, sum(map(ord, lang))])
    words, rows = [], []
    for c, forms in word_forms(lang).items():
        for f in forms:
            words.append(f)
            rows.append(centroids[c] + noise * rng.normal(size=dim))
    matrix = np.asarray(rows)
    return EmbeddingTable(dim, tuple(words), matrix, matrix.mean(axis=0))


SHIPPED = {
    # file stem: (language, sentences, seed)
    "syn-train": ("syn", 20, 1),
    "syn-test": ("syn", 20, 2),
    "src-train": ("src", 80, 11),
    "src-dev": ("src", 20, 12),
    "mid-train": ("mid", 40, 21),
    "mid-dev": ("mid", 20, 22),
    "tgt-train": ("tgt", 20, 31),
    "tgt-dev": ("tgt", 20, 32),
    "tgt-test": ("tgt", 20, 33),
}


def write_shipped(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, (lang, n, seed) in SHIPPED.items():
        path = out / f"{stem}.conllu"
        write_treebank(generate_treebank(lang, n, seed, prefix=stem), path)
        written.append(path)
    for lang in sorted({v[0] for v in SHIPPED.values()}):
        path = out / f"{lang}.vec"
        save_vectors(generate_vectors(lang), path)
        written.append(path)
    return written


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="write the synthetic treebanks and vectors")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    for p in write_shipped(args.out_dir):
        print(p)


if __name__ == "__main__":
    main()

"""Self-attention encoder with biaffine arc and label scorers.

Input rows are ``[W_in . word_vector ; pos_embedding]``, with a learned ROOT
row prepended at position 0. Word order reaches the encoder only through
clipped relative-position key/value tables inside attention; there is no
absolute position signal.

Parameter paths::

    input.W, input.b, pos_embed, root
    encoder.layer{i}.ln1.{g,b}
    encoder.layer{i}.attn.{Wq,bq,Wk,bk,Wv,bv,Wo,bo,rel_k,rel_v}
    encoder.layer{i}.ln2.{g,b}
    encoder.layer{i}.ffn.{W1,b1,W2,b2}
    encoder.ln_final.{g,b}
    arc.head_mlp.{W,b}, arc.dep_mlp.{W,b}, arc.U, arc.u_head
    label.head_mlp.{W,b}, label.dep_mlp.{W,b}, label.U, label.W_head, label.W_dep, label.b
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .embeddings import EncodedSentence
from .mst import DependencyTree, decode_heads, decode_labels

NEG_INF = -1e18


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int
    num_upos: int
    num_labels: int
    pos_dim: int = 32
    d_model: int = 128
    num_layers: int = 4
    num_heads: int = 8
    ffn_dim: int = 256
    arc_mlp_dim: int = 128
    label_mlp_dim: int = 64
    dropout_p: float = 0.2
    rel_pos_clip: int = 8

    def validate(self) -> "ModelConfig":
        problems = []
        for f in ("word_dim", "num_upos", "num_labels", "pos_dim", "d_model", "num_layers",
                  "num_heads", "ffn_dim", "arc_mlp_dim", "label_mlp_dim"):
            if getattr(self, f) < 1:
                problems.append(f"{f} must be >= 1, got {getattr(self, f)}")
        if self.num_heads >= 1 and self.d_model % self.num_heads:
            problems.append(f"d_model={self.d_model} is not divisible by num_heads={self.num_heads}")
        if self.pos_dim >= self.d_model:
            problems.append(f"pos_dim={self.pos_dim} must be smaller than d_model={self.d_model}")
        if not 0.0 <= self.dropout_p < 1.0:
            problems.append(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.rel_pos_clip < 0:
            problems.append(f"rel_pos_clip must be >= 0, got {self.rel_pos_clip}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(eq=False)
class ScoreMatrices:
    """``M[h, j]``: arc score of head ``h`` for dependent ``j`` (0 = ROOT);
    ``N[l, j-1]``: score of label ``l`` for word ``j`` given ``heads[j-1]``."""

    M: Tensor
    N: Tensor
    heads: np.ndarray


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def init_model(cfg: ModelConfig, seed: int) -> ParamStore:
    cfg.validate()
    rng = np.random.default_rng(seed)
    p = ParamStore()
    d, dw = cfg.d_model, cfg.d_model - cfg.pos_dim

    def linear(prefix: str, fan_in: int, fan_out: int, wname="W", bname="b"):
        p.add(f"{prefix}.{wname}", _xavier(rng, fan_in, fan_out))
        p.add(f"{prefix}.{bname}", np.zeros((1, fan_out)))

    def norm(prefix: str):
        p.add(f"{prefix}.g", np.ones((1, d)))
        p.add(f"{prefix}.b", np.zeros((1, d)))

    linear("input", cfg.word_dim, dw)
    p.add("pos_embed", rng.normal(0.0, 0.02, size=(cfg.num_upos, cfg.pos_dim)))
    p.add("root", rng.normal(0.0, 0.02, size=(1, d)))
    n_rel = 2 * cfg.rel_pos_clip + 1
    for i in range(cfg.num_layers):
        pre = f"encoder.layer{i}"
        norm(f"{pre}.ln1")
        for w in ("q", "k", "v", "o"):
            linear(f"{pre}.attn", d, d, wname=f"W{w}", bname=f"b{w}")
        p.add(f"{pre}.attn.rel_k", rng.normal(0.0, 0.02, size=(n_rel, cfg.d_head)))
        p.add(f"{pre}.attn.rel_v", rng.normal(0.0, 0.02, size=(n_rel, cfg.d_head)))
        norm(f"{pre}.ln2")
        linear(f"{pre}.ffn", d, cfg.ffn_dim, wname="W1", bname="b1")
        linear(f"{pre}.ffn", cfg.ffn_dim, d, wname="W2", bname="b2")
    norm("encoder.ln_final")

    a, lab, L = cfg.arc_mlp_dim, cfg.label_mlp_dim, cfg.num_labels
    linear("arc.head_mlp", d, a)
    linear("arc.dep_mlp", d, a)
    p.add("arc.U", _xavier(rng, a, a))
    p.add("arc.u_head", _xavier(rng, a, 1))
    linear("label.head_mlp", d, lab)
    linear("label.dep_mlp", d, lab)
    p.add("label.U", _xavier(rng, lab * lab, L))
    p.add("label.W_head", _xavier(rng, lab, L))
    p.add("label.W_dep", _xavier(rng, lab, L))
    p.add("label.b", np.zeros((1, L)))
    return p


class _Dropper:
    """Hands out a fresh deterministic seed to every dropout site in one forward pass."""

    def __init__(self, p: float, seed, active: bool):
        self.p = p if active else 0.0
        self.base = [int(s) for s in np.atleast_1d(seed if seed is not None else 0)]
        self.count = 0

    def __call__(self, x: Tensor) -> Tensor:
        if self.p == 0.0:
            return x
        self.count += 1
        return ad.dropout(x, self.p, self.base + [self.count])


def relative_index(length: int, clip: int) -> np.ndarray:
    """``idx[i, j] = clip(j - i, -clip, clip) + clip``."""
    pos = np.arange(length)
    return np.clip(pos[None, :] - pos[:, None], -clip, clip) + clip


def _affine(x: Tensor, p: ParamStore, w: str, b: str) -> Tensor:
    return ad.add(ad.matmul(x, p[w]), p[b])


def _norm(x: Tensor, p: ParamStore, prefix: str) -> Tensor:
    return ad.add(ad.mul(ad.layer_norm_rows(x), p[f"{prefix}.g"]), p[f"{prefix}.b"])


def _attention(h: Tensor, p: ParamStore, pre: str, cfg: ModelConfig, rel_idx: np.ndarray) -> Tensor:
    q_all = _affine(h, p, f"{pre}.Wq", f"{pre}.bq")
    k_all = _affine(h, p, f"{pre}.Wk", f"{pre}.bk")
    v_all = _affine(h, p, f"{pre}.Wv", f"{pre}.bv")
    rel_k, rel_v = p[f"{pre}.rel_k"], p[f"{pre}.rel_v"]
    width = rel_k.shape[0]
    scale = 1.0 / np.sqrt(cfg.d_head)
    heads = []
    for hd in range(cfg.num_heads):
        lo, hi = hd * cfg.d_head, (hd + 1) * cfg.d_head
        q = ad.slice_cols(q_all, lo, hi)
        k = ad.slice_cols(k_all, lo, hi)
        v = ad.slice_cols(v_all, lo, hi)
        content = ad.matmul(q, ad.transpose(k))
        position = ad.take_cols(ad.matmul(q, ad.transpose(rel_k)), rel_idx)
        att = ad.softmax_rows(ad.scale(ad.add(content, position), scale))
        z = ad.add(ad.matmul(att, v), ad.matmul(ad.bucket_cols(att, rel_idx, width), rel_v))
        heads.append(z)
    z = heads[0] if len(heads) == 1 else ad.concat_cols(heads)
    return _affine(z, p, f"{pre}.Wo", f"{pre}.bo")


def encode(params: ParamStore, enc: EncodedSentence, cfg: ModelConfig, drop: _Dropper) -> Tensor:
    """Contextual rows for ROOT and every word, shape ``(n+1, d_model)``."""
    if enc.word_vectors.ndim != 2 or enc.word_vectors.shape[1] != cfg.word_dim:
        raise ad.ShapeError(
            f"word vectors have shape {enc.word_vectors.shape}, model expects width {cfg.word_dim}"
        )
    n = len(enc)
    if n < 1:
        raise ad.ShapeError("cannot encode an empty sentence")
    words = _affine(ad.constant(enc.word_vectors), params, "input.W", "input.b")
    pos = ad.gather_rows(params["pos_embed"], enc.pos_ids)
    x = ad.concat_rows([params["root"], ad.concat_cols([words, pos])])
    x = drop(x)
    rel_idx = relative_index(n + 1, cfg.rel_pos_clip)
    for i in range(cfg.num_layers):
        pre = f"encoder.layer{i}"
        h = _norm(x, params, f"{pre}.ln1")
        x = ad.add(x, drop(_attention(h, params, f"{pre}.attn", cfg, rel_idx)))
        h = _norm(x, params, f"{pre}.ln2")
        f = ad.relu(_affine(h, params, f"{pre}.ffn.W1", f"{pre}.ffn.b1"))
        x = ad.add(x, drop(_affine(f, params, f"{pre}.ffn.W2", f"{pre}.ffn.b2")))
    return _norm(x, params, "encoder.ln_final")


def _arc_scores(x: Tensor, params: ParamStore, drop: _Dropper) -> Tensor:
    m = x.shape[0]
    head = drop(ad.relu(_affine(x, params, "arc.head_mlp.W", "arc.head_mlp.b")))
    dep = drop(ad.relu(_affine(x, params, "arc.dep_mlp.W", "arc.dep_mlp.b")))
    bilinear = ad.matmul(ad.matmul(head, params["arc.U"]), ad.transpose(dep))
    head_bias = ad.matmul(ad.matmul(head, params["arc.u_head"]), ad.constant(np.ones((1, m))))
    mask = np.zeros((m, m))
    np.fill_diagonal(mask, NEG_INF)
    return ad.add(ad.add(bilinear, head_bias), ad.constant(mask))


def _label_scores(x: Tensor, heads: np.ndarray, params: ParamStore, drop: _Dropper) -> Tensor:
    n = len(heads)
    head = drop(ad.relu(_affine(x, params, "label.head_mlp.W", "label.head_mlp.b")))
    dep = drop(ad.relu(_affine(x, params, "label.dep_mlp.W", "label.dep_mlp.b")))
    h = ad.gather_rows(head, heads)
    d = ad.gather_rows(dep, np.arange(1, n + 1))
    s = ad.matmul(ad.row_outer(h, d), params["label.U"])
    s = ad.add(s, ad.matmul(h, params["label.W_head"]))
    s = ad.add(s, ad.matmul(d, params["label.W_dep"]))
    s = ad.add(s, params["label.b"])
    return ad.transpose(s)


def forward(params: ParamStore, enc: EncodedSentence, cfg: ModelConfig, train_mode: bool,
            seed=None, heads: Sequence[int] | None = None) -> ScoreMatrices:
    """Arc and label scores for one sentence.

    Label scores are conditioned on ``heads`` if given, else on the gold
    heads in training mode and on decoded heads otherwise.
    """
    drop = _Dropper(cfg.dropout_p, seed, train_mode)
    x = encode(params, enc, cfg, drop)
    M = _arc_scores(x, params, drop)
    if heads is None:
        heads = enc.gold_heads if train_mode else decode_heads(M.data)
    heads = np.asarray(heads, dtype=np.int64)
    N = _label_scores(x, heads, params, drop)
    return ScoreMatrices(M, N, heads)


def loss(scores: ScoreMatrices, gold_heads, gold_label_ids) -> Tensor:
    """Mean head cross-entropy over words plus mean label cross-entropy."""
    n = len(gold_heads)
    arc_logits = ad.gather_rows(ad.transpose(scores.M), np.arange(1, n + 1))
    head_loss = ad.cross_entropy(arc_logits, gold_heads)
    label_loss = ad.cross_entropy(ad.transpose(scores.N), gold_label_ids)
    return ad.add(head_loss, label_loss)


def predict(params: ParamStore, enc: EncodedSentence, cfg: ModelConfig) -> DependencyTree:
    """Decoded tree without recording a graph."""
    with ad.no_grad():
        scores = forward(params, enc, cfg, train_mode=False)
    return DependencyTree(scores.heads, decode_labels(scores.N.data, scores.heads))


def evaluate_sentence(params: ParamStore, enc: EncodedSentence, cfg: ModelConfig):
    """One encoder pass giving (gold-conditioned loss or None, decoded heads, decoded labels).

    The loss is None when some gold label is unknown to the vocabulary.
    """
    drop = _Dropper(0.0, None, False)
    with ad.no_grad():
        x = encode(params, enc, cfg, drop)
        M = _arc_scores(x, params, drop)
        heads = np.asarray(decode_heads(M.data), dtype=np.int64)
        labels = decode_labels(_label_scores(x, heads, params, drop).data, heads)
        value = None
        if (enc.gold_label_ids >= 0).all():
            N_gold = _label_scores(x, enc.gold_heads, params, drop)
            value = loss(ScoreMatrices(M, N_gold, enc.gold_heads), enc.gold_heads, enc.gold_label_ids).item()
    return value, [int(h) for h in heads], labels


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form size of :func:`init_model`'s parameter store."""
    d, dw = cfg.d_model, cfg.d_model - cfg.pos_dim
    a, lab, L = cfg.arc_mlp_dim, cfg.label_mlp_dim, cfg.num_labels
    n_rel = 2 * cfg.rel_pos_clip + 1
    per_layer = (2 * d) * 2 + 4 * (d * d + d) + 2 * n_rel * cfg.d_head \
        + (d * cfg.ffn_dim + cfg.ffn_dim) + (cfg.ffn_dim * d + d)
    return (
        cfg.word_dim * dw + dw + cfg.num_upos * cfg.pos_dim + d
        + cfg.num_layers * per_layer + 2 * d
        + 2 * (d * a + a) + a * a + a
        + 2 * (d * lab + lab) + lab * lab * L + 2 * lab * L + L
    )

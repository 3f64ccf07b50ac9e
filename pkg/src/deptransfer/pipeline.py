"""From-scratch, transfer, and hierarchical-transfer training scenarios.

A scenario is an ordered list of stages; FS has one (the target), TL two
(source, target) and HTL three (source, intermediate, target). Each stage
after the first starts from the previous stage's best checkpoint, and every
trainable parameter carries over. UPOS and label ids are shared across
stages because the vocabulary is built over all stages' train/dev data up
front.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import tomli

from . import autodiff as ad
from . import model as mdl
from .autodiff import AdamState, ParamStore
from .conllu import Treebank, read_treebank
from .embeddings import (EmbeddingTable, EncodedSentence, Vocab, build_vocab, encode_sentence,
                         load_vectors)
from .metrics import EvalReport, attachment_scores
from .mst import assemble
from .model import ConfigError, ModelConfig

KINDS = {"FS": 1, "TL": 2, "HTL": 3}
STAGE_DEFAULTS = {"max_epochs": 200, "patience": 10, "lr": 1e-3, "batch_size": 16}
META_SUFFIX = ".meta.json"


class ScenarioConfigError(ConfigError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class ScenarioError(RuntimeError):
    """A stage failed; ``partial`` holds the lineage completed so far."""

    def __init__(self, message: str, partial: list["LineageEntry"]):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class StageSpec:
    language_code: str
    train: str
    dev: str
    embedding: str
    max_epochs: int = STAGE_DEFAULTS["max_epochs"]
    patience: int = STAGE_DEFAULTS["patience"]
    lr: float = STAGE_DEFAULTS["lr"]
    batch_size: int = STAGE_DEFAULTS["batch_size"]

    def problems(self, where: str) -> list[str]:
        out = []
        if self.max_epochs < 1:
            out.append(f"{where}: max_epochs must be >= 1")
        if self.patience < 1:
            out.append(f"{where}: patience must be >= 1")
        if self.lr < 0:
            out.append(f"{where}: lr must be >= 0")
        if self.batch_size < 1:
            out.append(f"{where}: batch_size must be >= 1")
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    stages: tuple[StageSpec, ...]
    test: str
    seed: int = 0
    model: dict = field(default_factory=dict)
    split_seed: int | None = None
    base_dir: str = "."

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> "ScenarioConfig":
        problems = []
        if self.kind not in KINDS:
            problems.append(f"kind must be one of {sorted(KINDS)}, got {self.kind!r}")
        elif len(self.stages) != KINDS[self.kind]:
            problems.append(f"kind {self.kind} needs {KINDS[self.kind]} stage(s), got {len(self.stages)}")
        for i, st in enumerate(self.stages, start=1):
            problems.extend(st.problems(f"stage.{i}"))
        allowed = {f.name for f in dataclasses.fields(ModelConfig)} - {"word_dim", "num_upos", "num_labels"}
        unknown = set(self.model) - allowed
        if unknown:
            problems.append(f"unknown [model] keys: {sorted(unknown)}")
        if problems:
            raise ScenarioConfigError(problems)
        return self


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse a TOML scenario file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ScenarioConfigError([f"{path}: {exc}"]) from None
    return scenario_from_dict(raw, base_dir=str(path.parent))


def scenario_from_dict(raw: dict, base_dir: str = ".") -> ScenarioConfig:
    problems = []
    for key in ("name", "kind", "test"):
        if key not in raw:
            problems.append(f"missing top-level key {key!r}")
    known_top = {"name", "kind", "test", "seed", "model", "stage", "split_seed"}
    for key in set(raw) - known_top:
        problems.append(f"unknown top-level key {key!r}")
    stage_table = raw.get("stage", {})
    if not isinstance(stage_table, dict):
        problems.append("[stage.N] sections expected")
        stage_table = {}
    stages = []
    stage_fields = {f.name for f in dataclasses.fields(StageSpec)}
    keys = sorted(stage_table, key=lambda k: int(k) if str(k).isdigit() else 1 << 30)
    for expected, key in enumerate(keys, start=1):
        if str(key) != str(expected):
            problems.append(f"stage sections must be numbered 1..N in order, found [stage.{key}]")
            continue
        body = stage_table[key]
        missing = {"language_code", "train", "dev", "embedding"} - set(body)
        if missing:
            problems.append(f"stage.{key}: missing {sorted(missing)}")
            continue
        unknown = set(body) - stage_fields
        if unknown:
            problems.append(f"stage.{key}: unknown keys {sorted(unknown)}")
            continue
        stages.append(StageSpec(**body))
    if problems:
        raise ScenarioConfigError(problems)
    cfg = ScenarioConfig(
        name=str(raw["name"]), kind=str(raw["kind"]).upper(), stages=tuple(stages),
        test=str(raw["test"]), seed=int(raw.get("seed", 0)), model=dict(raw.get("model", {})),
        split_seed=raw.get("split_seed"), base_dir=base_dir,
    )
    return cfg.validate()


# ---------------------------------------------------------------------------
# checkpoints

@dataclass(frozen=True)
class LineageEntry:
    language: str
    best_dev_uas: float
    epoch: int


@dataclass
class Checkpoint:
    params: ParamStore
    model_config: ModelConfig
    vocab: Vocab
    lineage: list[LineageEntry]
    seed: int
    embedding: str | None = None

    def metadata(self) -> dict:
        return {
            "format": "deptransfer-checkpoint",
            "version": ad.VERSION,
            "model_config": self.model_config.to_json(),
            "vocab": self.vocab.to_json(),
            "lineage": [dataclasses.asdict(e) for e in self.lineage],
            "seed": self.seed,
            "embedding": self.embedding,
        }


def save_checkpoint(c: Checkpoint, path: str | Path) -> None:
    """Write the binary parameter file and its ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = Path(str(path) + META_SUFFIX)
    tmp_bin, tmp_meta = path.with_name(path.name + ".tmp"), meta.with_name(meta.name + ".tmp")
    tmp_bin.write_bytes(ad.params_to_bytes(c.params))
    tmp_meta.write_text(json.dumps(c.metadata(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp_bin, path)
    os.replace(tmp_meta, meta)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    meta_path = Path(str(path) + META_SUFFIX)
    try:
        params = ad.params_from_bytes(path.read_bytes())
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ad.CheckpointFormatError(f"missing checkpoint file: {exc.filename}") from None
    except json.JSONDecodeError as exc:
        raise ad.CheckpointFormatError(f"{meta_path}: bad metadata: {exc}") from None
    if meta.get("format") != "deptransfer-checkpoint" or meta.get("version") != ad.VERSION:
        raise ad.CheckpointFormatError(f"{meta_path}: unrecognized metadata format/version")
    cfg = ModelConfig.from_json(meta["model_config"])
    expected = mdl.init_model(cfg, 0)
    if expected.names() != params.names() or any(
        expected[k].shape != params[k].shape for k in params
    ):
        raise ad.CheckpointFormatError(f"{path}: parameters do not match the stored model config")
    return Checkpoint(
        params=params, model_config=cfg, vocab=Vocab.from_json(meta["vocab"]),
        lineage=[LineageEntry(**e) for e in meta["lineage"]], seed=int(meta["seed"]),
        embedding=meta.get("embedding"),
    )


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float | None
    dev_loss: float
    dev_uas: float
    dev_las: float


@dataclass
class StageResult:
    checkpoint: Checkpoint
    curve: list[EpochRecord]
    best_epoch: int
    epochs_run: int


class FileLog:
    """Records which files each phase of a run read."""

    def __init__(self):
        self.reads: dict[str, list[str]] = {}

    def note(self, phase: str, path: str) -> None:
        self.reads.setdefault(phase, []).append(str(path))


def encode_treebank(tb: Treebank, table: EmbeddingTable, vocab: Vocab, strict: bool = True) -> list[EncodedSentence]:
    return [encode_sentence(s, table, vocab, strict=strict) for s in tb.sentences]


def evaluate_encoded(params: ParamStore, cfg: ModelConfig, data: Sequence[EncodedSentence]):
    """Word-level dev UAS, LAS and mean sentence loss."""
    words = heads_ok = labels_ok = 0
    losses = []
    for enc in data:
        loss_val, heads, labels = mdl.evaluate_sentence(params, enc, cfg)
        if loss_val is not None:
            losses.append(loss_val)
        hit = np.asarray(heads) == enc.gold_heads
        words += len(enc)
        heads_ok += int(hit.sum())
        labels_ok += int((hit & (np.asarray(labels) == enc.gold_label_ids)).sum())
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    return heads_ok / words, labels_ok / words, mean_loss


def train_stage(start: Checkpoint | None, stage: StageSpec, *, vocab: Vocab, model_config: ModelConfig,
                seed: int, stage_index: int = 1, table: EmbeddingTable | None = None,
                log: FileLog | None = None, verbose: bool = False) -> StageResult:
    """Train one stage with mini-batch Adam and dev-UAS early stopping.

    Epoch 0 is an evaluation of the starting parameters; best-parameter
    tracking and patience count trained epochs 1, 2, ...
    """
    phase = f"stage{stage_index}"
    if table is None:
        table = load_vectors(stage.embedding)
        if log:
            log.note(phase, stage.embedding)
    if table.dim != model_config.word_dim:
        raise ConfigError(
            f"stage {stage.language_code}: embedding width {table.dim} != model word_dim {model_config.word_dim}"
        )
    train_tb = read_treebank(stage.train, stage.language_code)
    dev_tb = read_treebank(stage.dev, stage.language_code)
    if log:
        log.note(phase, stage.train)
        log.note(phase, stage.dev)
    if len(train_tb) == 0:
        raise ConfigError(f"stage {stage.language_code}: empty training set {stage.train}")
    if len(dev_tb) == 0:
        raise ConfigError(f"stage {stage.language_code}: empty dev set {stage.dev}")
    train = encode_treebank(train_tb, table, vocab)
    dev = encode_treebank(dev_tb, table, vocab)

    if start is None:
        params = mdl.init_model(model_config, seed)
        lineage: list[LineageEntry] = []
    else:
        if start.model_config != model_config:
            raise ConfigError("starting checkpoint was trained with a different model config")
        params = start.params.copy()
        lineage = list(start.lineage)

    curve = []
    uas, las, dloss = evaluate_encoded(params, model_config, dev)
    curve.append(EpochRecord(0, None, dloss, uas, las))
    if verbose:
        print(f"[{stage.language_code}] epoch 0 dev UAS {100 * uas:.2f} LAS {100 * las:.2f}")

    state = AdamState(lr=stage.lr)
    best_uas, best_epoch, best_params = -1.0, 0, params.copy()
    stale = 0
    epoch = 0
    for epoch in range(1, stage.max_epochs + 1):
        order = np.random.default_rng([seed, stage_index, epoch]).permutation(len(train))
        losses = []
        for b, lo in enumerate(range(0, len(order), stage.batch_size)):
            batch = order[lo:lo + stage.batch_size]
            total: dict[str, np.ndarray] | None = None
            for k, idx in enumerate(batch):
                enc = train[idx]
                scores = mdl.forward(params, enc, model_config, train_mode=True,
                                     seed=[seed, stage_index, epoch, b, k])
                l = mdl.loss(scores, enc.gold_heads, enc.gold_label_ids)
                losses.append(l.item())
                grads = ad.backward(ad.scale(l, 1.0 / len(batch)), params)
                if total is None:
                    total = grads
                else:
                    for name, g in grads.items():
                        total[name] += g
            ad.adam_step(params, total, state)
        uas, las, dloss = evaluate_encoded(params, model_config, dev)
        curve.append(EpochRecord(epoch, float(np.mean(losses)), dloss, uas, las))
        if verbose:
            print(f"[{stage.language_code}] epoch {epoch} loss {np.mean(losses):.4f} "
                  f"dev UAS {100 * uas:.2f} LAS {100 * las:.2f}")
        if uas > best_uas:
            best_uas, best_epoch, best_params = uas, epoch, params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= stage.patience:
                break

    lineage.append(LineageEntry(stage.language_code, best_uas, best_epoch))
    ckpt = Checkpoint(best_params, model_config, vocab, lineage, seed, embedding=str(stage.embedding))
    return StageResult(ckpt, curve, best_epoch, epoch)


def parse_treebank(ckpt: Checkpoint, tb: Treebank, table: EmbeddingTable) -> Treebank:
    """Predicted heads and labels for every sentence of ``tb``."""
    if table.dim != ckpt.model_config.word_dim:
        raise ConfigError(
            f"embedding width {table.dim} != checkpoint word_dim {ckpt.model_config.word_dim}"
        )
    out = []
    for s in tb.sentences:
        enc = encode_sentence(s, table, ckpt.vocab, strict=False)
        tree = mdl.predict(ckpt.params, enc, ckpt.model_config)
        out.append(assemble(tree.heads, tree.label_ids, s, ckpt.vocab))
    return dataclasses.replace(tb, sentences=tuple(out))


# ---------------------------------------------------------------------------
# scenarios

@dataclass
class RunReport:
    name: str
    kind: str
    seed: int
    split_seed: int | None
    stages: list[dict]
    lineage: list[LineageEntry]
    test: EvalReport
    files_read: dict[str, list[str]]
    wall_time_s: float = 0.0

    def as_dict(self, with_timing: bool = True) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "split_seed": self.split_seed,
            "stages": self.stages,
            "lineage": [dataclasses.asdict(e) for e in self.lineage],
            "test": self.test.as_dict(),
            "files_read": self.files_read,
        }
        if with_timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.as_dict(with_timing), indent=2, sort_keys=True) + "\n"

    def row(self) -> str:
        return f"{self.name}\t{self.test.row()}"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            name=d["name"], kind=d["kind"], seed=d["seed"], split_seed=d.get("split_seed"),
            stages=d["stages"], lineage=[LineageEntry(**e) for e in d["lineage"]],
            test=EvalReport(**d["test"]), files_read=d["files_read"],
            wall_time_s=d.get("wall_time_s", 0.0),
        )


def _stage_paths(cfg: ScenarioConfig, st: StageSpec) -> StageSpec:
    return dataclasses.replace(
        st, train=str(cfg.resolve(st.train)), dev=str(cfg.resolve(st.dev)),
        embedding=str(cfg.resolve(st.embedding)),
    )


def build_model_config(cfg: ScenarioConfig, word_dim: int, vocab: Vocab) -> ModelConfig:
    return ModelConfig(word_dim=word_dim, num_upos=len(vocab.upos_index),
                       num_labels=len(vocab.label_index), **cfg.model).validate()


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None,
                 verbose: bool = False) -> RunReport:
    t0 = time.perf_counter()
    cfg.validate()
    log = FileLog()
    stages = [_stage_paths(cfg, st) for st in cfg.stages]

    vocab_sources = []
    for st in stages:
        for p in (st.train, st.dev):
            vocab_sources.append(read_treebank(p, st.language_code))
            log.note("vocab", p)
    vocab = build_vocab(vocab_sources)

    tables = []
    for i, st in enumerate(stages, start=1):
        tables.append(load_vectors(st.embedding))
        log.note(f"stage{i}", st.embedding)
    dims = {t.dim for t in tables}
    if len(dims) != 1:
        raise ConfigError(f"all stages need the same embedding width, got {[t.dim for t in tables]}")
    model_config = build_model_config(cfg, tables[0].dim, vocab)

    out = Path(out_dir) if out_dir is not None else None
    ckpt: Checkpoint | None = None
    stage_reports = []
    for i, (st, table) in enumerate(zip(stages, tables), start=1):
        try:
            result = train_stage(ckpt, st, vocab=vocab, model_config=model_config, seed=cfg.seed,
                                 stage_index=i, table=table, log=log, verbose=verbose)
        except Exception as exc:
            partial = ckpt.lineage if ckpt else []
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                (out / f"{cfg.name}-partial.json").write_text(json.dumps(
                    {"name": cfg.name, "failed_stage": i, "error": str(exc),
                     "lineage": [dataclasses.asdict(e) for e in partial]}, indent=2) + "\n")
            raise ScenarioError(f"stage {i} ({st.language_code}) failed: {exc}", partial) from exc
        ckpt = result.checkpoint
        if out is not None:
            save_checkpoint(ckpt, out / f"{cfg.name}-stage{i}-{st.language_code}.ckpt")
        orig = cfg.stages[i - 1]
        stage_reports.append({
            "index": i,
            "language": st.language_code,
            "train": orig.train,
            "dev": orig.dev,
            "embedding": orig.embedding,
            "best_epoch": result.best_epoch,
            "best_dev_uas": ckpt.lineage[-1].best_dev_uas,
            "epochs_run": result.epochs_run,
            "curve": [dataclasses.asdict(r) for r in result.curve],
        })

    test_path = cfg.resolve(cfg.test)
    test_tb = read_treebank(test_path, stages[-1].language_code)
    log.note("test", str(test_path))
    pred = parse_treebank(ckpt, test_tb, tables[-1])
    report = RunReport(
        name=cfg.name, kind=cfg.kind, seed=cfg.seed, split_seed=cfg.split_seed,
        stages=stage_reports, lineage=list(ckpt.lineage), test=attachment_scores(test_tb, pred),
        files_read={k: [_display_path(cfg, p) for p in v] for k, v in log.reads.items()},
        wall_time_s=time.perf_counter() - t0,
    )
    return report


def _display_path(cfg: ScenarioConfig, path: str) -> str:
    """Paths relative to the config directory, so reports do not depend on the checkout location."""
    try:
        return os.path.relpath(path, cfg.base_dir)
    except ValueError:
        return path

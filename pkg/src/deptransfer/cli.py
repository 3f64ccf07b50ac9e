"""Command-line entry point: ``deptransfer <subcommand> ...``.

Exit codes: 0 success, 2 user/config error, 3 checkpoint error,
4 gold/prediction alignment error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import tomli

from . import conllu
from .autodiff import CheckpointFormatError
from .embeddings import EmbeddingLoadError, build_vocab, load_vectors
from .metrics import AlignmentError, attachment_scores, label_confusion, margin_of_error
from .model import ConfigError, ModelConfig

EXIT_OK, EXIT_USER, EXIT_CHECKPOINT, EXIT_ALIGN = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USER):
        super().__init__(message)
        self.code = code


def _read(path: str, validate: bool = True) -> conllu.Treebank:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}")
    try:
        return conllu.read_treebank(p, validate=validate)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios must be comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three ratios, got {len(parts)}")
    return parts


# ---------------------------------------------------------------------------
# subcommands

def cmd_split(args) -> int:
    tb = _read(args.input)
    try:
        parts = conllu.split_treebank(tb, args.ratios, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.input).stem
    manifest = {"input": str(args.input), "seed": args.seed, "ratios": list(args.ratios), "counts": {}}
    for tag, part in zip(("train", "dev", "test"), parts):
        path = out / f"{name}-{tag}.conllu"
        conllu.write_treebank(part, path)
        manifest["counts"][tag] = {"sentences": len(part), "words": part.n_words}
        print(f"{path}\t{len(part)} sentences\t{part.n_words} words")
    (out / f"{name}-split.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = conllu.treebank_stats(_read(args.input))
    if args.json:
        print(json.dumps(stats.as_dict(), indent=2))
        return EXIT_OK
    rows = [
        ("Sentence count", stats.sentence_count),
        ("Word count", stats.word_count),
        ("Unique word count", stats.unique_word_count),
        ("Average sentence length (in words)", f"{stats.avg_sentence_length:.2f}"),
        ("UPOS tag count", stats.upos_count),
        ("Universal dependency relation count", stats.universal_relation_count),
        ("Language-specific dependency relation count", stats.language_specific_relation_count),
        ("Total dependency relation count", stats.total_relation_count),
    ]
    width = max(len(r[0]) for r in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value:>8}")
    return EXIT_OK


def _load_ckpt(path: str):
    from .pipeline import load_checkpoint

    try:
        return load_checkpoint(path)
    except (CheckpointFormatError, ConfigError, KeyError, ValueError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}", EXIT_CHECKPOINT) from None


def _vectors(path: str):
    if not Path(path).is_file():
        raise CliError(f"no such embedding file: {path}")
    try:
        return load_vectors(path)
    except EmbeddingLoadError as exc:
        raise CliError(str(exc)) from None


def cmd_train(args) -> int:
    from .pipeline import StageSpec, save_checkpoint, train_stage

    stage = StageSpec(args.language, args.train, args.dev, args.embedding, args.max_epochs,
                      args.patience, args.lr, args.batch_size)
    problems = stage.problems("train")
    if problems:
        raise CliError("; ".join(problems))
    table = _vectors(args.embedding)
    start = None
    if args.init:
        start = _load_ckpt(args.init)
        vocab, cfg = start.vocab, start.model_config
        if cfg.word_dim != table.dim:
            raise CliError(f"embedding width {table.dim} != checkpoint word_dim {cfg.word_dim}",
                           EXIT_CHECKPOINT)
    else:
        vocab = build_vocab([_read(args.train), _read(args.dev)])
        model_opts = {}
        if args.model_config:
            try:
                model_opts = tomli.loads(Path(args.model_config).read_text(encoding="utf-8")).get("model", {})
            except (OSError, tomli.TOMLDecodeError) as exc:
                raise CliError(f"{args.model_config}: {exc}") from None
        try:
            cfg = ModelConfig(word_dim=table.dim, num_upos=len(vocab.upos_index),
                              num_labels=len(vocab.label_index), **model_opts).validate()
        except (TypeError, ConfigError) as exc:
            raise CliError(f"bad model config: {exc}") from None
    try:
        result = train_stage(start, stage, vocab=vocab, model_config=cfg, seed=args.seed,
                             table=table, verbose=args.verbose)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    save_checkpoint(result.checkpoint, args.out)
    entry = result.checkpoint.lineage[-1]
    print(f"{args.out}\tbest dev UAS {100 * entry.best_dev_uas:.2f} at epoch {entry.epoch}"
          f"\t{result.epochs_run} epochs run")
    return EXIT_OK


def cmd_parse(args) -> int:
    from .pipeline import parse_treebank

    ckpt = _load_ckpt(args.checkpoint)
    emb = args.embedding or ckpt.embedding
    if not emb:
        raise CliError("checkpoint records no embedding file; pass --embedding")
    table = _vectors(emb)
    if table.dim != ckpt.model_config.word_dim:
        raise CliError(f"embedding width {table.dim} != checkpoint word_dim {ckpt.model_config.word_dim}",
                       EXIT_CHECKPOINT)
    tb = _read(args.input, validate=False)
    pred = parse_treebank(ckpt, tb, table)
    text = conllu.write_conllu(pred)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    return EXIT_OK


def _gold_pred(args):
    gold, pred = _read(args.gold), _read(args.pred, validate=False)
    return gold, pred


def cmd_eval(args) -> int:
    gold, pred = _gold_pred(args)
    try:
        rep = attachment_scores(gold, pred, z=args.z)
    except AlignmentError as exc:
        raise CliError(str(exc), EXIT_ALIGN) from None
    print(f"{'metric':<6}  {'score':>7}  {'MOE':>6}")
    print(f"{'UAS':<6}  {100 * rep.uas:>7.2f}  {100 * rep.uas_moe:>6.2f}")
    print(f"{'LAS':<6}  {100 * rep.las:>7.2f}  {100 * rep.las_moe:>6.2f}")
    print(f"words {rep.n_words}  sentences {rep.n_sentences}")
    print(json.dumps(rep.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_confusion(args) -> int:
    gold, pred = _gold_pred(args)
    try:
        rows = label_confusion(gold, pred, args.top_k)
    except AlignmentError as exc:
        raise CliError(str(exc), EXIT_ALIGN) from None
    print("gold\tpredicted\tcount")
    for g, p, c in rows:
        print(f"{g}\t{p}\t{c}")
    return EXIT_OK


def cmd_moe_check(args) -> int:
    try:
        moe = margin_of_error(args.score / 100.0, args.n, args.z)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(f"{100 * moe:.2f}")
    return EXIT_OK


def cmd_run_scenario(args) -> int:
    from .pipeline import ScenarioConfigError, ScenarioError, load_scenario, run_scenario
    from .report import plot_comparison, plot_training_curves, results_table

    configs = []
    problems = []
    for path in args.config:
        if not Path(path).is_file():
            problems.append(f"{path}: no such file")
            continue
        try:
            configs.append(load_scenario(path))
        except ScenarioConfigError as exc:
            problems.extend(f"{path}: {p}" for p in exc.problems)
    if problems:
        raise CliError("invalid scenario config:\n  " + "\n  ".join(problems))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for cfg in configs:
        try:
            rep = run_scenario(cfg, out, verbose=args.verbose)
        except ScenarioError as exc:
            raise CliError(str(exc)) from None
        except (ConfigError, OSError, ValueError) as exc:
            raise CliError(f"{cfg.name}: {exc}") from None
        (out / f"{cfg.name}.json").write_text(rep.to_json(), encoding="utf-8")
        if not args.no_figures:
            plot_training_curves(rep, out / f"{cfg.name}-curves.png")
        reports.append(rep)
        print(rep.row())
    table = results_table(reports)
    (out / "results.txt").write_text(table, encoding="utf-8")
    if len(reports) > 1 and not args.no_figures:
        plot_comparison(reports, out / "comparison.png")
    if len(reports) > 1:
        print(table, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deptransfer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("split", help="seeded train/dev/test split of a CoNLL-U file")
    p.add_argument("--input", required=True)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="treebank statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one stage, optionally from a checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--init", help="checkpoint to fine-tune from")
    p.add_argument("--model-config", help="TOML file with a [model] table")
    p.add_argument("--language", default="und")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="predict trees for a CoNLL-U file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output path or '-' for stdout")
    p.add_argument("--embedding", help="vector file (default: the one recorded in the checkpoint)")
    p.set_defaults(func=cmd_parse)

    for name, func, help_text in (("eval", cmd_eval, "UAS/LAS with margins of error"),
                                  ("confusion", cmd_confusion, "most frequent label confusions")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--gold", required=True)
        p.add_argument("--pred", required=True)
        if name == "eval":
            p.add_argument("--z", type=float, default=1.96)
        else:
            p.add_argument("--top-k", type=int, default=10)
        p.set_defaults(func=func)

    p = sub.add_parser("run-scenario", help="run FS/TL/HTL scenario configs")
    p.add_argument("--config", required=True, nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("moe-check", help="margin of error of a score, in percent")
    p.add_argument("--score", type=float, required=True, help="score in percent (e.g. 75.87)")
    p.add_argument("--n", type=int, required=True, help="number of scored words")
    p.add_argument("--z", type=float, default=1.96)
    p.set_defaults(func=cmd_moe_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"deptransfer {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

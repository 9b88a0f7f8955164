"""Command-line interface.

Subcommands: stats, synth, train, evaluate, experiment, search.
Configuration is a single JSON document; reports are TSV + markdown.
Exit code 0 on success, nonzero with a diagnostic on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import (build_vocab, compute_stats, read_conll, stats_tsv,
                     write_conll)
from .experiments import (ExperimentConfig, grid_search, load_corpus_bundle,
                          report_markdown, run_experiment, search_tsv,
                          write_report_files)
from .losses import WEIGHTED_VARIANTS, compute_class_weights
from .metrics import report_markdown as metrics_markdown
from .metrics import report_tsv as metrics_tsv
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .synthgen import SynthConfig, generate_corpus
from .train import (TrainSettings, evaluate_sequence_model,
                    train_sequence_model)

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed (single-model commands)")
    parser.add_argument("--out-dir", type=Path, default=None,
                        help="directory for emitted files")
    parser.add_argument("--jobs", type=int, default=None,
                        help="max concurrent trials (experiment only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momner",
        description="majority-or-minority cost-sensitive sequence labeling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics (per-class counts, "
                                     "majority-token ratio)")
    p.add_argument("corpus", type=Path)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("config", type=Path)
    _add_common(p)

    p = sub.add_parser("train", help="train one model (first arm of the config)")
    p.add_argument("config", type=Path)
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a corpus")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("corpus", type=Path)
    _add_common(p)

    p = sub.add_parser("experiment", help="full multi-seed comparison")
    p.add_argument("config", type=Path)
    _add_common(p)

    p = sub.add_parser("search", help="grid search one hyperparameter")
    p.add_argument("config", type=Path)
    p.add_argument("--param", choices=("lambda", "beta", "gamma"), default=None)
    _add_common(p)

    return parser


def _out_dir(args) -> Path:
    out = args.out_dir or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_stats(args) -> int:
    corpus = read_conll(args.corpus)
    stats = compute_stats(corpus)
    text = stats_tsv(stats)
    print(f"sentences\t{stats.n_sentences}")
    print(f"tokens\t{stats.total_tokens}")
    print(f"majority_tokens\t{stats.n_majority}")
    print(f"entity_tokens\t{stats.n_entity}")
    print(f"rho_majority\t{stats.rho_majority:.4f}")
    if args.out_dir:
        path = _out_dir(args) / (args.corpus.stem + ".stats.tsv")
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    else:
        print(text, end="")
    return 0


def _load_synth_config(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "corpus" in data:
        data = data["corpus"]
    if "synth" in data:
        data = data["synth"]
    return data


def cmd_synth(args) -> int:
    raw = dict(_load_synth_config(args.config))
    n_train = int(raw.pop("n_train", raw.pop("n_sentences", 1000)))
    n_val = int(raw.pop("n_val", max(1, round(n_train / 8))))
    n_test = int(raw.pop("n_test", max(1, round(n_train / 8))))
    if args.seed is not None:
        raw["seed"] = args.seed
    base = SynthConfig(n_sentences=n_train, **raw)
    out = _out_dir(args)
    for split, n, seed in (("train", n_train, base.seed),
                           ("val", n_val, base.seed + 1),
                           ("test", n_test, base.seed + 2)):
        corpus = generate_corpus(replace(base, n_sentences=n, seed=seed),
                                 split_tag=split)
        path = out / f"{split}.conll"
        write_conll(corpus, path)
        stats = compute_stats(corpus)
        print(f"{path}: {stats.n_sentences} sentences, "
              f"rho_majority={stats.rho_majority:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    bundle = load_corpus_bundle(cfg)
    if cfg.framework != "sequential":
        raise ValueError("the train command supports the sequential framework; "
                         "use `experiment` for span-detection runs")
    arm = cfg.arms[0]
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    train_split = bundle.train
    vocab = build_vocab(train_split, cfg.min_frequency)
    weights = None
    if arm.loss.base_variant in WEIGHTED_VARIANTS:
        weights = compute_class_weights(compute_stats(train_split),
                                        bundle.scheme, arm.loss.base_variant,
                                        beta=arm.loss.beta)
    model_cfg = ModelConfig(vocab_size=vocab.size,
                            n_classes=bundle.scheme.n_classes,
                            seed=seed, **cfg.model)
    settings = TrainSettings(epochs=cfg.epochs, batch_size=cfg.batch_size,
                             learning_rate=cfg.learning_rate, seed=seed)
    params, trace = train_sequence_model(train_split, vocab, model_cfg,
                                         arm.loss, weights, settings)
    out = _out_dir(args)
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, model_cfg, params, vocab=vocab, scheme=bundle.scheme)
    print(f"trained arm {arm.name!r} for {settings.epochs} epochs "
          f"(final loss {trace[-1]:.6f}); checkpoint at {ckpt}")
    for split_name, split in (("val", bundle.val), ("test", bundle.test)):
        report = evaluate_sequence_model(params, split, vocab, model_cfg)
        print(f"{split_name}: macro-F1 {report.macro.f1:.4f}  "
              f"entity macro-F1 {report.entity_macro.f1:.4f}  "
              f"word acc {report.word_accuracy:.4f}")
        (out / f"{split_name}.metrics.tsv").write_text(metrics_tsv(report),
                                                       encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    model_cfg, params, vocab, scheme = load_checkpoint(args.checkpoint)
    if vocab is None or scheme is None:
        raise ValueError("checkpoint lacks vocabulary/label scheme metadata; "
                         "re-train with the current version")
    corpus = read_conll(args.corpus, scheme=scheme)
    report = evaluate_sequence_model(params, corpus, vocab, model_cfg)
    print(f"macro-F1 {report.macro.f1:.4f}  "
          f"entity macro-F1 {report.entity_macro.f1:.4f}  "
          f"sentence acc {report.sentence_accuracy:.4f}  "
          f"word acc {report.word_accuracy:.4f}")
    if args.out_dir:
        out = _out_dir(args)
        (out / "metrics.tsv").write_text(metrics_tsv(report), encoding="utf-8")
        (out / "metrics.md").write_text(metrics_markdown(report), encoding="utf-8")
        print(f"wrote {out / 'metrics.tsv'} and {out / 'metrics.md'}")
    else:
        print(metrics_tsv(report), end="")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    report = run_experiment(cfg)
    out = _out_dir(args)
    written = write_report_files(report, out)
    for path in written.values():
        print(f"wrote {path}")
    print()
    print(report_markdown(report))
    return 0


def cmd_search(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    result = grid_search(cfg, param=args.param)
    print(f"best {result.param} = {result.best_value:g} "
          f"({result.metric} = {result.best_score:.4f} on validation, "
          f"arm {result.arm!r})")
    out = _out_dir(args)
    path = out / f"search_{result.param}.tsv"
    path.write_text(search_tsv(result), encoding="utf-8")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "search": cmd_search,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

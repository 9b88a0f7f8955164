"""Experiment protocol: multi-seed trials across loss arms, undersampling
sweeps, grid search on validation F1, paired significance tests, and
TSV/markdown report emission."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (LabeledCorpus, LabelScheme, build_vocab, compute_stats,
                     read_conll, undersample)
from .losses import WEIGHTED_VARIANTS, LossConfig, compute_class_weights
from .model import ModelConfig
from .mrc import MrcModelConfig, convert_bio_to_mrc
from .stats import SeedAggregate, TTestResult, aggregate, paired_t_test
from .synthgen import SynthConfig, generate_corpus
from .train import (TrainSettings, evaluate_mrc_model, evaluate_sequence_model,
                    train_mrc_model, train_sequence_model)

DEFAULT_SEEDS = tuple(range(10))
DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
SWEEP_FRACTIONS = (3 / 4, 2 / 3, 1 / 2, 1 / 3, 1 / 10, 6 / 100, 3 / 100)

# reference trade-off weights tuned on the standard benchmarks with large
# pretrained encoders; reasonable starting points when skipping the search
REFERENCE_LAMBDAS = {
    ("conll2003", "sequential"): 0.175,
    ("ontonotes5.0", "sequential"): 0.125,
    ("kwdlc", "sequential"): 0.357,
    ("ner-wiki", "sequential"): 0.212,
    ("conll2003", "mrc"): 0.446,
}

SEARCH_RANGES = {"lambda": (0.0, 1.0), "beta": (1.0, 10.0), "gamma": (0.0, 10.0)}

SEQ_METRICS = ("precision", "recall", "f1", "entity_macro_f1", "majority_f1",
               "sentence_acc", "word_acc")
MRC_METRICS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class Arm:
    name: str
    loss: LossConfig


@dataclass(frozen=True)
class SearchSpec:
    param: str
    grid: tuple[float, ...]
    metric: str = "f1"
    arm: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.param not in SEARCH_RANGES:
            raise ValueError(f"search param must be one of {sorted(SEARCH_RANGES)}")
        if not self.grid:
            raise ValueError("empty search grid")
        lo, hi = SEARCH_RANGES[self.param]
        for v in self.grid:
            if not lo <= v <= hi:
                raise ValueError(
                    f"{self.param}={v} outside the allowed range [{lo}, {hi}]")


@dataclass(frozen=True)
class SynthSplits:
    base: SynthConfig
    n_train: int
    n_val: int
    n_test: int


@dataclass(frozen=True)
class ExperimentConfig:
    arms: tuple[Arm, ...]
    corpus_paths: dict | None = None      # {"train":, "val":, "test":}
    synth: SynthSplits | None = None
    framework: str = "sequential"         # "sequential" | "mrc"
    model: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    fractions: tuple[float, ...] = (1.0,)
    alpha: float = 0.05
    ttest_metric: str = "f1"
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    min_frequency: int = 1
    mrc_threshold: float = 0.5
    search: SearchSpec | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.arms:
            raise ValueError("need at least one arm")
        if len({arm.name for arm in self.arms}) != len(self.arms):
            raise ValueError("arm names must be unique")
        if (self.corpus_paths is None) == (self.synth is None):
            raise ValueError("exactly one corpus source (paths or synth) required")
        if self.framework not in ("sequential", "mrc"):
            raise ValueError(f"unknown framework {self.framework!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"fraction {f} outside (0, 1]")
        if self.framework == "mrc":
            for arm in self.arms:
                if arm.loss.base_variant in WEIGHTED_VARIANTS:
                    raise ValueError(
                        f"arm {arm.name!r}: {arm.loss.base_variant} is not "
                        "defined for the span-detection framework")

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        arms = tuple(Arm(name=a["name"], loss=LossConfig.from_json(a["loss"]))
                     for a in data["arms"])
        corpus = data.get("corpus", {})
        paths = None
        synth = None
        if "synth" in corpus:
            raw = dict(corpus["synth"])
            n_train = int(raw.pop("n_train", raw.pop("n_sentences", 1000)))
            # 8:1:1 split ratio by default
            n_val = int(raw.pop("n_val", max(1, round(n_train / 8))))
            n_test = int(raw.pop("n_test", max(1, round(n_train / 8))))
            synth = SynthSplits(base=SynthConfig(n_sentences=n_train, **raw),
                                n_train=n_train, n_val=n_val, n_test=n_test)
        else:
            paths = {k: corpus[k] for k in ("train", "val", "test")}
        train_block = data.get("train", {})
        search = None
        if "search" in data:
            s = data["search"]
            search = SearchSpec(param=s["param"],
                                grid=tuple(float(v) for v in s.get(
                                    "grid", DEFAULT_LAMBDA_GRID
                                    if s["param"] == "lambda" else ())),
                                metric=s.get("metric", "f1"),
                                arm=s.get("arm"),
                                seed=int(s.get("seed", 0)))
        return cls(
            arms=arms,
            corpus_paths=paths,
            synth=synth,
            framework=data.get("framework", "sequential"),
            model=dict(data.get("model", {})),
            seeds=tuple(int(s) for s in data.get("seeds", DEFAULT_SEEDS)),
            fractions=tuple(float(f) for f in data.get("fractions", (1.0,))),
            alpha=float(data.get("alpha", 0.05)),
            ttest_metric=data.get("ttest_metric", "f1"),
            epochs=int(train_block.get("epochs", 10)),
            batch_size=int(train_block.get("batch_size", 32)),
            learning_rate=float(train_block.get("learning_rate", 1e-3)),
            min_frequency=int(train_block.get("min_frequency", 1)),
            mrc_threshold=float(data.get("mrc", {}).get("threshold", 0.5)),
            search=search,
            jobs=int(data.get("jobs", 1)),
        )

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class CorpusBundle:
    train: LabeledCorpus
    val: LabeledCorpus
    test: LabeledCorpus

    @property
    def scheme(self) -> LabelScheme:
        return self.train.scheme


@dataclass(frozen=True)
class TrialResult:
    arm: str
    seed: int
    fraction: float
    train_loss: tuple[float, ...]
    val_metrics: dict[str, float]
    test_metrics: dict[str, float]


@dataclass(frozen=True)
class ArmSummary:
    arm: str
    fraction: float
    aggregates: dict[str, SeedAggregate]      # test-split metrics
    val_aggregates: dict[str, SeedAggregate]
    vs_baseline: TTestResult | None
    best_other: str | None
    vs_best_other: TTestResult | None


@dataclass(frozen=True)
class RunReport:
    framework: str
    baseline_arm: str
    ttest_metric: str
    alpha: float
    seeds: tuple[int, ...]
    fractions: tuple[float, ...]
    summaries: tuple[ArmSummary, ...]
    trials: tuple[TrialResult, ...]


@dataclass(frozen=True)
class SearchResult:
    param: str
    arm: str
    metric: str
    best_value: float
    best_score: float
    trace: tuple[tuple[float, float], ...]


def load_corpus_bundle(cfg: ExperimentConfig) -> CorpusBundle:
    if cfg.synth is not None:
        s = cfg.synth
        return CorpusBundle(
            train=generate_corpus(replace(s.base, n_sentences=s.n_train),
                                  split_tag="train"),
            val=generate_corpus(replace(s.base, n_sentences=s.n_val,
                                        seed=s.base.seed + 1), split_tag="val"),
            test=generate_corpus(replace(s.base, n_sentences=s.n_test,
                                         seed=s.base.seed + 2), split_tag="test"),
        )
    paths = cfg.corpus_paths
    # two passes so all splits share one scheme even if a label is missing
    # from one of the files
    label_names: set[str] = set()
    raw = {}
    for split in ("train", "val", "test"):
        raw[split] = read_conll(paths[split], split_tag=split)
        label_names.update(raw[split].scheme.classes)
    scheme = raw["train"].scheme
    if label_names - set(scheme.classes):
        categories = sorted({name[2:] for name in label_names if name != "O"})
        scheme = LabelScheme.from_categories(categories)
        raw = {split: read_conll(paths[split], scheme=scheme, split_tag=split)
               for split in raw}
    else:
        raw = {split: LabeledCorpus(scheme=scheme, sentences=c.sentences,
                                    split_tag=split)
               for split, c in raw.items()}
    return CorpusBundle(train=raw["train"], val=raw["val"], test=raw["test"])


def _sample_seed(seed: int, fraction: float) -> int:
    # one subsample per (fraction, seed), shared across arms so that
    # comparisons stay paired
    ss = np.random.SeedSequence(entropy=(seed, int(round(fraction * 10 ** 9))))
    return int(ss.generate_state(1)[0])


def _seq_metrics(report) -> dict[str, float]:
    return {
        "precision": report.macro.precision,
        "recall": report.macro.recall,
        "f1": report.macro.f1,
        "entity_macro_f1": report.entity_macro.f1,
        "majority_f1": report.majority_f1,
        "sentence_acc": report.sentence_accuracy,
        "word_acc": report.word_accuracy,
    }


def run_trial(bundle: CorpusBundle, cfg: ExperimentConfig, arm: Arm,
              seed: int, fraction: float) -> TrialResult:
    """Train one (arm, seed, fraction) condition and evaluate on val/test."""
    train_split = bundle.train
    if fraction < 1.0:
        train_split = undersample(train_split, fraction,
                                  _sample_seed(seed, fraction))
    vocab = build_vocab(train_split, cfg.min_frequency)
    settings = TrainSettings(epochs=cfg.epochs, batch_size=cfg.batch_size,
                             learning_rate=cfg.learning_rate, seed=seed)

    if cfg.framework == "sequential":
        weights = None
        if arm.loss.base_variant in WEIGHTED_VARIANTS:
            weights = compute_class_weights(compute_stats(train_split),
                                            bundle.scheme,
                                            arm.loss.base_variant,
                                            beta=arm.loss.beta)
        model_cfg = ModelConfig(vocab_size=vocab.size,
                                n_classes=bundle.scheme.n_classes,
                                seed=seed, **cfg.model)
        params, trace = train_sequence_model(
            train_split, vocab, model_cfg, arm.loss, weights, settings)
        val = _seq_metrics(evaluate_sequence_model(params, bundle.val, vocab,
                                                   model_cfg))
        test = _seq_metrics(evaluate_sequence_model(params, bundle.test, vocab,
                                                    model_cfg))
    else:
        mrc_cfg = MrcModelConfig(vocab_size=vocab.size,
                                 n_categories=len(bundle.scheme.entity_categories),
                                 seed=seed, **cfg.model)
        examples = convert_bio_to_mrc(train_split)
        params, trace = train_mrc_model(examples, vocab, mrc_cfg, arm.loss,
                                        settings)
        _, val_macro = evaluate_mrc_model(params, bundle.val, vocab, mrc_cfg,
                                          cfg.mrc_threshold)
        _, test_macro = evaluate_mrc_model(params, bundle.test, vocab, mrc_cfg,
                                           cfg.mrc_threshold)
        val = {"precision": val_macro.precision, "recall": val_macro.recall,
               "f1": val_macro.f1}
        test = {"precision": test_macro.precision, "recall": test_macro.recall,
                "f1": test_macro.f1}

    return TrialResult(arm=arm.name, seed=seed, fraction=fraction,
                       train_loss=tuple(trace), val_metrics=val,
                       test_metrics=test)


def _run_trial_task(args):
    bundle, cfg, arm, seed, fraction = args
    try:
        return run_trial(bundle, cfg, arm, seed, fraction)
    except Exception as exc:
        raise RuntimeError(
            f"trial failed (arm={arm.name!r}, seed={seed}, "
            f"fraction={fraction})") from exc


def run_experiment(cfg: ExperimentConfig,
                   bundle: CorpusBundle | None = None) -> RunReport:
    """All (fraction x arm x seed) trials, aggregated and significance-tested."""
    if len(cfg.arms) >= 2 and len(cfg.seeds) < 2:
        raise ValueError("comparing arms requires at least two seeds")
    if bundle is None:
        bundle = load_corpus_bundle(cfg)

    tasks = [(bundle, cfg, arm, seed, fraction)
             for fraction in cfg.fractions
             for arm in cfg.arms
             for seed in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_trial_task, tasks, chunksize=1))
    else:
        results = [_run_trial_task(t) for t in tasks]

    by_key: dict[tuple[float, str], list[TrialResult]] = {}
    for res in results:
        by_key.setdefault((res.fraction, res.arm), []).append(res)
    for key in by_key:
        by_key[key].sort(key=lambda r: r.seed)

    metric = cfg.ttest_metric
    baseline = cfg.arms[0].name
    summaries = []
    for fraction in cfg.fractions:
        arm_scores = {
            arm.name: [r.test_metrics[metric] for r in by_key[fraction, arm.name]]
            for arm in cfg.arms}
        for arm in cfg.arms:
            trials = by_key[fraction, arm.name]
            names = trials[0].test_metrics.keys()
            aggregates = {
                m: aggregate([r.test_metrics[m] for r in trials]) for m in names}
            val_aggregates = {
                m: aggregate([r.val_metrics[m] for r in trials]) for m in names}
            vs_baseline = None
            best_other = None
            vs_best = None
            if len(cfg.arms) >= 2 and len(cfg.seeds) >= 2:
                if arm.name != baseline:
                    vs_baseline = paired_t_test(arm_scores[arm.name],
                                                arm_scores[baseline], cfg.alpha)
                others = [a.name for a in cfg.arms if a.name != arm.name]
                best_other = max(
                    others, key=lambda n: float(np.mean(arm_scores[n])))
                vs_best = paired_t_test(arm_scores[arm.name],
                                        arm_scores[best_other], cfg.alpha)
            summaries.append(ArmSummary(
                arm=arm.name, fraction=fraction, aggregates=aggregates,
                val_aggregates=val_aggregates, vs_baseline=vs_baseline,
                best_other=best_other, vs_best_other=vs_best))

    return RunReport(framework=cfg.framework, baseline_arm=baseline,
                     ttest_metric=metric, alpha=cfg.alpha, seeds=cfg.seeds,
                     fractions=cfg.fractions, summaries=tuple(summaries),
                     trials=tuple(results))


def grid_search(cfg: ExperimentConfig, param: str | None = None,
                grid: Sequence[float] | None = None,
                bundle: CorpusBundle | None = None) -> SearchResult:
    """One trial per grid value on a single fixed seed; maximizes the
    validation metric; ties go to the smaller parameter value."""
    spec = cfg.search
    if param is None:
        if spec is None:
            raise ValueError("no search spec in config and no param given")
    elif spec is not None and spec.param == param and grid is None:
        pass  # config spec already describes this search
    else:
        if grid is not None:
            values = tuple(float(v) for v in grid)
        elif param == "lambda":
            values = DEFAULT_LAMBDA_GRID
        else:
            values = ()
        if not values:
            raise ValueError(f"search over {param!r} needs an explicit grid")
        spec = SearchSpec(param=param, grid=values,
                          metric=spec.metric if spec else "f1",
                          arm=spec.arm if spec else None,
                          seed=spec.seed if spec else 0)
    if bundle is None:
        bundle = load_corpus_bundle(cfg)

    arm = _resolve_search_arm(cfg, spec)
    trace = []
    best_value = None
    best_score = -np.inf
    for value in sorted(spec.grid):
        candidate = Arm(name=arm.name, loss=_with_param(arm.loss, spec.param, value))
        result = run_trial(bundle, cfg, candidate, spec.seed, 1.0)
        score = result.val_metrics[spec.metric]
        trace.append((value, score))
        if score > best_score:
            best_score = score
            best_value = value
    return SearchResult(param=spec.param, arm=arm.name, metric=spec.metric,
                        best_value=best_value, best_score=best_score,
                        trace=tuple(trace))


def _with_param(loss: LossConfig, param: str, value: float) -> LossConfig:
    if param == "lambda":
        return loss.with_lambda(value)
    if param == "beta":
        return replace(loss, beta=value)
    return replace(loss, gamma=value)


def _resolve_search_arm(cfg: ExperimentConfig, spec: SearchSpec) -> Arm:
    if spec.arm is not None:
        for arm in cfg.arms:
            if arm.name == spec.arm:
                return arm
        raise ValueError(f"search arm {spec.arm!r} not found")
    wanted = {"lambda": lambda a: a.loss.mom_enabled,
              "beta": lambda a: a.loss.base_variant == "WCE2",
              "gamma": lambda a: a.loss.base_variant == "FL"}[spec.param]
    for arm in cfg.arms:
        if wanted(arm):
            return arm
    raise ValueError(f"no arm is sensitive to {spec.param!r}")


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _ttest_cells(t: TTestResult | None) -> list[str]:
    if t is None:
        return ["", "", ""]
    t_text = _fmt(t.t) if np.isfinite(t.t) else str(t.t)
    return [t_text, _fmt(t.p), str(int(t.significant))]


def report_tsv(report: RunReport) -> str:
    metric = report.ttest_metric
    metric_names = list(report.summaries[0].aggregates.keys())
    header = ["fraction", "arm", "n_seeds"]
    for m in metric_names:
        header += [f"{m}_mean", f"{m}_std"]
    header += [f"delta_{metric}_vs_baseline", "t_vs_baseline", "p_vs_baseline",
               "significant_vs_baseline", "best_other", "t_vs_best_other",
               "p_vs_best_other", "significant_vs_best_other"]
    lines = ["\t".join(header)]
    base_mean = {
        s.fraction: s.aggregates[metric].mean
        for s in report.summaries if s.arm == report.baseline_arm}
    for s in report.summaries:
        row = [_fmt(s.fraction), s.arm, str(len(report.seeds))]
        for m in metric_names:
            row += [_fmt(s.aggregates[m].mean), _fmt(s.aggregates[m].std)]
        row.append(_fmt(s.aggregates[metric].mean - base_mean[s.fraction]))
        row += _ttest_cells(s.vs_baseline)
        row.append(s.best_other or "")
        row += _ttest_cells(s.vs_best_other)
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def trials_tsv(report: RunReport) -> str:
    metric_names = list(report.trials[0].test_metrics.keys())
    header = ["fraction", "arm", "seed", "final_train_loss"]
    header += [f"val_{m}" for m in metric_names]
    header += [f"test_{m}" for m in metric_names]
    lines = ["\t".join(header)]
    for r in sorted(report.trials, key=lambda r: (r.fraction, r.arm, r.seed)):
        row = [_fmt(r.fraction), r.arm, str(r.seed), _fmt(r.train_loss[-1])]
        row += [_fmt(r.val_metrics[m]) for m in metric_names]
        row += [_fmt(r.test_metrics[m]) for m in metric_names]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def report_markdown(report: RunReport) -> str:
    """Per-fraction results table: best F1 bolded, significance footnoted."""
    metric = report.ttest_metric
    out = []
    for fraction in report.fractions:
        rows = [s for s in report.summaries if s.fraction == fraction]
        base = next(s for s in rows if s.arm == report.baseline_arm)
        best_f1 = max(s.aggregates[metric].mean for s in rows)
        out.append(f"### fraction {fraction:g} ({report.framework})\n")
        out.append("| Arm | Prec. | Rec. | F1 | Delta |")
        out.append("| --- | ---: | ---: | ---: | ---: |")
        footnotes = []
        for s in rows:
            agg = s.aggregates
            f1 = agg[metric].mean
            f1_text = f"{100 * f1:.2f}"
            if f1 == best_f1:
                f1_text = f"**{f1_text}**"
            note = ""
            if (s.vs_best_other is not None and s.vs_best_other.significant
                    and f1 == best_f1):
                note = " †"
                footnotes.append(
                    f"† {s.arm}: significant vs {s.best_other} "
                    f"(p={s.vs_best_other.p:.4g}, alpha={report.alpha})")
            delta = 100 * (f1 - base.aggregates[metric].mean)
            out.append(
                f"| {s.arm}{note} | {100 * agg['precision'].mean:.2f} | "
                f"{100 * agg['recall'].mean:.2f} | {f1_text} | "
                f"({delta:+.2f}) |")
        out.append("")
        out.extend(footnotes)
        out.append("")
    return "\n".join(out)


def search_tsv(result: SearchResult) -> str:
    lines = [f"param\tvalue\t{result.metric}\tbest"]
    for value, score in result.trace:
        mark = "1" if value == result.best_value else "0"
        lines.append(f"{result.param}\t{_fmt(value)}\t{_fmt(score)}\t{mark}")
    return "\n".join(lines) + "\n"


def write_report_files(report: RunReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.tsv": report_tsv(report),
        "trials.tsv": trials_tsv(report),
        "report.md": report_markdown(report),
    }
    written = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written

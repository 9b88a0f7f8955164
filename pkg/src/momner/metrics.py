"""Evaluation metrics: token-level P/R/F1 with macro averaging, merged
B/I category scores, sentence- and word-level accuracy, length-binned
accuracy, and exact-match span F1."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import LabeledCorpus, LabelScheme, bin_by_length


class Scores(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Span:
    category: str
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad span bounds ({self.start}, {self.end})")


@dataclass(frozen=True)
class TokenScoreReport:
    counts: dict[str, tuple[int, int, int]]  # class -> (tp, fp, fn)
    per_class: dict[str, Scores]
    macro: Scores            # over classes seen in gold or predictions
    entity_macro: Scores     # same, excluding the majority class
    n_tokens: int


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[str, Scores]
    merged: dict[str, Scores]   # B/I merged per category, plus the majority row
    macro: Scores
    entity_macro: Scores
    majority_f1: float
    sentence_accuracy: float
    word_accuracy: float
    bin_sentence_accuracy: dict[str, float | None]
    span_macro: Scores


def _prf(tp: int, fp: int, fn: int) -> Scores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(precision, recall, f1)


def _macro(per_class: dict[str, Scores], include: Iterable[str]) -> Scores:
    names = [n for n in include if n in per_class]
    if not names:
        return Scores(0.0, 0.0, 0.0)
    return Scores(
        float(np.mean([per_class[n].precision for n in names])),
        float(np.mean([per_class[n].recall for n in names])),
        float(np.mean([per_class[n].f1 for n in names])),
    )


def token_scores(gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]],
                 scheme: LabelScheme) -> TokenScoreReport:
    """Per-class confusion counts and P/R/F1 over aligned label sequences.

    The macro mean runs over classes appearing in the gold or the predicted
    labels; ``entity_macro`` additionally drops the majority class.
    """
    if len(gold) != len(pred):
        raise ValueError("gold and predictions differ in sentence count")
    tp: Counter[int] = Counter()
    fp: Counter[int] = Counter()
    fn: Counter[int] = Counter()
    n_tokens = 0
    for g_sent, p_sent in zip(gold, pred):
        if len(g_sent) != len(p_sent):
            raise ValueError("gold and predicted sentence lengths differ")
        for g, p in zip(g_sent, p_sent):
            n_tokens += 1
            if g == p:
                tp[g] += 1
            else:
                fn[g] += 1
                fp[p] += 1
    seen = sorted(set(tp) | set(fp) | set(fn))
    counts = {scheme.classes[i]: (tp[i], fp[i], fn[i]) for i in seen}
    per_class = {name: _prf(*c) for name, c in counts.items()}
    macro = _macro(per_class, per_class.keys())
    entity_macro = _macro(
        per_class, [n for n in per_class if n != scheme.majority_class])
    return TokenScoreReport(counts=counts, per_class=per_class, macro=macro,
                            entity_macro=entity_macro, n_tokens=n_tokens)


def merge_bi(per_class: dict[str, Scores], scheme: LabelScheme) -> dict[str, Scores]:
    """Average B-/I- member scores per category; keeps the majority row."""
    merged: dict[str, Scores] = {}
    for cat in scheme.entity_categories:
        members = [per_class[name] for name in (f"B-{cat}", f"I-{cat}")
                   if name in per_class]
        if members:
            merged[cat] = Scores(*(float(np.mean([m[i] for m in members]))
                                   for i in range(3)))
    if scheme.majority_class in per_class:
        merged[scheme.majority_class] = per_class[scheme.majority_class]
    return merged


def sentence_accuracy(gold: Sequence[Sequence[int]],
                      pred: Sequence[Sequence[int]]) -> float:
    """Fraction of sentences whose every token label matches."""
    if len(gold) != len(pred):
        raise ValueError("gold and predictions differ in sentence count")
    if not gold:
        raise ValueError("no sentences to evaluate")
    hits = sum(1 for g, p in zip(gold, pred) if list(g) == list(p))
    return hits / len(gold)


def word_accuracy(gold: Sequence[Sequence[int]],
                  pred: Sequence[Sequence[int]]) -> float:
    """Fraction of tokens labeled correctly."""
    total = 0
    hits = 0
    for g_sent, p_sent in zip(gold, pred):
        if len(g_sent) != len(p_sent):
            raise ValueError("gold and predicted sentence lengths differ")
        total += len(g_sent)
        hits += sum(1 for g, p in zip(g_sent, p_sent) if g == p)
    if total == 0:
        raise ValueError("no tokens to evaluate")
    return hits / total


def bio_to_spans(labels: Sequence[int], scheme: LabelScheme) -> list[Span]:
    """Extract entity spans; tolerates BIO violations in predictions.

    An I- label without a compatible open span starts a new span there
    (conventional repair); O or a category break closes the open span.
    """
    spans: list[Span] = []
    open_cat: str | None = None
    open_start = 0
    for i, lab in enumerate(labels):
        prefix, cat = scheme.prefix_category(lab)
        if prefix == "B" or (prefix == "I" and cat != open_cat):
            if open_cat is not None:
                spans.append(Span(open_cat, open_start, i - 1))
            open_cat, open_start = cat, i
        elif prefix == "O":
            if open_cat is not None:
                spans.append(Span(open_cat, open_start, i - 1))
            open_cat = None
    if open_cat is not None:
        spans.append(Span(open_cat, open_start, len(labels) - 1))
    return spans


def spans_to_bio(spans: Iterable[Span], length: int, scheme: LabelScheme) -> list[int]:
    """Render non-overlapping spans back to BIO label indices."""
    labels = [scheme.majority_index] * length
    for span in spans:
        if span.end >= length:
            raise ValueError(f"span {span} exceeds sentence length {length}")
        b = scheme.index(f"B-{span.category}")
        labels[span.start] = b
        for i in range(span.start + 1, span.end + 1):
            labels[i] = b + 1
    return labels


def span_confusions(gold: Sequence[Span], pred: Sequence[Span]) -> dict[str, tuple[int, int, int]]:
    """Exact-match (category, start, end) counts; each gold span matches once."""
    categories = {s.category for s in gold} | {s.category for s in pred}
    out = {}
    for cat in sorted(categories):
        g = Counter((s.start, s.end) for s in gold if s.category == cat)
        p = Counter((s.start, s.end) for s in pred if s.category == cat)
        tp = sum(min(g[key], p[key]) for key in g)
        out[cat] = (tp, sum(p.values()) - tp, sum(g.values()) - tp)
    return out


def span_f1(gold: Sequence[Span], pred: Sequence[Span]) -> Scores:
    """Macro P/R/F1 over categories with exact start/end/category matching."""
    confusions = span_confusions(gold, pred)
    if not confusions:
        return Scores(0.0, 0.0, 0.0)
    per_cat = {cat: _prf(*c) for cat, c in confusions.items()}
    return _macro(per_cat, per_cat.keys())


def span_f1_corpus(gold_per_sentence: Sequence[Sequence[Span]],
                   pred_per_sentence: Sequence[Sequence[Span]],
                   ) -> tuple[dict[str, Scores], Scores]:
    """Pool per-sentence span confusions, then score per category and macro."""
    totals: Counter = Counter()
    for gold, pred in zip(gold_per_sentence, pred_per_sentence):
        for cat, (tp, fp, fn) in span_confusions(gold, pred).items():
            totals[cat, "tp"] += tp
            totals[cat, "fp"] += fp
            totals[cat, "fn"] += fn
    categories = sorted({cat for cat, _ in totals})
    per_cat = {cat: _prf(totals[cat, "tp"], totals[cat, "fp"], totals[cat, "fn"])
               for cat in categories}
    return per_cat, _macro(per_cat, per_cat.keys())


def evaluate_sequence_predictions(corpus: LabeledCorpus,
                                  pred: Sequence[Sequence[int]]) -> MetricsReport:
    """Full metric suite for per-token predictions against a gold corpus."""
    gold = [s.labels for s in corpus.sentences]
    report = token_scores(gold, pred, corpus.scheme)
    majority = corpus.scheme.majority_class
    majority_f1 = report.per_class.get(majority, Scores(0, 0, 0)).f1

    bins = bin_by_length(corpus)
    bin_acc: dict[str, float | None] = {}
    for label, idx in bins.items():
        if not idx:
            bin_acc[label] = None
            continue
        bin_acc[label] = sentence_accuracy([gold[i] for i in idx],
                                           [pred[i] for i in idx])

    gold_spans = [bio_to_spans(g, corpus.scheme) for g in gold]
    pred_spans = [bio_to_spans(p, corpus.scheme) for p in pred]
    _, span_macro = span_f1_corpus(gold_spans, pred_spans)

    return MetricsReport(
        per_class=report.per_class,
        merged=merge_bi(report.per_class, corpus.scheme),
        macro=report.macro,
        entity_macro=report.entity_macro,
        majority_f1=majority_f1,
        sentence_accuracy=sentence_accuracy(gold, pred),
        word_accuracy=word_accuracy(gold, pred),
        bin_sentence_accuracy=bin_acc,
        span_macro=span_macro,
    )


def report_tsv(report: MetricsReport) -> str:
    """One row per class/category plus summary rows, tab-separated."""
    lines = ["row\tprecision\trecall\tf1"]
    for name, sc in report.per_class.items():
        lines.append(f"class:{name}\t{sc.precision:.6f}\t{sc.recall:.6f}\t{sc.f1:.6f}")
    for name, sc in report.merged.items():
        lines.append(f"merged:{name}\t{sc.precision:.6f}\t{sc.recall:.6f}\t{sc.f1:.6f}")
    for name, sc in (("macro", report.macro), ("entity_macro", report.entity_macro),
                     ("span_macro", report.span_macro)):
        lines.append(f"{name}\t{sc.precision:.6f}\t{sc.recall:.6f}\t{sc.f1:.6f}")
    lines.append(f"sentence_accuracy\t\t\t{report.sentence_accuracy:.6f}")
    lines.append(f"word_accuracy\t\t\t{report.word_accuracy:.6f}")
    for label, acc in report.bin_sentence_accuracy.items():
        shown = "" if acc is None else f"{acc:.6f}"
        lines.append(f"bin:{label}\t\t\t{shown}")
    return "\n".join(lines) + "\n"


def report_markdown(report: MetricsReport) -> str:
    """Merged-category table in the style of a per-entity results table."""
    lines = ["| Class | Prec. | Rec. | F1 |", "| --- | ---: | ---: | ---: |"]
    for name, sc in report.merged.items():
        lines.append(f"| {name} | {100 * sc.precision:.2f} | "
                     f"{100 * sc.recall:.2f} | {100 * sc.f1:.2f} |")
    lines.append(f"| macro | {100 * report.macro.precision:.2f} | "
                 f"{100 * report.macro.recall:.2f} | {100 * report.macro.f1:.2f} |")
    return "\n".join(lines) + "\n"

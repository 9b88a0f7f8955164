"""Span-detection reframing of BIO tagging: one binary start/end labeling
problem per (sentence, category) pair, a shared encoder with two sigmoid
heads conditioned on a learned category embedding, and threshold decoding
back to spans.

In this binary setting the majority is the ground-truth-0 positions, so the
majority-only loss term runs over exactly those.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import LabeledCorpus, validate_bio
from .losses import LossConfig, binary_token_core
from .metrics import Span, bio_to_spans
from .model import ModelParameters


@dataclass(frozen=True)
class MrcExample:
    tokens: tuple[str, ...]
    category: str
    category_index: int
    start_labels: tuple[int, ...]
    end_labels: tuple[int, ...]

    def __post_init__(self):
        n = len(self.tokens)
        if len(self.start_labels) != n or len(self.end_labels) != n:
            raise ValueError("start/end label vectors must match sentence length")
        if sum(self.start_labels) != sum(self.end_labels):
            raise ValueError("start and end mark counts differ")


@dataclass(frozen=True)
class SpanPrediction:
    category: str
    start: int
    end: int
    score: float  # product of start and end probabilities

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad span bounds ({self.start}, {self.end})")

    def as_span(self) -> Span:
        return Span(self.category, self.start, self.end)


def convert_bio_to_mrc(corpus: LabeledCorpus) -> list[MrcExample]:
    """One example per (sentence, category), marking gold span boundaries."""
    violations = validate_bio(corpus)
    if violations:
        first = violations[0]
        raise ValueError(
            f"corpus is not BIO-valid ({len(violations)} violations; first: "
            f"sentence {first.sentence_index}, token {first.token_index}, "
            f"{first.reason})")
    categories = corpus.scheme.entity_categories
    examples = []
    for sent in corpus.sentences:
        spans = bio_to_spans(sent.labels, corpus.scheme)
        for ci, cat in enumerate(categories):
            starts = [0] * len(sent)
            ends = [0] * len(sent)
            for span in spans:
                if span.category == cat:
                    starts[span.start] = 1
                    ends[span.end] = 1
            examples.append(MrcExample(
                tokens=sent.tokens, category=cat, category_index=ci,
                start_labels=tuple(starts), end_labels=tuple(ends)))
    return examples


def write_mrc_jsonl(examples: Sequence[MrcExample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "tokens": list(ex.tokens),
                "category": ex.category,
                "starts": list(ex.start_labels),
                "ends": list(ex.end_labels),
            }) + "\n")


def read_mrc_jsonl(path, categories: Sequence[str]) -> list[MrcExample]:
    index = {cat: i for i, cat in enumerate(categories)}
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            examples.append(MrcExample(
                tokens=tuple(data["tokens"]),
                category=data["category"],
                category_index=index[data["category"]],
                start_labels=tuple(data["starts"]),
                end_labels=tuple(data["ends"])))
    return examples


@dataclass(frozen=True)
class MrcModelConfig:
    vocab_size: int
    n_categories: int
    embed_dim: int = 32
    context_radius: int = 2
    hidden_dim: int = 64
    max_len: int = 128
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "n_categories", "embed_dim", "hidden_dim",
                     "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def feature_dim(self) -> int:
        return (2 * self.context_radius + 1) * self.embed_dim


@dataclass
class MrcParameters:
    """Shared encoder blocks plus a per-category feature embedding."""

    core: ModelParameters          # w2/b2 hold the two binary heads
    category_embedding: np.ndarray  # (n_categories, feature_dim)

    def copy(self) -> "MrcParameters":
        return MrcParameters(core=self.core.copy(),
                             category_embedding=self.category_embedding.copy())


def init_mrc_params(cfg: MrcModelConfig) -> MrcParameters:
    rng = np.random.default_rng(cfg.seed)
    s = cfg.init_scale

    def uniform(*shape):
        return rng.uniform(-s, s, size=shape)

    core = ModelParameters(
        embedding=uniform(cfg.vocab_size, cfg.embed_dim),
        w1=uniform(cfg.feature_dim, cfg.hidden_dim),
        b1=np.zeros(cfg.hidden_dim),
        w2=uniform(cfg.hidden_dim, 2),
        b2=np.zeros(2),
    )
    return MrcParameters(core=core,
                         category_embedding=uniform(cfg.n_categories, cfg.feature_dim))


def mrc_forward_cached(params: MrcParameters, ids: np.ndarray,
                       category_index: int, context_radius: int,
                       pad_id: int = 0):
    """Returns (start_probs, end_probs, hidden, feats)."""
    ids = np.asarray(ids, dtype=np.int64)
    extra = params.category_embedding[category_index]
    probs, hidden, feats = kernels.sentence_forward(
        params.core.embedding, params.core.w1, params.core.b1,
        params.core.w2, params.core.b2, ids, extra, context_radius, pad_id,
        True)
    return probs[:, 0], probs[:, 1], hidden, feats


def mrc_forward(params: MrcParameters, ids: np.ndarray, category_index: int,
                context_radius: int, pad_id: int = 0):
    """Per-token start and end probabilities, each in (0, 1)."""
    start, end, _, _ = mrc_forward_cached(params, ids, category_index,
                                          context_radius, pad_id)
    return start, end


def _binary_denominator(cfg: LossConfig, n_positions: int,
                        max_len: int | None) -> float:
    if cfg.normalization == "by_length":
        return float(n_positions)
    if max_len is None:
        raise ValueError("by_M normalization requires max_len")
    return float(2 * max_len)


def mrc_loss(start_labels, end_labels, start_probs, end_probs,
             cfg: LossConfig, max_len: int | None = None) -> float:
    """Binary loss over both boundary vectors with the majority-or-minority
    mixture applied to the ground-truth-0 positions."""
    y = np.concatenate([np.asarray(start_labels, dtype=np.float64),
                        np.asarray(end_labels, dtype=np.float64)])
    p = np.concatenate([np.asarray(start_probs, dtype=np.float64),
                        np.asarray(end_probs, dtype=np.float64)])
    losses, _ = binary_token_core(y, p, cfg)
    denom = _binary_denominator(cfg, y.size, max_len)
    base = losses.sum() / denom
    if not cfg.mom_enabled:
        return float(base)
    mom = losses[y == 0.0].sum() / denom
    return float(cfg.lam * base + (1.0 - cfg.lam) * mom)


def mrc_loss_gradient(start_labels, end_labels, start_probs, end_probs,
                      cfg: LossConfig, max_len: int | None = None,
                      ) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. the two head logits, shape (M, 2)."""
    m = len(start_labels)
    y = np.concatenate([np.asarray(start_labels, dtype=np.float64),
                        np.asarray(end_labels, dtype=np.float64)])
    p = np.concatenate([np.asarray(start_probs, dtype=np.float64),
                        np.asarray(end_probs, dtype=np.float64)])
    losses, dllp = binary_token_core(y, p, cfg)
    denom = _binary_denominator(cfg, y.size, max_len)
    if cfg.mom_enabled:
        is_majority = (y == 0.0).astype(np.float64)
        coeff = (cfg.lam + (1.0 - cfg.lam) * is_majority) / denom
    else:
        coeff = np.full(y.size, 1.0 / denom)
    loss = float((coeff * losses).sum())
    dp = coeff * dllp
    dlogit = dp * p * (1.0 - p)  # sigmoid chain
    return loss, np.stack([dlogit[:m], dlogit[m:]], axis=1)


def decode_spans(start_probs, end_probs, threshold: float = 0.5,
                 category: str = "") -> list[SpanPrediction]:
    """Threshold both vectors, then pair each start with the nearest
    unconsumed end at an index >= the start; unpaired marks are dropped."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    start_probs = np.asarray(start_probs, dtype=np.float64)
    end_probs = np.asarray(end_probs, dtype=np.float64)
    starts = np.flatnonzero(start_probs >= threshold)
    ends = np.flatnonzero(end_probs >= threshold)
    predictions = []
    next_end = 0
    for s in starts:
        while next_end < ends.size and ends[next_end] < s:
            next_end += 1
        if next_end == ends.size:
            break
        e = int(ends[next_end])
        next_end += 1
        predictions.append(SpanPrediction(
            category=category, start=int(s), end=e,
            score=float(start_probs[s] * end_probs[e])))
    return predictions
